"""
Transports - in-memory loopback and websocket client for the GFED protocol
"""

import logging
from collections import deque
from typing import Dict, List, Optional, Sequence

from websockets.exceptions import ConnectionClosed
from websockets.sync.client import connect

from gridfed.core.errors import RoundAbortedError
from gridfed.fed.server import FederationClientSession, FederationServer

logger = logging.getLogger(__name__)


class LoopbackTransport:
    """Delivers frames between a server and sessions in one process, recording every frame"""

    def __init__(self, server: FederationServer, sessions: Sequence[FederationClientSession]):
        self.server = server
        self.sessions: Dict[int, FederationClientSession] = {
            s.client.client_id: s for s in sessions}
        self.frames: List[bytes] = []

    def run(self) -> FederationServer:
        to_server = deque()
        for cid in sorted(self.sessions):
            to_server.append(self.sessions[cid].hello())

        while to_server:
            frame = to_server.popleft()
            self.frames.append(frame)
            for cid, reply in self.server.handle(frame):
                self.frames.append(reply)
                to_server.extend(self.sessions[cid].handle(reply))
        return self.server


def run_websocket_client(url: str, session: FederationClientSession,
                         open_timeout: Optional[float] = 30.0) -> FederationClientSession:
    """Drive one client session over a websocket until the server sends Shutdown"""
    logger.info(f"Connecting client {session.client.client_id} to {url}")
    with connect(url, open_timeout=open_timeout, max_size=None) as ws:
        ws.send(session.hello())
        while not session.finished:
            try:
                data = ws.recv()
            except ConnectionClosed as e:
                raise RoundAbortedError(session.rounds_done, session.client.client_id, e) from e
            if isinstance(data, str):
                data = data.encode()
            for reply in session.handle(data):
                ws.send(reply)
    return session
