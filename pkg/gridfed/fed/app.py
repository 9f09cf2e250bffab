"""
Federation API - FastAPI app serving the GFED protocol over a websocket
"""

import asyncio
import logging
from datetime import datetime
from typing import Callable, Dict, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from gridfed.core.errors import ContractViolation, GridFedError
from gridfed.fed import protocol
from gridfed.fed.protocol import MessageType
from gridfed.fed.server import FederationServer

logger = logging.getLogger(__name__)

VERSION = "1.0.0"
CLOSE_REJECTED = 1003
CLOSE_ABORTED = 1011


def create_app(server: FederationServer,
               on_finished: Optional[Callable[[], None]] = None) -> FastAPI:
    app = FastAPI(
        title="GridFed Federation Server",
        description="FedAvg server for personalized TRPO microgrid agents",
        version=VERSION,
    )
    app.state.server = server
    connections: Dict[int, WebSocket] = {}
    lock = asyncio.Lock()
    app.state.lock = lock

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "timestamp": datetime.now().isoformat(),
            "version": VERSION,
        }

    @app.get("/api/fed-status")
    async def fed_status():
        """Round, registered clients and pending updates"""
        try:
            return server.status()
        except Exception as e:
            logger.error(f"Status error: {str(e)}")
            return {"status": "error", "message": str(e)}

    async def _close(websocket: WebSocket, code: int) -> None:
        try:
            await websocket.close(code=code)
        except Exception as e:
            logger.debug(f"Socket already closed: {str(e)}")

    async def _close_all(code: int) -> None:
        for websocket in list(connections.values()):
            await _close(websocket, code)
        connections.clear()

    async def _abort(client_id: int, cause: BaseException) -> None:
        server.abort(client_id, cause)
        await _close_all(CLOSE_ABORTED)
        if on_finished is not None:
            on_finished()

    @app.websocket("/ws/fed")
    async def federation_socket(websocket: WebSocket):
        """One GFED frame per binary websocket message"""
        await websocket.accept()
        owned = None
        try:
            while not server.finished:
                data = await websocket.receive_bytes()
                async with lock:
                    message = protocol.decode_message(data)
                    if owned is not None and message.client_id != owned:
                        raise ContractViolation(
                            f"Client {owned} sent a frame as client {message.client_id}")
                    outgoing = server.handle_message(message)
                    if message.msg_type == MessageType.HELLO:
                        owned = message.client_id
                        connections[owned] = websocket
                    sends = [(cid, connections.get(cid), frame) for cid, frame in outgoing]
                for cid, target, frame in sends:
                    try:
                        if target is None:
                            raise ConnectionError(f"client {cid} has no connection")
                        await target.send_bytes(frame)
                    except Exception as e:
                        await _abort(cid, e)
                        return
                if server.finished and on_finished is not None:
                    on_finished()
        except WebSocketDisconnect as e:
            if owned is not None and not server.finished:
                await _abort(owned, ConnectionError(f"client {owned} disconnected (code {e.code})"))
            else:
                logger.info(f"Client {owned} disconnected")
        except GridFedError as e:
            logger.error(f"Federation error from client {owned}: {str(e)}")
            if owned is not None and not server.finished:
                await _abort(owned, e)
            else:
                await _close(websocket, CLOSE_REJECTED)
        finally:
            if owned is not None and connections.get(owned) is websocket:
                del connections[owned]

    @app.get("/")
    async def root():
        return {"message": "GridFed federation server - connect clients to /ws/fed"}

    return app
