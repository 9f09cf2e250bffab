"""
Federation server - transport-free state machine over GFED frames

Flow: every client sends Hello; once all expected clients have registered,
the server sends Broadcast(round 0) to each. When all Updates for a round are
in, it aggregates, sends RoundDone with the new global Shared parameters and
then either the next Broadcast or Shutdown.
"""

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from gridfed.core.errors import ContractViolation, RoundAbortedError
from gridfed.fed import protocol
from gridfed.fed.aggregation import ClientUpdate, aggregate
from gridfed.fed.orchestrator import RoundState, apply_server_step
from gridfed.fed.protocol import Message, MessageType

logger = logging.getLogger(__name__)

Outgoing = List[Tuple[int, bytes]]


class FederationServer:
    """Feed it inbound frames, send back the (client_id, frame) pairs it returns"""

    def __init__(self, initial_shared: np.ndarray, expected_clients: int, rounds: int,
                 eta: float = 1.0):
        if expected_clients <= 0:
            raise ContractViolation("expected_clients must be positive")
        if rounds < 0:
            raise ContractViolation("rounds must be >= 0")
        self.expected_clients = expected_clients
        self.rounds = rounds
        self.state = RoundState(0, np.asarray(initial_shared, dtype=np.float64).copy(), {}, eta)
        self.registered: List[int] = []
        self.pending: Dict[int, ClientUpdate] = {}
        self.history: List[np.ndarray] = [self.state.global_shared.copy()]
        self.aggregation_calls = 0
        self.started = False
        self.finished = False
        self.aborted: Optional[RoundAbortedError] = None

    def status(self) -> dict:
        return {
            "round": self.state.round,
            "rounds": self.rounds,
            "registered": sorted(self.registered),
            "expected_clients": self.expected_clients,
            "pending_updates": sorted(self.pending),
            "aggregation_calls": self.aggregation_calls,
            "finished": self.finished,
            "aborted": self.aborted is not None,
        }

    def abort(self, client_id: int, cause: BaseException) -> RoundAbortedError:
        """Stop the federation mid-round; the global Shared parameters stay as they were"""
        if self.aborted is None:
            self.aborted = RoundAbortedError(self.state.round, client_id, cause)
            self.pending = {}
            self.finished = True
            logger.warning(f"⚠️ Round {self.state.round} aborted by client {client_id}: {str(cause)}")
        return self.aborted

    def handle(self, data: bytes) -> Outgoing:
        return self.handle_message(protocol.decode_message(data))

    def handle_message(self, message: Message) -> Outgoing:
        if self.finished:
            raise ContractViolation("Federation already finished")
        if message.msg_type == MessageType.HELLO:
            return self._on_hello(message)
        if message.msg_type == MessageType.UPDATE:
            return self._on_update(message)
        raise ContractViolation(f"Server does not accept {message.msg_type.name} messages")

    def _on_hello(self, message: Message) -> Outgoing:
        if self.started:
            raise ContractViolation(f"Client {message.client_id} joined after round 0 started")
        if message.client_id in self.registered:
            raise ContractViolation(f"Client {message.client_id} registered twice")
        self.registered.append(message.client_id)
        logger.info(f"Client {message.client_id} registered "
                    f"({len(self.registered)}/{self.expected_clients})")
        if len(self.registered) < self.expected_clients:
            return []
        self.started = True
        if self.rounds == 0:
            return self._finish()
        return self._broadcast()

    def _on_update(self, message: Message) -> Outgoing:
        update = protocol.client_update(message)
        if update.client_id not in self.registered:
            raise ContractViolation(f"Update from unregistered client {update.client_id}")
        if update.round != self.state.round:
            raise ContractViolation(
                f"Update for round {update.round} while server is in round {self.state.round}")
        if update.client_id in self.pending:
            raise ContractViolation(f"Duplicate update from client {update.client_id}")
        if update.shared_params.size != self.state.global_shared.size:
            raise ContractViolation(
                f"Update carries {update.shared_params.size} values, "
                f"expected {self.state.global_shared.size}")
        self.pending[update.client_id] = update
        if len(self.pending) < self.expected_clients:
            return []
        return self._complete_round()

    def _complete_round(self) -> Outgoing:
        averaged = aggregate(list(self.pending.values()))
        self.aggregation_calls += 1
        finished_round = self.state.round
        new_shared = apply_server_step(self.state.global_shared, averaged, self.state.eta)
        self.state = RoundState(finished_round + 1, new_shared, {}, self.state.eta)
        self.history.append(new_shared.copy())
        self.pending = {}
        logger.info(f"Round {finished_round} aggregated")

        out = [(cid, protocol.encode_message(protocol.round_done(finished_round, cid, new_shared)))
               for cid in sorted(self.registered)]
        if self.state.round >= self.rounds:
            return out + self._finish()
        return out + self._broadcast()

    def _broadcast(self) -> Outgoing:
        shared = self.state.global_shared
        return [(cid, protocol.encode_message(protocol.broadcast(self.state.round, cid, shared)))
                for cid in sorted(self.registered)]

    def _finish(self) -> Outgoing:
        self.finished = True
        logger.info(f"✅ Federation finished after {self.state.round} rounds")
        return [(cid, protocol.encode_message(protocol.shutdown(self.state.round, cid)))
                for cid in sorted(self.registered)]


class FederationClientSession:
    """Client half of the protocol around a BuildingClient"""

    def __init__(self, client, local_updates: int, on_round_done=None):
        self.client = client
        self.local_updates = local_updates
        self.on_round_done = on_round_done
        self.rounds_done = 0
        self.finished = False
        self.last_round = None

    def hello(self) -> bytes:
        return protocol.encode_message(protocol.hello(self.client.client_id))

    def handle(self, data: bytes) -> List[bytes]:
        message = protocol.decode_message(data)
        if message.client_id != self.client.client_id:
            raise ContractViolation(
                f"Frame for client {message.client_id} reached client {self.client.client_id}")
        if message.msg_type == MessageType.BROADCAST:
            self.client.load_shared(message.payload)
            self.last_round = self.client.local_round(message.round, self.local_updates)
            return [protocol.encode_message(protocol.update_message(self.last_round.update))]
        if message.msg_type == MessageType.ROUND_DONE:
            self.client.load_shared(message.payload)
            self.rounds_done += 1
            if self.on_round_done is not None:
                self.on_round_done(message.round, self.last_round)
            return []
        if message.msg_type == MessageType.SHUTDOWN:
            self.finished = True
            logger.info(f"Client {self.client.client_id} received shutdown")
            return []
        raise ContractViolation(f"Client does not accept {message.msg_type.name} messages")
