"""
Unit tests for FedAvg aggregation, the GFED protocol and federated rounds
"""

import struct
import time

import numpy as np
import pytest
from fastapi import WebSocket, WebSocketDisconnect
from fastapi.testclient import TestClient
from websockets.exceptions import ConnectionClosedError

from gridfed.core.errors import AggregationError, ContractViolation, FramingError, RoundAbortedError
from gridfed.core.settings import Variant
from gridfed.fed import protocol
from gridfed.fed.aggregation import ClientUpdate, aggregate
from gridfed.fed.app import CLOSE_ABORTED, CLOSE_REJECTED, create_app
from gridfed.fed.client import LocalRound
from gridfed.fed.orchestrator import FedAvgOrchestrator, RoundState
from gridfed.fed.protocol import FrameDecoder, MessageType, decode_message, encode_message
from gridfed.fed.server import FederationClientSession, FederationServer
from gridfed.fed.transport import LoopbackTransport, run_websocket_client
from gridfed.harness.runner import build_client, build_clients, initial_shared


def update(cid, params, n_k=1, round_index=0):
    return ClientUpdate(client_id=cid, n_k=n_k, shared_params=np.asarray(params, dtype=float),
                        round=round_index)


class StubClient:
    """Client handle that always reports injected Shared parameters"""

    def __init__(self, client_id, shared, n_k=1, fail=False):
        self.client_id = client_id
        self.shared = np.asarray(shared, dtype=float)
        self.n_k = n_k
        self.fail = fail

    def snapshot(self):
        return self.shared.copy()

    def restore(self, snap):
        self.shared = snap

    def load_shared(self, shared):
        pass

    def shared_values(self):
        return self.shared.copy()

    def personal_values(self):
        return np.zeros(0)

    def local_round(self, round_index, local_updates):
        if self.fail:
            raise RuntimeError("client crashed")
        return LocalRound(update(self.client_id, self.shared, self.n_k, round_index), [],
                          0.0, 0.0, 0.0)


class TestAggregate:
    """Test suite for FedAvg weighted means"""

    def test_equal_weights(self):
        """Test equal n_k gives the plain mean"""
        result = aggregate([update(0, [2, 4]), update(1, [4, 8])])
        assert np.array_equal(result, [3.0, 6.0])

    def test_sample_weights(self):
        """Test n = 1 and n = 3 weigh [0] and [4] to [3]"""
        result = aggregate([update(0, [0.0], n_k=1), update(1, [4.0], n_k=3)])
        assert np.array_equal(result, [3.0])

    def test_single_client_identity(self):
        """Test one client's parameters pass through unchanged"""
        params = np.random.default_rng(0).normal(size=20)
        assert np.array_equal(aggregate([update(3, params, n_k=7)]), params)

    def test_copies_are_a_fixed_point(self):
        """Test k identical updates aggregate to themselves"""
        params = np.random.default_rng(1).normal(size=50)
        for k in (2, 3, 5, 8):
            result = aggregate([update(i, params, n_k=i + 1) for i in range(k)])
            assert np.allclose(result, params, atol=1e-12, rtol=0)

    def test_random_weighted_means(self):
        """Test aggregate against a hand-computed weighted sum"""
        rng = np.random.default_rng(2)
        for _ in range(50):
            k = int(rng.integers(1, 6))
            params = rng.normal(size=(k, 10))
            counts = rng.integers(1, 100, size=k)
            expected = (counts[:, None] * params).sum(axis=0) / counts.sum()
            result = aggregate([update(i, params[i], int(counts[i])) for i in range(k)])
            assert np.allclose(result, expected, atol=1e-12, rtol=0)

    def test_order_independent(self):
        """Test arrival order does not change the result"""
        updates = [update(i, np.random.default_rng(i).normal(size=5), n_k=i + 2) for i in range(4)]
        assert aggregate(updates).tobytes() == aggregate(updates[::-1]).tobytes()

    def test_invalid_inputs(self):
        """Test every malformed batch of updates is rejected"""
        with pytest.raises(AggregationError):
            aggregate([])
        with pytest.raises(AggregationError):
            aggregate([update(0, [1.0], round_index=0), update(1, [1.0], round_index=1)])
        with pytest.raises(AggregationError):
            aggregate([update(0, [1.0]), update(1, [1.0, 2.0])])
        with pytest.raises(AggregationError):
            aggregate([update(2, [1.0]), update(2, [3.0])])
        with pytest.raises(AggregationError):
            update(0, [1.0], n_k=0)


class TestProtocol:
    """Test suite for GFED framing"""

    @pytest.fixture
    def message(self):
        rng = np.random.default_rng(3)
        return protocol.update_message(update(4, rng.normal(size=17), n_k=48, round_index=9))

    def test_round_trip(self, message):
        """Test decode(encode(m)) == m for an Update"""
        decoded = decode_message(encode_message(message))
        assert decoded == message
        restored = protocol.client_update(decoded)
        assert restored.n_k == 48
        assert restored.round == 9

    def test_header_layout(self, message):
        """Test the fixed 17-byte little-endian header"""
        frame = encode_message(message)
        magic, version, msg_type, round_index, client_id, length = struct.unpack_from(
            "<4sHBIHI", frame)
        assert (magic, version, msg_type, round_index, client_id) == (b"GFED", 1, 3, 9, 4)
        assert length == 8 * 18
        assert len(frame) == 17 + length

    def test_empty_payload_messages(self):
        """Test Hello and Shutdown carry no payload"""
        for message in (protocol.hello(2), protocol.shutdown(5, 2)):
            frame = encode_message(message)
            assert len(frame) == 17
            assert decode_message(frame) == message

    def test_bad_magic(self, message):
        """Test XFED is rejected at offset 0"""
        frame = b"XFED" + encode_message(message)[4:]
        with pytest.raises(FramingError) as exc:
            decode_message(frame)
        assert exc.value.offset == 0

    def test_bad_version(self, message):
        """Test unknown versions are rejected at offset 4"""
        frame = bytearray(encode_message(message))
        frame[4:6] = struct.pack("<H", 7)
        with pytest.raises(FramingError) as exc:
            decode_message(bytes(frame))
        assert exc.value.offset == 4

    def test_bad_type(self, message):
        """Test unknown message types are rejected at offset 6"""
        frame = bytearray(encode_message(message))
        frame[6] = 99
        with pytest.raises(FramingError) as exc:
            decode_message(bytes(frame))
        assert exc.value.offset == 6

    def test_truncated_payload(self, message):
        """Test a short payload names expected and available byte counts"""
        frame = encode_message(message)
        with pytest.raises(FramingError, match="expected 144 bytes, 140 available"):
            decode_message(frame[:-4])

    def test_truncated_header(self):
        """Test fewer than 17 bytes is a truncated header"""
        with pytest.raises(FramingError, match="header"):
            decode_message(b"GFED\x01\x00")

    def test_odd_payload_length(self, message):
        """Test payload lengths must be whole float64 values"""
        frame = bytearray(encode_message(message))
        frame[13:17] = struct.pack("<I", 143)
        with pytest.raises(FramingError) as exc:
            decode_message(bytes(frame))
        assert exc.value.offset == 13

    def test_stream_decoder(self, message):
        """Test FrameDecoder reassembles frames split across arbitrary chunks"""
        stream = b"".join(encode_message(m) for m in
                          (protocol.hello(1), message, protocol.shutdown(3, 1)))
        decoder = FrameDecoder()
        received = []
        for start in range(0, len(stream), 11):
            received.extend(decoder.feed(stream[start:start + 11]))
        assert [m.msg_type for m in received] == [MessageType.HELLO, MessageType.UPDATE,
                                                  MessageType.SHUTDOWN]
        assert received[1] == message


class TestOrchestrator:
    """Test suite for in-process FedAvg rounds"""

    def test_zero_local_updates_is_a_fixed_point(self, tiny_experiment):
        """Test clients echoing the broadcast leave the global parameters unchanged"""
        clients = build_clients(tiny_experiment, 0)
        orchestrator = FedAvgOrchestrator()
        state = orchestrator.initial_state(clients)
        new_state, _ = orchestrator.run_round(state, clients, 0)
        assert new_state.global_shared.tobytes() == state.global_shared.tobytes()
        assert new_state.round == 1
        assert orchestrator.aggregation_calls == 1

    def test_injected_parameters_are_averaged(self):
        """Test two clients with divergent Shared parameters average by n_k"""
        clients = [StubClient(0, [1.0, -2.0], n_k=24), StubClient(1, [3.0, 6.0], n_k=72)]
        state = RoundState(0, np.zeros(2))
        new_state, _ = FedAvgOrchestrator().run_round(state, clients, 0)
        assert np.array_equal(new_state.global_shared, [2.5, 4.0])

    def test_single_client_identity(self, tiny_experiment):
        """Test with one client the global equals that client's trained parameters"""
        client = build_client(tiny_experiment, 0, 2)
        orchestrator = FedAvgOrchestrator()
        state = orchestrator.initial_state([client])
        new_state, summary = orchestrator.run_round(state, [client], 1)
        assert np.array_equal(new_state.global_shared, summary.local[2].update.shared_params)
        assert np.array_equal(new_state.global_shared, client.shared_values())

    def test_failed_client_aborts_round(self, tiny_experiment, mocker):
        """Test a failing client raises and leaves every client as before the round"""
        clients = build_clients(tiny_experiment, 0)
        orchestrator = FedAvgOrchestrator()
        state = orchestrator.initial_state(clients)
        before = {c.client_id: c.model.get_flat().tobytes() for c in clients}
        pre_round = state.global_shared.copy()
        mocker.patch.object(clients[3], "local_round", side_effect=RuntimeError("disk full"))

        with pytest.raises(RoundAbortedError) as exc:
            orchestrator.run_round(state, clients, 1)
        assert exc.value.client_id == 3
        assert exc.value.round_index == 0
        assert state.global_shared.tobytes() == pre_round.tobytes()
        assert orchestrator.aggregation_calls == 0
        for c in clients:
            assert c.model.get_flat().tobytes() == before[c.client_id]

    def test_aborted_round_can_be_retried(self, tiny_experiment, mocker):
        """Test a retried round matches an uninterrupted one"""
        clean = build_clients(tiny_experiment, 0)
        reference = FedAvgOrchestrator()
        expected, _ = reference.run_round(reference.initial_state(clean), clean, 1)

        clients = build_clients(tiny_experiment, 0)
        orchestrator = FedAvgOrchestrator()
        state = orchestrator.initial_state(clients)
        mocker.patch.object(clients[4], "local_round", side_effect=RuntimeError("x"))
        with pytest.raises(RoundAbortedError):
            orchestrator.run_round(state, clients, 1)
        mocker.stopall()
        retried, _ = orchestrator.run_round(state, clients, 1)
        assert retried.global_shared.tobytes() == expected.global_shared.tobytes()

    def test_aggregation_error_aborts(self):
        """Test mismatched update lengths abort the round"""
        clients = [StubClient(0, [1.0]), StubClient(1, [1.0, 2.0])]
        with pytest.raises(RoundAbortedError) as exc:
            FedAvgOrchestrator().run_round(RoundState(0, np.zeros(1)), clients, 0)
        assert isinstance(exc.value.cause, AggregationError)


class TestFederationServer:
    """Test suite for the networked round state machine"""

    def run_loopback(self, config, seed=0):
        clients = build_clients(config, seed)
        server = FederationServer(initial_shared(config, seed), len(clients), config.rounds)
        sessions = [FederationClientSession(c, config.fed.local_updates) for c in clients]
        transport = LoopbackTransport(server, sessions)
        transport.run()
        return server, clients, transport

    def test_networked_matches_in_process(self, tiny_experiment):
        """Test loopback rounds reproduce the in-process global parameter sequence"""
        server, _, _ = self.run_loopback(tiny_experiment)

        clients = build_clients(tiny_experiment, 0)
        orchestrator = FedAvgOrchestrator()
        state = orchestrator.initial_state(clients)
        for _ in range(tiny_experiment.rounds):
            state, _ = orchestrator.run_round(state, clients, tiny_experiment.fed.local_updates)

        assert server.finished
        assert len(server.history) == len(orchestrator.history) == tiny_experiment.rounds + 1
        for remote, local in zip(server.history, orchestrator.history):
            assert remote.tobytes() == local.tobytes()

    def test_personal_parameters_never_on_the_wire(self, tiny_experiment):
        """Test no Personal value appears in any frame payload"""
        initial_personal = [c.personal_values() for c in build_clients(tiny_experiment, 0)]
        server, clients, transport = self.run_loopback(tiny_experiment)
        personal = set()
        for values in initial_personal + [c.personal_values() for c in clients]:
            personal.update(float(v) for v in values if v != 0.0)
        assert personal

        on_wire = set()
        for frame in transport.frames:
            on_wire.update(float(v) for v in decode_message(frame).payload)
        assert not personal & on_wire

    def test_message_flow(self, tiny_experiment):
        """Test Hello, then Broadcast/Update/RoundDone per round, then Shutdown"""
        _, clients, transport = self.run_loopback(tiny_experiment)
        kinds = [decode_message(f) for f in transport.frames]
        per_client = [m.msg_type for m in kinds if m.client_id == 0]
        rounds = tiny_experiment.rounds
        assert per_client == ([MessageType.HELLO]
                              + [MessageType.BROADCAST, MessageType.UPDATE,
                                 MessageType.ROUND_DONE] * rounds
                              + [MessageType.SHUTDOWN])

    def test_stale_update_rejected(self):
        """Test an Update for the wrong round is a contract violation"""
        server = FederationServer(np.zeros(3), expected_clients=1, rounds=2)
        server.handle(encode_message(protocol.hello(0)))
        stale = protocol.update_message(update(0, np.zeros(3), round_index=1))
        with pytest.raises(ContractViolation):
            server.handle(encode_message(stale))

    def test_duplicate_hello_rejected(self):
        """Test a client cannot register twice"""
        server = FederationServer(np.zeros(3), expected_clients=2, rounds=1)
        server.handle(encode_message(protocol.hello(0)))
        with pytest.raises(ContractViolation):
            server.handle(encode_message(protocol.hello(0)))

    def test_status(self):
        """Test status reports registration progress"""
        server = FederationServer(np.zeros(3), expected_clients=2, rounds=1)
        server.handle(encode_message(protocol.hello(1)))
        status = server.status()
        assert status["registered"] == [1]
        assert status["round"] == 0
        assert not status["finished"]


class TestFederationApp:
    """Test suite for the websocket federation endpoint"""

    @pytest.fixture
    def setup(self, tiny_experiment):
        config = tiny_experiment.model_copy(update={"rounds": 1, "eval_every": 1})
        client = build_client(config, 0, 0, Variant.FL_PERSONALIZATION)
        server = FederationServer(client.shared_values(), expected_clients=1, rounds=1)
        return create_app(server), server, client

    def test_health(self, setup):
        """Test the health route"""
        app, _, _ = setup
        response = TestClient(app).get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def run_session(self, app, client):
        session = FederationClientSession(client, local_updates=1)
        with TestClient(app) as test_client:
            with test_client.websocket_connect("/ws/fed") as ws:
                ws.send_bytes(session.hello())
                while not session.finished:
                    for reply in session.handle(ws.receive_bytes()):
                        ws.send_bytes(reply)
            return test_client.get("/api/fed-status").json()

    def test_single_client_round_over_websocket(self, setup):
        """Test one client completes a round through /ws/fed"""
        app, server, client = setup
        status = self.run_session(app, client)
        assert server.finished
        assert status["finished"]
        assert server.aggregation_calls == 1
        assert np.array_equal(server.state.global_shared, client.shared_values())
        assert not status["aborted"]

    def test_frames_sent_outside_the_lock(self, setup, mocker):
        """Test outgoing frames are written after the round lock is released"""
        app, server, client = setup
        original = WebSocket.send_bytes
        held = []

        async def send_bytes(websocket, data):
            held.append(app.state.lock.locked())
            await original(websocket, data)

        mocker.patch.object(WebSocket, "send_bytes", send_bytes)
        self.run_session(app, client)
        assert server.finished
        assert held and not any(held)

    def wait_for(self, test_client, predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if predicate(test_client.get("/api/fed-status").json()):
                return
            time.sleep(0.01)
        raise AssertionError("server never reached the expected status")

    def test_duplicate_hello_keeps_registered_socket(self):
        """Test a second Hello for a taken id is refused without unseating the first socket"""
        server = FederationServer(np.arange(3.0), expected_clients=2, rounds=1)
        with TestClient(create_app(server)) as test_client:
            with test_client.websocket_connect("/ws/fed") as first:
                first.send_bytes(encode_message(protocol.hello(0)))
                self.wait_for(test_client, lambda s: s["registered"] == [0])

                with test_client.websocket_connect("/ws/fed") as intruder:
                    intruder.send_bytes(encode_message(protocol.hello(0)))
                    with pytest.raises(WebSocketDisconnect) as exc:
                        intruder.receive_bytes()
                    assert exc.value.code == CLOSE_REJECTED

                with test_client.websocket_connect("/ws/fed") as second:
                    second.send_bytes(encode_message(protocol.hello(1)))
                    for ws, cid in ((first, 0), (second, 1)):
                        message = decode_message(ws.receive_bytes())
                        assert message.msg_type == MessageType.BROADCAST
                        assert message.client_id == cid
                        assert message.round == 0
                    assert server.registered == [0, 1]
                    assert server.aborted is None

    def test_client_dropout_aborts_round(self):
        """Test a registered client leaving mid-round aborts with the global parameters unchanged"""
        initial = np.arange(4.0)
        server = FederationServer(initial, expected_clients=2, rounds=2)
        with TestClient(create_app(server)) as test_client:
            with test_client.websocket_connect("/ws/fed") as first:
                first.send_bytes(encode_message(protocol.hello(0)))
                self.wait_for(test_client, lambda s: s["registered"] == [0])
                with test_client.websocket_connect("/ws/fed") as second:
                    second.send_bytes(encode_message(protocol.hello(1)))
                    assert decode_message(first.receive_bytes()).msg_type == MessageType.BROADCAST
                    assert decode_message(second.receive_bytes()).msg_type == MessageType.BROADCAST
                    first.send_bytes(encode_message(
                        protocol.update_message(update(0, initial + 1.0))))

                with pytest.raises(WebSocketDisconnect) as exc:
                    first.receive_bytes()
                assert exc.value.code == CLOSE_ABORTED
            status = test_client.get("/api/fed-status").json()

        assert server.aborted is not None
        assert server.aborted.client_id == 1
        assert server.aborted.round_index == 0
        assert server.state.global_shared.tobytes() == initial.tobytes()
        assert server.aggregation_calls == 0
        assert status["aborted"] and status["finished"]
        assert status["pending_updates"] == []

    def test_abort_is_idempotent(self):
        """Test a second abort keeps the first culprit"""
        server = FederationServer(np.zeros(2), expected_clients=2, rounds=1)
        first = server.abort(1, ConnectionError("gone"))
        assert server.abort(0, ConnectionError("also gone")) is first
        assert server.finished
        with pytest.raises(ContractViolation):
            server.handle(encode_message(protocol.hello(0)))

    def test_closed_connection_aborts_client(self, mocker):
        """Test a client whose connection is closed mid-run raises RoundAbortedError"""
        ws = mocker.MagicMock()
        ws.recv.side_effect = ConnectionClosedError(None, None)
        connect = mocker.patch("gridfed.fed.transport.connect")
        connect.return_value.__enter__.return_value = ws
        session = FederationClientSession(StubClient(3, [0.0]), local_updates=0)

        with pytest.raises(RoundAbortedError) as exc:
            run_websocket_client("ws://127.0.0.1:1/ws/fed", session)
        assert exc.value.client_id == 3
        ws.send.assert_called_once_with(session.hello())
