"""
GFED wire protocol - binary frames between federation server and clients

Frame layout (little-endian, 17-byte header):

    offset  size  field
    0       4     magic b"GFED"
    4       2     version (u16, currently 1)
    6       1     msg_type (u8): 1 Hello, 2 Broadcast, 3 Update, 4 RoundDone, 5 Shutdown
    7       4     round (u32)
    11      2     client_id (u16)
    13      4     payload_len in bytes (u32, multiple of 8)
    17      ...   payload: float64 values

Broadcast and RoundDone carry the global Shared parameters; Update carries
[n_k, shared parameters...]; Hello and Shutdown carry nothing. Personal
parameters have no message type and never go on the wire.
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import List

import numpy as np

from gridfed.core.errors import FramingError
from gridfed.fed.aggregation import ClientUpdate

MAGIC = b"GFED"
VERSION = 1
HEADER = struct.Struct("<4sHBIHI")


class MessageType(IntEnum):
    HELLO = 1
    BROADCAST = 2
    UPDATE = 3
    ROUND_DONE = 4
    SHUTDOWN = 5


@dataclass(frozen=True, eq=False)
class Message:
    msg_type: MessageType
    round: int
    client_id: int
    payload: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Message):
            return NotImplemented
        return (self.msg_type == other.msg_type and self.round == other.round
                and self.client_id == other.client_id
                and self.payload.shape == other.payload.shape
                and self.payload.tobytes() == other.payload.tobytes())


def _payload(values=None) -> np.ndarray:
    if values is None:
        return np.zeros(0)
    return np.asarray(values, dtype=np.float64).ravel()


def hello(client_id: int) -> Message:
    return Message(MessageType.HELLO, 0, client_id, _payload())


def broadcast(round_index: int, client_id: int, shared: np.ndarray) -> Message:
    return Message(MessageType.BROADCAST, round_index, client_id, _payload(shared))


def round_done(round_index: int, client_id: int, shared: np.ndarray) -> Message:
    return Message(MessageType.ROUND_DONE, round_index, client_id, _payload(shared))


def shutdown(round_index: int, client_id: int) -> Message:
    return Message(MessageType.SHUTDOWN, round_index, client_id, _payload())


def update_message(update: ClientUpdate) -> Message:
    body = np.concatenate([[float(update.n_k)], _payload(update.shared_params)])
    return Message(MessageType.UPDATE, update.round, update.client_id, body)


def client_update(message: Message) -> ClientUpdate:
    if message.msg_type != MessageType.UPDATE or message.payload.size < 1:
        raise FramingError(f"Not an Update message: {message.msg_type.name}", 6)
    return ClientUpdate(client_id=message.client_id, n_k=int(message.payload[0]),
                        shared_params=message.payload[1:].copy(), round=message.round)


def encode_message(message: Message) -> bytes:
    body = _payload(message.payload).astype("<f8").tobytes()
    header = HEADER.pack(MAGIC, VERSION, int(message.msg_type), message.round,
                         message.client_id, len(body))
    return header + body


def _decode_header(data: bytes, base: int = 0):
    if len(data) < HEADER.size:
        raise FramingError(
            f"Truncated header: expected {HEADER.size} bytes, {len(data)} available", base)
    magic, version, msg_type, round_index, client_id, payload_len = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FramingError(f"Bad magic {magic!r}", base)
    if version != VERSION:
        raise FramingError(f"Unknown protocol version {version}", base + 4)
    try:
        kind = MessageType(msg_type)
    except ValueError:
        raise FramingError(f"Unknown message type {msg_type}", base + 6) from None
    if payload_len % 8:
        raise FramingError(f"Payload length {payload_len} is not a multiple of 8", base + 13)
    return kind, round_index, client_id, payload_len


def decode_message(data: bytes) -> Message:
    """Decode exactly one frame"""
    kind, round_index, client_id, payload_len = _decode_header(data)
    available = len(data) - HEADER.size
    if payload_len > available:
        raise FramingError(
            f"Truncated payload: expected {payload_len} bytes, {available} available",
            HEADER.size)
    if payload_len < available:
        raise FramingError(f"{available - payload_len} trailing bytes after frame",
                           HEADER.size + payload_len)
    payload = np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)
    return Message(kind, round_index, client_id, payload)


class FrameDecoder:
    """Split a byte stream into messages, buffering partial frames"""

    def __init__(self):
        self._buffer = bytearray()
        self._consumed = 0

    def feed(self, data: bytes) -> List[Message]:
        self._buffer.extend(data)
        messages = []
        while len(self._buffer) >= HEADER.size:
            _, _, _, payload_len = _decode_header(bytes(self._buffer[:HEADER.size]),
                                                  self._consumed)
            total = HEADER.size + payload_len
            if len(self._buffer) < total:
                break
            messages.append(decode_message(bytes(self._buffer[:total])))
            del self._buffer[:total]
            self._consumed += total
        return messages
