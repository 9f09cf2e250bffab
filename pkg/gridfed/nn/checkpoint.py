"""
Checkpoints - GFNN binary parameter files

Layout (all integers little-endian):
    magic      4s   b"GFNN"
    version    u16  1
    n_segments u32
    n_segments x { name_len u16, name utf-8, partition u8 (0 shared, 1 personal),
                   offset u32, length u32 }
    n_values   u32
    payload    n_values x f64
"""

import logging
import struct
from pathlib import Path

import numpy as np

from gridfed.core.errors import FramingError
from gridfed.core.io import PathLike, write_bytes_atomic
from gridfed.nn.params import ParamLayout, ParamVector, Partition, Segment

logger = logging.getLogger(__name__)

MAGIC = b"GFNN"
VERSION = 1
_PARTITION_CODES = {Partition.SHARED: 0, Partition.PERSONAL: 1}
_PARTITIONS = {v: k for k, v in _PARTITION_CODES.items()}


def encode_checkpoint(params: ParamVector) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(params.layout.segments))]
    for seg in params.layout.segments:
        name = seg.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BII", _PARTITION_CODES[seg.partition], seg.offset, seg.length))
    parts.append(struct.pack("<I", params.values.size))
    parts.append(params.values.astype("<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FramingError(
                f"Checkpoint truncated: need {size} bytes, {len(self.data) - self.pos} available",
                self.pos)
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FramingError(
                f"Checkpoint truncated: need {n} bytes, {len(self.data) - self.pos} available",
                self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def decode_checkpoint(data: bytes) -> ParamVector:
    reader = _Reader(data)
    if reader.raw(4) != MAGIC:
        raise FramingError("Bad checkpoint magic", 0)
    version, n_segments = reader.take("<HI")
    if version != VERSION:
        raise FramingError(f"Unsupported checkpoint version {version}", 4)

    segments = []
    for _ in range(n_segments):
        (name_len,) = reader.take("<H")
        name = reader.raw(name_len).decode("utf-8")
        code_pos = reader.pos
        code, offset, length = reader.take("<BII")
        if code not in _PARTITIONS:
            raise FramingError(f"Unknown partition code {code}", code_pos)
        segments.append(Segment(name, offset, length, _PARTITIONS[code]))

    (n_values,) = reader.take("<I")
    payload = reader.raw(8 * n_values)
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if reader.pos != len(data):
        raise FramingError(f"{len(data) - reader.pos} trailing bytes after payload", reader.pos)
    return ParamVector(values, ParamLayout(segments))


def save_checkpoint(path: PathLike, params: ParamVector) -> Path:
    out = write_bytes_atomic(path, encode_checkpoint(params))
    logger.info(f"💾 Checkpoint saved: {out} ({params.values.size} params)")
    return out


def load_checkpoint(path: PathLike) -> ParamVector:
    return decode_checkpoint(Path(path).read_bytes())
