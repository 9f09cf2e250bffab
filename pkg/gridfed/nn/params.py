"""
Parameter views - Flat parameter vectors with a named, partitioned layout

A layout is an ordered list of segments that tiles [0, size) exactly. Each
segment is tagged Shared (averaged by the federation server) or Personal
(never leaves its client).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence

import numpy as np

from gridfed.core.errors import ContractViolation


class Partition(str, Enum):
    SHARED = "shared"
    PERSONAL = "personal"


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    length: int
    partition: Partition = Partition.SHARED


class ParamLayout:
    """Ordered segment table over a flat parameter vector"""

    def __init__(self, segments: Sequence[Segment]):
        self.segments: List[Segment] = list(segments)
        cursor = 0
        for seg in self.segments:
            if seg.offset != cursor:
                raise ContractViolation(
                    f"Segment {seg.name} starts at {seg.offset}, expected {cursor}")
            if seg.length < 0:
                raise ContractViolation(f"Segment {seg.name} has negative length")
            cursor += seg.length
        self.size = cursor
        names = [s.name for s in self.segments]
        if len(set(names)) != len(names):
            raise ContractViolation("Segment names must be unique")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ParamLayout) and self.segments == other.segments

    def __repr__(self) -> str:
        return f"ParamLayout(size={self.size}, segments={len(self.segments)})"

    @classmethod
    def concat(cls, parts: Iterable["ParamLayout"]) -> "ParamLayout":
        """Place layouts back to back, shifting offsets"""
        segments, offset = [], 0
        for layout in parts:
            for seg in layout.segments:
                segments.append(Segment(seg.name, offset, seg.length, seg.partition))
                offset += seg.length
        return cls(segments)

    def segment(self, name: str) -> Segment:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise KeyError(name)

    def indices(self, partition: Partition) -> np.ndarray:
        """Flat indices belonging to one partition, in layout order"""
        chunks = [np.arange(s.offset, s.offset + s.length)
                  for s in self.segments if s.partition == partition]
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(chunks).astype(np.int64)

    def count(self, partition: Partition) -> int:
        return sum(s.length for s in self.segments if s.partition == partition)


@dataclass
class ParamVector:
    """Flat float64 parameters plus the layout that names them"""
    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size != self.layout.size:
            raise ContractViolation(
                f"ParamVector has {self.values.size} values for a layout of {self.layout.size}")

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def restrict(self, partition: Partition) -> np.ndarray:
        return self.values[self.layout.indices(partition)].copy()

    def with_partition(self, partition: Partition, values: np.ndarray) -> "ParamVector":
        """Copy with one partition's coordinates overwritten"""
        idx = self.layout.indices(partition)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != idx.shape:
            raise ContractViolation(
                f"{partition.value} partition needs {idx.size} values, got {values.size}")
        out = self.values.copy()
        out[idx] = values
        return ParamVector(out, self.layout)

