"""Flat parameter and gradient vectors with a named segment table."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def stop(self) -> int:
        return self.offset + self.size


@dataclass(frozen=True)
class Layout:
    """Ordered, contiguous, non-overlapping table of named weight blocks."""

    segments: tuple[Segment, ...]
    _index: Mapping[str, Segment] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, Segment] = {}
        cursor = 0
        for seg in self.segments:
            if seg.name in index:
                raise ValueError(f"duplicate segment name {seg.name!r}")
            if seg.offset != cursor:
                raise ValueError(f"segment {seg.name!r} does not start at offset {cursor}")
            index[seg.name] = seg
            cursor = seg.stop
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_shapes(cls, shapes: Iterable[tuple[str, tuple[int, ...]]]) -> "Layout":
        segments = []
        cursor = 0
        for name, shape in shapes:
            seg = Segment(name, cursor, tuple(int(n) for n in shape))
            segments.append(seg)
            cursor = seg.stop
        return cls(tuple(segments))

    @property
    def size(self) -> int:
        return self.segments[-1].stop if self.segments else 0

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.segments)

    def __getitem__(self, name: str) -> Segment:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def to_json(self) -> list[dict]:
        return [{"name": s.name, "offset": s.offset, "shape": list(s.shape)} for s in self.segments]

    @classmethod
    def from_json(cls, rows: list[dict]) -> "Layout":
        return cls(tuple(Segment(r["name"], int(r["offset"]), tuple(r["shape"])) for r in rows))


class ParamVector:
    """Immutable flat float64 vector viewed through a :class:`Layout`."""

    __slots__ = ("_values", "layout")

    def __init__(self, values, layout: Layout | None = None):
        arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
        if layout is None:
            layout = Layout.from_shapes([("theta", (arr.size,))])
        if arr.size != layout.size:
            raise ValueError(f"vector length {arr.size} != layout size {layout.size}")
        arr.flags.writeable = False
        self._values = arr
        self.layout = layout

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return self._values.size

    def __array__(self, dtype=None, copy=None):
        return self._values if dtype is None else self._values.astype(dtype)

    def block(self, name: str) -> np.ndarray:
        seg = self.layout[name]
        return self._values[seg.offset : seg.stop].reshape(seg.shape)

    def blocks(self) -> dict[str, np.ndarray]:
        return {s.name: self.block(s.name) for s in self.layout.segments}

    def with_values(self, values) -> "ParamVector":
        return type(self)(values, self.layout)

    def replace_blocks(self, **blocks: np.ndarray) -> "ParamVector":
        arr = self._values.copy()
        for name, block in blocks.items():
            seg = self.layout[name]
            arr[seg.offset : seg.stop] = np.asarray(block, dtype=np.float64).reshape(-1)
        return type(self)(arr, self.layout)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ParamVector)
            and self.layout == other.layout
            and np.array_equal(self._values, other._values)
        )

    def __hash__(self):
        return hash((self.layout, self._values.tobytes()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(len={len(self)}, blocks={list(self.layout.names)})"


class GradVector(ParamVector):
    """A gradient-shaped vector sharing its layout with a ParamVector."""

    __slots__ = ()

    @classmethod
    def like(cls, params: ParamVector, values) -> "GradVector":
        return cls(values, params.layout)

    def dot(self, other) -> float:
        return float(np.dot(self.values, np.asarray(other)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))
