"""Bounding boxes, margin expansion, cropping and paste-back of ROIs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple, TypeVar, Union

import numpy as np

from .errors import BoxMismatch, UnknownLabel
from .morphology import ComponentRecord
from .volume import GridMeta, Mask, Volume

Triple = Tuple[int, int, int]
G = TypeVar("G", Volume, Mask)


@dataclass(frozen=True)
class RoiBox:
    min: Triple
    max: Triple  # inclusive
    source_dims: Triple

    def __post_init__(self):
        lo = tuple(int(v) for v in self.min)
        hi = tuple(int(v) for v in self.max)
        dims = tuple(int(v) for v in self.source_dims)
        for axis in range(3):
            if not 0 <= lo[axis] <= hi[axis] < dims[axis]:
                raise BoxMismatch(f"box {lo}..{hi} is invalid for grid {dims} on axis {axis}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        object.__setattr__(self, "source_dims", dims)

    @property
    def dims(self) -> Triple:
        return tuple(b - a + 1 for a, b in zip(self.min, self.max))

    @property
    def slices(self) -> Tuple[slice, slice, slice]:
        return tuple(slice(a, b + 1) for a, b in zip(self.min, self.max))

    def contains(self, other: "RoiBox") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.min, self.max, other.min, other.max))

    def to_list(self) -> List[int]:
        """Six integers: min xyz then max xyz."""
        return [*self.min, *self.max]

    @classmethod
    def from_list(cls, values: Sequence[int], source_dims: Triple) -> "RoiBox":
        if len(values) != 6:
            raise BoxMismatch(f"expected six box coordinates, got {len(values)}")
        return cls(tuple(values[:3]), tuple(values[3:]), source_dims)


def bounding_box(records: Iterable[ComponentRecord], label: int, source_dims: Triple) -> RoiBox:
    for rec in records:
        if rec.label == label:
            lo, hi = rec.bbox
            return RoiBox(lo, hi, source_dims)
    raise UnknownLabel(label)


def expand_box(b: RoiBox, margin: int) -> RoiBox:
    """Grow the box by ``margin`` voxels on every side, clamped to the grid."""
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    if margin == 0:
        return b
    lo = tuple(max(0, v - margin) for v in b.min)
    hi = tuple(min(d - 1, v + margin) for v, d in zip(b.max, b.source_dims))
    return RoiBox(lo, hi, b.source_dims)


def crop(v: G, b: RoiBox) -> G:
    if tuple(v.meta.dims) != b.source_dims:
        raise BoxMismatch(f"box was built for {b.source_dims}, volume is {v.meta.dims}")
    origin = tuple(o + s * m for o, s, m in zip(v.meta.origin, v.meta.spacing, b.min))
    meta = GridMeta(b.dims, v.meta.spacing, origin)
    return type(v)(meta, v.data[b.slices])


def paste_back(full: GridMeta, items: Iterable[Tuple[RoiBox, Union[Mask, np.ndarray]]]) -> Mask:
    """OR-combine ROI masks into an empty full-size grid."""
    out = np.zeros(full.dims, dtype=np.uint8)
    for box, roi in items:
        if box.source_dims != full.dims:
            raise BoxMismatch(f"box was built for {box.source_dims}, target grid is {full.dims}")
        data = roi.data if isinstance(roi, Mask) else np.asarray(roi)
        if data.shape != box.dims:
            raise BoxMismatch(f"ROI mask shape {data.shape} does not match box dims {box.dims}")
        out[box.slices] |= (data != 0).astype(np.uint8)
    return Mask(full, out)
