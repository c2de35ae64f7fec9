"""Grid geometry and the three voxel containers used throughout the package.

Arrays are stored as 3D numpy arrays indexed ``data[x, y, z]``.  The flat
x-fastest order used by NIfTI is ``data.ravel(order="F")``, so
``index = x + nx * (y + ny * z)``.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import GridMismatch, SpacingMismatch, ValueOutOfRange

log = logging.getLogger(__name__)

SPACING_RTOL = 1e-4


@dataclass(frozen=True)
class GridMeta:
    dims: Tuple[int, int, int]
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("dims, spacing and origin must have three components")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        if not all(s > 0 and np.isfinite(s) for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        if dims[0] * dims[1] * dims[2] > sys.maxsize:
            raise ValueError(f"voxel count of {dims} exceeds addressable range")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def size(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def linear_index(self, x, y, z):
        nx, ny, _ = self.dims
        return x + nx * (y + ny * z)

    def unravel(self, index):
        nx, ny, _ = self.dims
        x = index % nx
        y = (index // nx) % ny
        z = index // (nx * ny)
        return x, y, z


def check_grid_compat(a: GridMeta, b: GridMeta) -> None:
    """Raise unless the two grids share dims and (within 1e-4 relative) spacing.

    Origin differences only produce a warning.
    """
    for axis, (da, db) in enumerate(zip(a.dims, b.dims)):
        if da != db:
            raise GridMismatch(axis, (da, db))
    sa = np.asarray(a.spacing)
    sb = np.asarray(b.spacing)
    if np.any(np.abs(sa - sb) > SPACING_RTOL * np.maximum(np.abs(sa), np.abs(sb))):
        raise SpacingMismatch(a.spacing, b.spacing)
    if a.origin != b.origin:
        log.warning("grid origins differ: %s vs %s", a.origin, b.origin)


def _freeze(arr: np.ndarray, dtype, meta: GridMeta) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.shape != meta.dims:
        if arr.ndim == 1 and arr.size == meta.size:
            arr = arr.reshape(meta.dims, order="F")
        else:
            raise ValueError(f"data shape {arr.shape} does not match dims {meta.dims}")
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class _Grid:
    meta: GridMeta
    data: np.ndarray = field(repr=False)

    _dtype = None

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(self.data, self._dtype, self.meta))

    @classmethod
    def from_flat(cls, meta: GridMeta, flat):
        """Build from a flat x-fastest sequence."""
        return cls(meta, np.asarray(flat).reshape(meta.dims, order="F"))

    @property
    def flat(self) -> np.ndarray:
        """The voxel values in x-fastest order."""
        return self.data.ravel(order="F")

    @property
    def shape(self):
        return self.meta.dims

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.meta == other.meta and np.array_equal(self.data, other.data)

    __hash__ = None


class Volume(_Grid):
    """Scalar float32 grid (probabilities, intensities, uncertainty)."""

    _dtype = np.float32

    def check_probability(self) -> None:
        d = self.data
        if d.size and (np.isnan(d).any() or d.min() < 0.0 or d.max() > 1.0):
            raise ValueOutOfRange("probability volume has values outside [0, 1]")


class Mask(_Grid):
    """Binary uint8 grid."""

    _dtype = np.uint8

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.dtype == bool:
            raw = raw.astype(np.uint8)
        elif raw.size and not np.isin(raw, (0, 1)).all():
            raise ValueOutOfRange("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", raw)
        super().__post_init__()

    @property
    def bool(self) -> np.ndarray:
        return self.data.astype(bool)


class LabelMap(_Grid):
    """Component ids as int32; 0 is background, 1..L are components."""

    _dtype = np.int32

    @property
    def n_labels(self) -> int:
        return int(self.data.max()) if self.data.size else 0


def count_foreground(m: Mask) -> int:
    return int(np.count_nonzero(m.data))
