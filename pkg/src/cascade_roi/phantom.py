"""Synthetic thoracic phantoms: ellipsoid lungs, a spherical tumor, spurious blobs.

Everything is derived from a Philox counter-based stream seeded by
``PhantomSpec.seed``, so a spec always produces the same arrays.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .anatomy import mediastinal_zone
from .errors import SpecInfeasible
from .volume import GridMeta, Mask, Volume

ZONES = ("peripheral", "mediastinal", "pleural-straddling")
PLACEMENTS = ("mixed", "exterior", "interior")

# exterior blobs keep this many voxels of clearance from the lung
EXTERIOR_CLEARANCE = 8.0
# minimum gap between any two placed spheres, so dilation cannot merge them
SEPARATION = 5.0
PLEURAL_OVERLAP = (0.3, 0.8)
MAX_TRIES = 400

P_TUMOR = 0.9
P_BACKGROUND = 0.05
P_SPURIOUS = 0.7


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    dims: Tuple[int, int, int] = (96, 96, 96)
    lung_semi_axes: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
        (19.0, 24.0, 34.0),
        (19.0, 24.0, 34.0),
    )
    tumor_radius: float = 8.0
    tumor_zone: str = "peripheral"
    n_spurious: int = 0
    spurious_radius_range: Tuple[float, float] = (2.5, 4.0)
    noise_flip_prob: float = 0.0
    spurious_placement: str = "mixed"
    n_samples: int = 8
    jitter: float = 0.15

    def __post_init__(self):
        if self.tumor_zone not in ZONES:
            raise SpecInfeasible(f"tumor_zone must be one of {ZONES}")
        if self.spurious_placement not in PLACEMENTS:
            raise SpecInfeasible(f"spurious_placement must be one of {PLACEMENTS}")
        lo, hi = self.spurious_radius_range
        if not 1.0 <= lo <= hi:
            raise SpecInfeasible(f"spurious radii must satisfy 1 <= min <= max, got {lo}, {hi}")
        if not 0.0 <= self.noise_flip_prob <= 0.1:
            raise SpecInfeasible("noise_flip_prob must lie in [0, 0.1]")
        if self.tumor_radius <= 0:
            raise SpecInfeasible("tumor_radius must be positive")
        if self.n_spurious < 0 or self.n_samples < 2:
            raise SpecInfeasible("n_spurious must be >= 0 and n_samples >= 2")
        if 2 * self.tumor_radius + 1 > min(self.dims):
            raise SpecInfeasible(f"tumor of radius {self.tumor_radius} does not fit in {self.dims}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        for key in ("dims", "spurious_radius_range"):
            if key in d:
                d[key] = tuple(d[key])
        if "lung_semi_axes" in d:
            d["lung_semi_axes"] = tuple(tuple(a) for a in d["lung_semi_axes"])
        return cls(**d)


@dataclass(frozen=True)
class Sphere:
    center: Tuple[int, int, int]
    radius: float
    kind: str  # "tumor", "exterior" or "interior"


@dataclass
class Phantom:
    spec: PhantomSpec
    lung: Mask
    gt: Mask
    coarse_prob: Volume
    samples: List[Volume]
    tumor: Sphere
    spurious: List[Sphere] = field(default_factory=list)


def ball(dims, center, radius) -> np.ndarray:
    """Voxels whose centers lie within ``radius`` of ``center``."""
    out = np.zeros(dims, dtype=bool)
    r = int(np.ceil(radius))
    lo = [max(0, c - r) for c in center]
    hi = [min(d, c + r + 1) for c, d in zip(center, dims)]
    gx, gy, gz = np.ogrid[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    d2 = (gx - center[0]) ** 2 + (gy - center[1]) ** 2 + (gz - center[2]) ** 2
    out[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = d2 <= radius * radius
    return out


def lungs(spec: PhantomSpec) -> np.ndarray:
    return _lung_geometry(spec.dims, spec.lung_semi_axes)[0]


@functools.lru_cache(maxsize=8)
def _lung_geometry(dims, semi_axes):
    """Lung mask plus inside/outside distance maps; read-only and cached."""
    nx, ny, nz = dims
    centers = ((0.28 * (nx - 1), 0.5 * (ny - 1), 0.5 * (nz - 1)),
               (0.72 * (nx - 1), 0.5 * (ny - 1), 0.5 * (nz - 1)))
    gx, gy, gz = np.ogrid[:nx, :ny, :nz]
    out = np.zeros(dims, dtype=bool)
    for (cx, cy, cz), (ax, ay, az) in zip(centers, semi_axes):
        for c, a, n in ((cx, ax, nx), (cy, ay, ny), (cz, az, nz)):
            if c - a < 0 or c + a > n - 1:
                raise SpecInfeasible(f"lung ellipsoid with semi-axes {(ax, ay, az)} leaves the grid")
        out |= ((gx - cx) / ax) ** 2 + ((gy - cy) / ay) ** 2 + ((gz - cz) / az) ** 2 <= 1.0
    inside = ndimage.distance_transform_edt(out)
    outside = ndimage.distance_transform_edt(~out)
    for arr in (out, inside, outside):
        arr.setflags(write=False)
    return out, inside, outside


class _Placer:
    def __init__(self, spec: PhantomSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.lung, self.inside, self.outside = _lung_geometry(spec.dims, spec.lung_semi_axes)
        lung = self.lung
        self.placed: List[Sphere] = []
        zone = mediastinal_zone(Mask(GridMeta(spec.dims), lung))
        self.zone_x = (zone.bounds[0][0], zone.bounds[1][0])

    def in_grid(self, radius: float) -> np.ndarray:
        m = int(np.ceil(radius)) + 1
        ok = np.zeros(self.spec.dims, dtype=bool)
        ok[m:-m, m:-m, m:-m] = True
        return ok

    def x_mask(self, keep) -> np.ndarray:
        x = np.arange(self.spec.dims[0])[:, None, None]
        return np.broadcast_to(keep(x), self.spec.dims)

    def separated(self, center, radius) -> bool:
        c = np.asarray(center, dtype=float)
        return all(
            np.linalg.norm(c - np.asarray(s.center)) >= radius + s.radius + SEPARATION
            for s in self.placed
        )

    def pick(self, allowed: np.ndarray, radius: float, what: str, accept=None) -> Tuple[int, ...]:
        cand = np.flatnonzero(allowed)
        if cand.size == 0:
            raise SpecInfeasible(f"no room to place {what} of radius {radius:.2f}")
        for _ in range(MAX_TRIES):
            center = tuple(int(v) for v in np.unravel_index(cand[self.rng.integers(cand.size)], allowed.shape))
            if not self.separated(center, radius):
                continue
            if accept is not None and not accept(center):
                continue
            return center
        raise SpecInfeasible(f"could not place {what} of radius {radius:.2f} after {MAX_TRIES} tries")

    def tumor(self) -> Sphere:
        spec = self.spec
        r = spec.tumor_radius
        lo, hi = self.zone_x
        grid = self.in_grid(r)
        if spec.tumor_zone == "peripheral":
            # whole sphere inside the lung and clear of the central zone
            allowed = grid & (self.inside > r) & self.x_mask(lambda x: (x + r < lo) | (x - r > hi))
            center = self.pick(allowed, r, "peripheral tumor")
        elif spec.tumor_zone == "mediastinal":
            allowed = grid & (self.inside > r) & self.x_mask(lambda x: (x >= lo) & (x <= hi))
            center = self.pick(allowed, r, "mediastinal tumor")
        else:
            edge = self.lung & ~ndimage.binary_erosion(self.lung)
            allowed = grid & edge & self.x_mask(lambda x: (x + r < lo) | (x - r > hi))

            def straddles(c):
                sphere = ball(spec.dims, c, r)
                frac = np.count_nonzero(sphere & self.lung) / np.count_nonzero(sphere)
                return PLEURAL_OVERLAP[0] <= frac <= PLEURAL_OVERLAP[1]

            center = self.pick(allowed, r, "pleural tumor", accept=straddles)
        sphere = Sphere(center, r, "tumor")
        self.placed.append(sphere)
        return sphere

    def spurious(self, i: int) -> Sphere:
        spec = self.spec
        r = float(self.rng.uniform(*spec.spurious_radius_range))
        kind = spec.spurious_placement
        if kind == "mixed":
            kind = "exterior" if i % 2 == 0 else "interior"
        grid = self.in_grid(r)
        if kind == "exterior":
            allowed = grid & (self.outside >= r + EXTERIOR_CLEARANCE)
        else:
            allowed = grid & (self.inside > r)
        center = self.pick(allowed, r, f"{kind} spurious blob")
        sphere = Sphere(center, r, kind)
        self.placed.append(sphere)
        return sphere


def generate(spec: PhantomSpec) -> Phantom:
    """Build lung mask, ground truth, coarse probabilities and MC-like samples."""
    rng = np.random.Generator(np.random.Philox(spec.seed))
    meta = GridMeta(spec.dims)
    placer = _Placer(spec, rng)
    lung = placer.lung

    tumor = placer.tumor()
    gt = ball(spec.dims, tumor.center, tumor.radius)
    spurious = [placer.spurious(i) for i in range(spec.n_spurious)]

    prob = np.full(spec.dims, P_BACKGROUND, dtype=np.float64)
    prob[gt] = P_TUMOR
    for s in spurious:
        prob[ball(spec.dims, s.center, s.radius)] = P_SPURIOUS
    if spec.noise_flip_prob > 0:
        flips = rng.random(spec.dims) < spec.noise_flip_prob
        prob[flips] = 1.0 - prob[flips]
    prob = prob.astype(np.float32)

    # jitter concentrated on object boundaries, a crude stand-in for dropout spread
    fg = prob >= 0.5
    edge = fg ^ ndimage.binary_erosion(fg)
    band = ndimage.binary_dilation(edge, iterations=1)
    sigma = np.where(band, spec.jitter, 0.01)
    samples = []
    for _ in range(spec.n_samples):
        noisy = np.clip(prob + rng.normal(0.0, 1.0, spec.dims) * sigma, 0.0, 1.0)
        samples.append(Volume(meta, noisy.astype(np.float32)))

    return Phantom(
        spec=spec,
        lung=Mask(meta, lung),
        gt=Mask(meta, gt),
        coarse_prob=Volume(meta, prob),
        samples=samples,
        tumor=tumor,
        spurious=spurious,
    )
