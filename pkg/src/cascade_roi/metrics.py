"""Overlap and surface metrics, correlation statistics and component-count trends."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, special, stats

from .errors import DegenerateVariance, EmptyInput, LengthMismatch
from .io.report import CaseReport
from .volume import Mask, check_grid_compat

INF = math.inf

_FACE = ndimage.generate_binary_structure(3, 1)


def _pair(a: Mask, b: Mask) -> Tuple[np.ndarray, np.ndarray]:
    check_grid_compat(a.meta, b.meta)
    return a.bool, b.bool


def dice(a: Mask, b: Mask) -> float:
    """2|A∩B| / (|A| + |B|); two empty masks score 1."""
    x, y = _pair(a, b)
    total = np.count_nonzero(x) + np.count_nonzero(y)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(x & y) / total


def boundary(m: np.ndarray) -> np.ndarray:
    """Foreground voxels with a background face-neighbour; outside the grid is background."""
    m = m.astype(bool)
    return m & ~ndimage.binary_erosion(m, structure=_FACE, border_value=0)


def _support_box(m: np.ndarray, margin: int = 0):
    """Slices covering the foreground of ``m`` grown by ``margin``, clamped to the grid."""
    idx = np.nonzero(m)
    return tuple(
        slice(max(0, int(i.min()) - margin), min(n, int(i.max()) + margin + 1))
        for i, n in zip(idx, m.shape)
    )


@dataclass(frozen=True)
class SurfaceDistanceSet:
    a_to_b: np.ndarray = field(repr=False)
    b_to_a: np.ndarray = field(repr=False)


def _nearest(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """Distance (mm) from each ``src`` voxel to the closest ``dst`` voxel."""
    pts = np.array(np.nonzero(src))
    if pts.shape[1] == 0:
        return np.zeros(0)
    idx = ndimage.distance_transform_edt(
        ~dst, sampling=spacing, return_distances=False, return_indices=True
    )
    nearest = idx[:, pts[0], pts[1], pts[2]]
    delta = (nearest - pts) * np.asarray(spacing, dtype=np.float64)[:, None]
    return np.sqrt(np.sum(delta**2, axis=0))


def surface_distances(a: Mask, b: Mask, spacing=None) -> SurfaceDistanceSet:
    """Boundary-to-boundary distances in both directions (empty if a mask is empty)."""
    x, y = _pair(a, b)
    spacing = tuple(a.meta.spacing if spacing is None else spacing)
    bx, by = boundary(x), boundary(y)
    if not bx.any() or not by.any():
        return SurfaceDistanceSet(
            np.zeros(0) if not bx.any() else np.full(np.count_nonzero(bx), INF),
            np.zeros(0) if not by.any() else np.full(np.count_nonzero(by), INF),
        )
    # every source and target voxel lies in this box, so distances are unchanged
    box = _support_box(bx | by)
    bx, by = bx[box], by[box]
    return SurfaceDistanceSet(_nearest(bx, by, spacing), _nearest(by, bx, spacing))


def hd95(a: Mask, b: Mask, spacing=None) -> float:
    """95th percentile of the pooled symmetric surface distances, in mm.

    Uses linear interpolation between order statistics.  Both masks empty
    gives 0; exactly one empty gives ``inf``.
    """
    x, y = _pair(a, b)
    ex, ey = not x.any(), not y.any()
    if ex and ey:
        return 0.0
    if ex or ey:
        return INF
    sd = surface_distances(a, b, spacing)
    pooled = np.concatenate([sd.a_to_b, sd.b_to_a])
    return float(np.percentile(pooled, 95, method="linear"))


def boundary_dice(a: Mask, b: Mask, tol: int = 2) -> float:
    """Dice restricted to the band within ``tol`` voxels of either boundary.

    Distances are Euclidean in voxel units.  This band definition is our own
    convention; other toolkits define boundary Dice differently.
    """
    if tol < 1:
        raise ValueError(f"tol must be >= 1, got {tol}")
    x, y = _pair(a, b)
    edges = boundary(x) | boundary(y)
    if not edges.any():
        return 1.0
    box = _support_box(edges, int(tol))
    edges, x, y = edges[box], x[box], y[box]
    band = ndimage.distance_transform_edt(~edges) <= tol
    xb, yb = x & band, y & band
    total = np.count_nonzero(xb) + np.count_nonzero(yb)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(xb & yb) / total


# statistics ----------------------------------------------------------------


def _validate_pair(xs, ys) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise LengthMismatch(f"inputs have lengths {x.size} and {y.size}")
    if x.size < 3:
        raise LengthMismatch(f"need at least 3 paired values, got {x.size}")
    return x, y


def t_test_p(r: float, n: int) -> float:
    """Two-sided p for H0: rho = 0, from t = r sqrt((n-2)/(1-r^2)) on n-2 dof.

    P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2), and df/(df+t^2) = 1 - r^2.
    """
    df = n - 2
    x = 1.0 - r * r
    if x <= 0.0:
        return 0.0
    return float(min(1.0, special.betainc(0.5 * df, 0.5, x)))


def pearson(xs, ys) -> Tuple[float, float]:
    x, y = _validate_pair(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    # rescale so tiny or huge spreads do not under/overflow when squared
    for d in (dx, dy):
        peak = np.max(np.abs(d))
        if peak > 0:
            d /= peak
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVariance("pearson correlation needs non-constant inputs")
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    return r, t_test_p(r, x.size)


def spearman(xs, ys) -> Tuple[float, float]:
    """Pearson correlation of average ranks (ties share the mean rank)."""
    x, y = _validate_pair(xs, ys)
    return pearson(stats.rankdata(x, method="average"), stats.rankdata(y, method="average"))


# component-count trend -----------------------------------------------------

MIN_TREND_CASES = 3


def count_group(n: int) -> str:
    return "3+" if n >= 3 else str(n)


@dataclass
class TrendReport:
    """Metric means per residual-component group plus count/metric correlations.

    ``pearson`` and ``spearman`` map ``"dice"`` / ``"hd95"`` to ``(r, p)``, or
    ``None`` when the correlation is undefined (too few cases, constant input).
    """

    n_cases: int
    group_means: Dict[str, Dict[str, Optional[float]]]
    pearson: Dict[str, Optional[Tuple[float, float]]]
    spearman: Dict[str, Optional[Tuple[float, float]]]
    hd95_excluded: int = 0
    status: str = "ok"
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def pair(v):
            return None if v is None else {"r": v[0], "p": v[1]}

        return {
            "status": self.status,
            "n_cases": self.n_cases,
            "hd95_excluded": self.hd95_excluded,
            "group_means": self.group_means,
            "pearson": {k: pair(v) for k, v in self.pearson.items()},
            "spearman": {k: pair(v) for k, v in self.spearman.items()},
            "notes": list(self.notes),
        }


def _safe(fn, xs, ys, label, notes):
    try:
        return fn(xs, ys)
    except (DegenerateVariance, LengthMismatch) as exc:
        notes.append(f"{label}: {exc}")
        return None


def component_trend(cases: Sequence[CaseReport]) -> TrendReport:
    """Group cases by residual component count and correlate count with quality.

    Cases with an infinite HD95 are left out of every HD95 mean and
    correlation; how many were dropped is reported in ``hd95_excluded``.
    Groups are "1", "2" and "3+" (plus "0" if some case kept nothing).
    """
    if not cases:
        raise EmptyInput("component_trend needs at least one case")
    counts = np.array([c.components_after for c in cases], dtype=np.float64)
    dice_vals = np.array([c.dice for c in cases], dtype=np.float64)
    hd_vals = np.array([c.hd95_mm for c in cases], dtype=np.float64)
    finite = np.isfinite(hd_vals)

    groups: Dict[str, Dict[str, Optional[float]]] = {}
    keys = sorted({count_group(c.components_after) for c in cases}, key=lambda k: int(k.rstrip("+")))
    for key in keys:
        sel = np.array([count_group(c.components_after) == key for c in cases])
        hd_sel = sel & finite
        groups[key] = {
            "n": int(sel.sum()),
            "mean_dice": float(dice_vals[sel].mean()),
            "mean_hd95": float(hd_vals[hd_sel].mean()) if hd_sel.any() else None,
        }

    notes: List[str] = []
    status = "ok"
    if len(cases) < MIN_TREND_CASES:
        status = "insufficient-n"
        p_res = {"dice": None, "hd95": None}
        s_res = {"dice": None, "hd95": None}
    else:
        p_res = {
            "dice": _safe(pearson, counts, dice_vals, "pearson dice", notes),
            "hd95": _safe(pearson, counts[finite], hd_vals[finite], "pearson hd95", notes),
        }
        s_res = {
            "dice": _safe(spearman, counts, dice_vals, "spearman dice", notes),
            "hd95": _safe(spearman, counts[finite], hd_vals[finite], "spearman hd95", notes),
        }
    return TrendReport(
        n_cases=len(cases),
        group_means=groups,
        pearson=p_res,
        spearman=s_res,
        hd95_excluded=int((~finite).sum()),
        status=status,
        notes=notes,
    )
