"""Lung-prior filtering of candidate tumor components.

Each component of the coarse prediction is judged in a fixed order: size
floor, lung overlap (stricter in the central mediastinal zone), then a rescue
for peripheral components that touch or nearly touch the lung.  Survivors can
then be cut down to the K largest.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import EmptyLungMask, UnknownLabel
from .io.config import ALL, PipelineConfig
from .morphology import Box, ComponentRecord, Verdict
from .volume import LabelMap, Mask, check_grid_compat


class Reason(str, enum.Enum):
    BELOW_MIN_VOXELS = "BelowMinVoxels"
    LOW_OVERLAP = "LowOverlap"
    LOW_OVERLAP_MEDIASTINAL = "LowOverlapMediastinal"
    RESCUED_BY_SURFACE_DISTANCE = "RescuedBySurfaceDistance"
    PASSED_OVERLAP = "PassedOverlap"
    DROPPED_BY_TOP_K = "DroppedByTopK"


KEEP_REASONS = (Reason.RESCUED_BY_SURFACE_DISTANCE, Reason.PASSED_OVERLAP)


@dataclass(frozen=True)
class ZoneBox:
    bounds: Box

    def contains(self, point) -> bool:
        lo, hi = self.bounds
        return all(lo[i] <= point[i] <= hi[i] for i in range(3))


@dataclass(frozen=True)
class FilterDecision:
    label: int
    verdict: Verdict
    reason: Reason
    overlap: Optional[float] = None
    surface_distance: Optional[float] = None
    mediastinal: Optional[bool] = None

    def __post_init__(self):
        if self.verdict is Verdict.KEPT and self.reason not in KEEP_REASONS:
            raise ValueError(f"label {self.label}: Kept with reason {self.reason}")

    def as_tuple(self):
        return (self.label, self.verdict.value, self.reason.value)


def _check_label(labels: LabelMap, label: int) -> np.ndarray:
    member = labels.data == label
    if label < 1 or not member.any():
        raise UnknownLabel(label)
    return member


def overlap_fraction(labels: LabelMap, label: int, lung: Mask) -> float:
    """Share of the component's voxels that lie inside the lung mask."""
    check_grid_compat(labels.meta, lung.meta)
    member = _check_label(labels, label)
    inside = np.count_nonzero(member & lung.bool)
    return inside / np.count_nonzero(member)


def distance_to_lung(lung: Mask) -> np.ndarray:
    """Euclidean distance (voxel units) from every voxel to the nearest lung voxel."""
    if not lung.data.any():
        raise EmptyLungMask("lung mask has no foreground")
    return ndimage.distance_transform_edt(lung.data == 0)


def surface_distance_voxels(labels: LabelMap, label: int, lung: Mask) -> float:
    """Smallest Euclidean voxel distance from the component to the lung.

    Spacing is deliberately ignored; 0 when the component touches lung voxels.
    """
    check_grid_compat(labels.meta, lung.meta)
    dist = distance_to_lung(lung)
    member = _check_label(labels, label)
    return float(dist[member].min())


def lung_bbox(lung: Mask) -> Box:
    if not lung.data.any():
        raise EmptyLungMask("lung mask has no foreground")
    sl = ndimage.find_objects(lung.data)[0]
    return tuple(s.start for s in sl), tuple(s.stop - 1 for s in sl)


def mediastinal_zone(lung: Mask) -> ZoneBox:
    """Central third (along x, the left-right axis) of the lung bounding box.

    y and z span the full lung bounding box.
    """
    (x0, y0, z0), (x1, y1, z1) = lung_bbox(lung)
    width = x1 - x0 + 1
    lo = x0 + width // 3
    hi = x0 + (2 * width) // 3 - 1
    return ZoneBox(((lo, y0, z0), (max(hi, lo), y1, z1)))


def filter_components(
    records: Sequence[ComponentRecord],
    labels: LabelMap,
    lung: Mask,
    cfg: PipelineConfig,
) -> List[FilterDecision]:
    """Judge every component against the lung prior; one decision per record."""
    check_grid_compat(labels.meta, lung.meta)
    if not records:
        return []
    zone = mediastinal_zone(lung)
    n = labels.n_labels
    lab = labels.data
    sizes = np.bincount(lab.ravel(), minlength=n + 1)
    inside = np.bincount(lab[lung.bool], minlength=n + 1)

    distances: Optional[np.ndarray] = None

    def surface_distance(label: int) -> float:
        nonlocal distances
        if distances is None:
            dist = distance_to_lung(lung)
            distances = np.asarray(
                ndimage.minimum(dist, lab, index=np.arange(1, n + 1)), dtype=np.float64
            )
        return float(distances[label - 1])

    out = []
    for rec in records:
        if rec.label < 1 or rec.label > n or sizes[rec.label] == 0:
            raise UnknownLabel(rec.label)
        if rec.voxels <= cfg.min_component_voxels:
            out.append(FilterDecision(rec.label, Verdict.DISCARDED, Reason.BELOW_MIN_VOXELS))
            continue

        overlap = inside[rec.label] / sizes[rec.label]
        central = zone.contains(rec.centroid)
        threshold = cfg.mediastinal_overlap_min if central else cfg.lung_overlap_min
        if overlap >= threshold:
            out.append(
                FilterDecision(
                    rec.label, Verdict.KEPT, Reason.PASSED_OVERLAP, overlap, mediastinal=central
                )
            )
            continue

        if central:
            out.append(
                FilterDecision(
                    rec.label,
                    Verdict.DISCARDED,
                    Reason.LOW_OVERLAP_MEDIASTINAL,
                    overlap,
                    mediastinal=True,
                )
            )
            continue

        dist = surface_distance(rec.label)
        if dist <= cfg.surface_distance_max and rec.voxels > cfg.min_component_voxels:
            verdict, reason = Verdict.KEPT, Reason.RESCUED_BY_SURFACE_DISTANCE
        else:
            verdict, reason = Verdict.DISCARDED, Reason.LOW_OVERLAP
        out.append(FilterDecision(rec.label, verdict, reason, overlap, dist, False))
    return out


def select_top_k(
    decisions: Sequence[FilterDecision],
    records: Sequence[ComponentRecord],
    k: Union[int, str],
) -> List[int]:
    """Labels of the ``k`` largest Kept components (all of them for ``ALL``).

    Ordered by voxel count, descending, ties by ascending label.
    """
    voxels: Dict[int, int] = {r.label: r.voxels for r in records}
    kept = sorted(
        (d.label for d in decisions if d.verdict is Verdict.KEPT),
        key=lambda label: (-voxels[label], label),
    )
    if k == ALL:
        return kept
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer or ALL, got {k!r}")
    return kept[:k]


def apply_top_k(decisions: Sequence[FilterDecision], selected: Sequence[int]) -> List[FilterDecision]:
    """Mark Kept components outside ``selected`` as DroppedByTopK."""
    chosen = set(selected)
    return [
        replace(d, verdict=Verdict.DISCARDED, reason=Reason.DROPPED_BY_TOP_K)
        if d.verdict is Verdict.KEPT and d.label not in chosen
        else d
        for d in decisions
    ]
