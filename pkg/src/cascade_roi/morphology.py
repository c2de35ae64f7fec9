"""Thresholding, cubic dilation and 3D connected-component labeling."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import TooManyComponents, ValueOutOfRange
from .volume import LabelMap, Mask, Volume

MAX_LABEL = 2**31 - 1

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


class Verdict(str, enum.Enum):
    PENDING = "Pending"
    KEPT = "Kept"
    DISCARDED = "Discarded"


Box = Tuple[Tuple[int, int, int], Tuple[int, int, int]]


@dataclass(frozen=True)
class ComponentRecord:
    label: int
    voxels: int
    bbox: Box  # inclusive (min xyz, max xyz)
    centroid: Tuple[float, float, float]
    overlap_fraction: Optional[float] = None
    surface_distance: Optional[float] = None
    verdict: Verdict = Verdict.PENDING
    reason: Optional[str] = None


def structure(connectivity: int) -> np.ndarray:
    """3x3x3 neighbourhood for face (6), edge (18) or vertex (26) adjacency."""
    try:
        rank = _CONNECTIVITY_RANK[connectivity]
    except KeyError:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}") from None
    return ndimage.generate_binary_structure(3, rank)


def threshold_probability(p: Volume, t: float) -> Mask:
    if not 0.0 < t < 1.0:
        raise ValueOutOfRange(f"threshold must lie in (0, 1), got {t}")
    p.check_probability()
    return Mask(p.meta, p.data >= np.float32(t))


def dilate(m: Mask, radius: int = 1, iterations: int = 1) -> Mask:
    """Binary dilation with a (2r+1)^3 cube, repeated ``iterations`` times.

    Voxels outside the grid count as background.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    out = m.data
    size = 2 * radius + 1
    for _ in range(iterations):
        # a flat cubic footprint makes this separable per axis
        out = ndimage.maximum_filter(out, size=size, mode="constant", cval=0)
    if iterations == 0:
        return m
    return Mask(m.meta, out)


def _raster_relabel(raw: np.ndarray, n: int) -> np.ndarray:
    """Renumber labels 1..n by first appearance in x-fastest scan order."""
    if n == 0:
        return raw.astype(np.int32)
    flat = raw.ravel(order="F")
    nz = np.flatnonzero(flat)
    uniq, first = np.unique(flat[nz], return_index=True)
    mapping = np.zeros(n + 1, dtype=np.int32)
    mapping[uniq[np.argsort(first)]] = np.arange(1, n + 1, dtype=np.int32)
    return mapping[raw]


def component_records(labels: LabelMap) -> List[ComponentRecord]:
    """Size, bounding box and centroid of every label, largest first.

    Ties in voxel count are broken by ascending label id.
    """
    data = labels.data
    n = labels.n_labels
    if n == 0:
        return []
    xs, ys, zs = np.nonzero(data)
    lab = data[xs, ys, zs]
    counts = np.bincount(lab, minlength=n + 1)
    cx = np.bincount(lab, weights=xs, minlength=n + 1)
    cy = np.bincount(lab, weights=ys, minlength=n + 1)
    cz = np.bincount(lab, weights=zs, minlength=n + 1)
    slices = ndimage.find_objects(data, max_label=n)
    records = []
    for k in range(1, n + 1):
        sl = slices[k - 1]
        if sl is None:
            continue
        c = int(counts[k])
        records.append(
            ComponentRecord(
                label=k,
                voxels=c,
                bbox=(
                    (sl[0].start, sl[1].start, sl[2].start),
                    (sl[0].stop - 1, sl[1].stop - 1, sl[2].stop - 1),
                ),
                centroid=(cx[k] / c, cy[k] / c, cz[k] / c),
            )
        )
    records.sort(key=lambda r: (-r.voxels, r.label))
    return records


def label_components(m: Mask, connectivity: int = 26) -> Tuple[LabelMap, List[ComponentRecord]]:
    """Label connected foreground regions.

    Labels follow first encounter in an x-fastest raster scan, so the result
    depends only on the mask contents.  Records come back sorted by voxel
    count, descending.
    """
    raw, n = ndimage.label(m.data, structure=structure(connectivity))
    if n > MAX_LABEL:
        raise TooManyComponents(f"{n} components exceed the int32 label range")
    labels = LabelMap(m.meta, _raster_relabel(raw, n))
    return labels, component_records(labels)
