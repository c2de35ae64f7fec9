import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cascade_roi.anatomy import (
    FilterDecision,
    Reason,
    apply_top_k,
    filter_components,
    mediastinal_zone,
    overlap_fraction,
    select_top_k,
    surface_distance_voxels,
)
from cascade_roi.errors import EmptyLungMask, UnknownLabel
from cascade_roi.io.config import ALL, PipelineConfig
from cascade_roi.morphology import ComponentRecord, Verdict, component_records, label_components
from cascade_roi.volume import GridMeta, LabelMap, Mask


def as_mask(a):
    return Mask(GridMeta(a.shape), a)


def as_labels(a):
    return LabelMap(GridMeta(a.shape), a)


def test_overlap_examples():
    lab = np.zeros((10, 4, 4), dtype=np.int32)
    lab[:, 0, 0] = 1
    lung = np.zeros((10, 4, 4), dtype=bool)
    lung[:8, 0, 0] = True
    assert overlap_fraction(as_labels(lab), 1, as_mask(lung)) == 0.8
    lung[:] = True
    assert overlap_fraction(as_labels(lab), 1, as_mask(lung)) == 1.0
    lung[:] = False
    lung[:, 2:, :] = True
    assert overlap_fraction(as_labels(lab), 1, as_mask(lung)) == 0.0
    with pytest.raises(UnknownLabel):
        overlap_fraction(as_labels(lab), 2, as_mask(lung))


@pytest.mark.parametrize("offset, expect", [((3, 0, 0), 3.0), ((1, 1, 0), math.sqrt(2)), ((0, 0, 0), 0.0)])
def test_surface_distance_examples(offset, expect):
    lung = np.zeros((9, 9, 9), dtype=bool)
    lung[:3, :3, :3] = True
    lab = np.zeros((9, 9, 9), dtype=np.int32)
    lab[2 + offset[0], 2 + offset[1], 2 + offset[2]] = 1
    got = surface_distance_voxels(as_labels(lab), 1, as_mask(lung))
    assert got == pytest.approx(expect, abs=1e-12)


def test_surface_distance_ignores_spacing():
    lung = np.zeros((6, 1, 1), dtype=bool)
    lung[0] = True
    lab = np.zeros((6, 1, 1), dtype=np.int32)
    lab[4] = 1
    meta = GridMeta((6, 1, 1), (2.5, 1, 1))
    assert surface_distance_voxels(LabelMap(meta, lab), 1, Mask(meta, lung)) == 4.0


def test_surface_distance_matches_pairwise():
    rng = np.random.default_rng(2)
    for _ in range(10):
        lung = rng.random((8, 8, 8)) < 0.05
        lung[0, 0, 0] = True
        lab = (rng.random((8, 8, 8)) < 0.03).astype(np.int32)
        lab[7, 7, 7] = 1
        lab[lung] = 0
        got = surface_distance_voxels(as_labels(lab), 1, as_mask(lung))
        a, b = np.argwhere(lab == 1), np.argwhere(lung)
        expect = min(math.dist(p, q) for p, q in itertools.product(a, b))
        assert got == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("x0, x1, lo, hi", [(0, 89, 30, 59), (10, 12, 11, 11)])
def test_mediastinal_zone_thirds(x0, x1, lo, hi):
    lung = np.zeros((100, 5, 6), dtype=bool)
    lung[x0, 1, 2] = lung[x1, 3, 4] = True
    zone = mediastinal_zone(as_mask(lung))
    assert zone.bounds == ((lo, 1, 2), (hi, 3, 4))


def test_mediastinal_zone_empty_lung():
    with pytest.raises(EmptyLungMask):
        mediastinal_zone(as_mask(np.zeros((4, 4, 4), dtype=bool)))


def _decide(lab, lung, **cfg):
    labels = as_labels(lab)
    return filter_components(component_records(labels), labels, as_mask(lung), PipelineConfig(**cfg))


def _slab_lung():
    # lung bbox x in [0, 29] -> mediastinal zone x in [10, 19]
    lung = np.zeros((40, 20, 20), dtype=bool)
    lung[:30] = True
    return lung


def test_filter_passed_overlap():
    lung = _slab_lung()
    lab = np.zeros(lung.shape, dtype=np.int32)
    lab[0:10, 0:5, 0:4] = 1  # 200 voxels, centroid x = 4.5
    lung[0:10, 0, 0] = False  # 10 voxels fall outside -> overlap 0.95
    (d,) = _decide(lab, lung)
    assert d.as_tuple() == (1, "Kept", "PassedOverlap")
    assert d.overlap == pytest.approx(0.95)
    assert d.mediastinal is False


def test_filter_rescued_low_overlap_touching():
    lung = _slab_lung()
    lab = np.zeros(lung.shape, dtype=np.int32)
    lab[27:37, 0:5, 0:4] = 1  # 3 of 10 x-slices inside: overlap 0.3, centroid x = 31.5
    (d,) = _decide(lab, lung)
    assert d.as_tuple() == (1, "Kept", "RescuedBySurfaceDistance")
    assert d.overlap == pytest.approx(0.3)
    assert d.surface_distance == 0.0


def test_filter_rescued_at_distance_two():
    lung = _slab_lung()
    lab = np.zeros(lung.shape, dtype=np.int32)
    lab[31:40, 0:5, 0:5] = 1  # starts 2 voxels past the lung edge at x=29
    (d,) = _decide(lab, lung)
    assert d.surface_distance == 2.0
    assert d.as_tuple() == (1, "Kept", "RescuedBySurfaceDistance")


def test_filter_far_component_discarded():
    lung = np.zeros((60, 20, 20), dtype=bool)
    lung[:30] = True
    lab = np.zeros(lung.shape, dtype=np.int32)
    lab[40:50, 0:5, 0:5] = 1  # distance 11
    (d,) = _decide(lab, lung)
    assert d.as_tuple() == (1, "Discarded", "LowOverlap")
    assert d.surface_distance == 11.0


def test_filter_small_component():
    lung = _slab_lung()
    lab = np.zeros(lung.shape, dtype=np.int32)
    lab[0:10, 0:5, 0] = 1  # exactly 50 voxels, all inside
    (d,) = _decide(lab, lung)
    assert d.as_tuple() == (1, "Discarded", "BelowMinVoxels")


def test_filter_mediastinal_is_stricter_and_never_rescued():
    lab = np.zeros((40, 20, 20), dtype=np.int32)
    lab[10:20, 0:10, 0:2] = 1  # 200 voxels, centroid x = 14.5

    lung = _slab_lung()
    lung[10:20, 0:10, 0:2] = False
    lung[10:20, 0:3, 0] = True  # 30 inside -> overlap 0.15, touching the lung
    (d,) = _decide(lab, lung)
    assert d.mediastinal is True
    assert d.as_tuple() == (1, "Discarded", "LowOverlapMediastinal")

    # overlap 0.85 clears the peripheral threshold but not the mediastinal one
    lung = _slab_lung()
    lung[10:20, 0:3, 0] = False
    (d,) = _decide(lab, lung)
    assert d.overlap == pytest.approx(0.85)
    assert d.as_tuple() == (1, "Discarded", "LowOverlapMediastinal")
    (d,) = _decide(lab, lung, mediastinal_overlap_min=0.85)
    assert d.as_tuple() == (1, "Kept", "PassedOverlap")


def _records(sizes):
    return [ComponentRecord(i + 1, s, ((0, 0, 0), (0, 0, 0)), (0.0, 0.0, 0.0)) for i, s in enumerate(sizes)]


def _kept(labels):
    return [FilterDecision(k, Verdict.KEPT, Reason.PASSED_OVERLAP) for k in labels]


def test_top_k_examples():
    recs = _records([300, 500, 100])
    decisions = _kept([1, 2, 3])
    assert select_top_k(decisions, recs, 1) == [2]
    assert select_top_k(decisions, recs, 2) == [2, 1]
    assert select_top_k(decisions, recs, ALL) == [2, 1, 3]
    marked = apply_top_k(decisions, [2])
    assert [d.as_tuple() for d in marked] == [
        (1, "Discarded", "DroppedByTopK"),
        (2, "Kept", "PassedOverlap"),
        (3, "Discarded", "DroppedByTopK"),
    ]


def test_top_k_ignores_discarded_and_breaks_ties():
    recs = _records([100, 100, 900])
    decisions = _kept([2, 1]) + [FilterDecision(3, Verdict.DISCARDED, Reason.LOW_OVERLAP)]
    assert select_top_k(decisions, recs, 1) == [1]
    with pytest.raises(ValueError):
        select_top_k(decisions, recs, 0)


def test_kept_requires_keep_reason():
    with pytest.raises(ValueError):
        FilterDecision(1, Verdict.KEPT, Reason.LOW_OVERLAP)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=12), st.randoms(use_true_random=False), st.integers(1, 5))
def test_top_k_properties(sizes, rnd, k):
    recs = _records(sizes)
    decisions = [
        FilterDecision(r.label, Verdict.KEPT, Reason.PASSED_OVERLAP)
        if r.voxels % 3
        else FilterDecision(r.label, Verdict.DISCARDED, Reason.LOW_OVERLAP)
        for r in recs
    ]
    kept = {d.label for d in decisions if d.verdict is Verdict.KEPT}
    got = select_top_k(decisions, recs, k)
    assert len(got) <= k and set(got) <= kept
    shuffled_d, shuffled_r = list(decisions), list(recs)
    rnd.shuffle(shuffled_d)
    rnd.shuffle(shuffled_r)
    assert select_top_k(shuffled_d, shuffled_r, k) == got


lung_arrays = arrays(np.bool_, (10, 8, 8), elements=st.booleans())


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.bool_, (10, 8, 8)),
    lung_arrays,
    st.floats(0, 0.9),
    st.floats(0, 0.1),
    st.integers(1, 4),
)
def test_filter_properties(m, lung, lo, bump, min_vox):
    lung = lung.copy()
    lung[0, 0, 0] = True
    labels, recs = label_components(as_mask(m), 6)
    cfg = PipelineConfig(lung_overlap_min=lo, min_component_voxels=min_vox, surface_distance_max=1.0)
    out = filter_components(recs, labels, as_mask(lung), cfg)
    assert [d.label for d in out] == [r.label for r in recs]
    for d in out:
        if d.verdict is Verdict.KEPT:
            assert d.reason in (Reason.PASSED_OVERLAP, Reason.RESCUED_BY_SURFACE_DISTANCE)

    stricter = cfg.replace(lung_overlap_min=lo + bump, mediastinal_overlap_min=max(0.9, lo + bump))
    out2 = filter_components(recs, labels, as_mask(lung), stricter)
    for a, b in zip(out, out2):
        if a.verdict is Verdict.DISCARDED:
            assert b.verdict is Verdict.DISCARDED


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(0, 12), st.integers(2, 5))
def test_inside_peripheral_component_always_kept(y, z, size):
    lung = np.zeros((30, 20, 20), dtype=bool)
    lung[:, 2:18, 2:18] = True
    lab = np.zeros(lung.shape, dtype=np.int32)
    y, z = y % (17 - size), z % (17 - size)  # keep the block inside the lung's y/z extent
    lab[0:size, 2 + y : 2 + y + size, 2 + z : 2 + z + size] = 1  # x-centroid well left of the zone
    labels = as_labels(lab)
    cfg = PipelineConfig(min_component_voxels=size**3 - 1, lung_overlap_min=1.0, mediastinal_overlap_min=1.0)
    (d,) = filter_components(component_records(labels), labels, as_mask(lung), cfg)
    assert d.as_tuple() == (1, "Kept", "PassedOverlap")
