"""In-memory stages shared by the CLI, the tests and the demo scripts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .anatomy import FilterDecision, apply_top_k, filter_components, select_top_k
from .io.config import PipelineConfig
from .io.report import CaseReport
from .metrics import boundary_dice, dice, hd95
from .morphology import ComponentRecord, component_records, dilate, label_components, threshold_probability
from .roi import RoiBox, bounding_box
from .volume import LabelMap, Mask, Volume, check_grid_compat


@dataclass
class PostprocessResult:
    mask: Mask
    labels: LabelMap
    records: List[ComponentRecord]
    decisions: List[FilterDecision]
    kept: List[int]
    boxes: List[RoiBox]

    @property
    def components_before(self) -> int:
        return len(self.records)

    @property
    def components_after(self) -> int:
        return len(self.kept)

    def decision_rows(self) -> List[dict]:
        voxels = {r.label: r.voxels for r in self.records}
        rows = []
        for d in self.decisions:
            rows.append(
                {
                    "label": d.label,
                    "verdict": d.verdict.value,
                    "reason": d.reason.value,
                    "voxels": voxels[d.label],
                    "overlap": d.overlap,
                    "surface_distance": d.surface_distance,
                    "mediastinal": d.mediastinal,
                }
            )
        return rows


def candidate_components(coarse: Volume, cfg: PipelineConfig):
    """Threshold, merge nearby fragments by dilation, and label.

    Dilation only decides which voxels belong together: the returned labels
    cover the thresholded voxels, not the dilated ones.
    """
    fg = threshold_probability(coarse, cfg.threshold_prob)
    merged = dilate(fg, cfg.dilation_radius, cfg.dilation_iterations)
    grouped, _ = label_components(merged, cfg.connectivity)
    labels = LabelMap(fg.meta, grouped.data * fg.data)
    return fg, labels, component_records(labels)


def postprocess(coarse: Volume, lung: Mask, cfg: PipelineConfig) -> PostprocessResult:
    check_grid_compat(coarse.meta, lung.meta)
    _, labels, records = candidate_components(coarse, cfg)
    decisions = filter_components(records, labels, lung, cfg)
    kept = select_top_k(decisions, records, cfg.top_k)
    decisions = apply_top_k(decisions, kept)
    mask = Mask(labels.meta, np.isin(labels.data, kept))
    boxes = [bounding_box(records, label, labels.meta.dims) for label in kept]
    return PostprocessResult(mask, labels, records, decisions, kept, boxes)


def case_report(
    case_id: str,
    pred: Mask,
    gt: Mask,
    cfg: PipelineConfig,
    components_before: int,
    components_after: int,
    decisions: Sequence[FilterDecision] = (),
) -> CaseReport:
    check_grid_compat(pred.meta, gt.meta)
    return CaseReport(
        case_id=case_id,
        dice=dice(pred, gt),
        hd95_mm=hd95(pred, gt),
        boundary_dice=boundary_dice(pred, gt, cfg.boundary_tolerance_voxels),
        components_before=components_before,
        components_after=components_after,
        decisions=tuple(d.as_tuple() for d in decisions),
    )


def evaluate_case(
    case_id: str,
    coarse: Volume,
    lung: Mask,
    gt: Mask,
    cfg: PipelineConfig,
    final: Optional[Mask] = None,
):
    """Coarse and final reports for one case.

    ``final`` defaults to the post-processed coarse mask, i.e. an identity
    second stage.
    """
    result = postprocess(coarse, lung, cfg)
    fg = threshold_probability(coarse, cfg.threshold_prob)
    n = result.components_before
    coarse_report = case_report(case_id, fg, gt, cfg, n, n)
    final_mask = result.mask if final is None else final
    final_report = case_report(
        case_id, final_mask, gt, cfg, n, result.components_after, result.decisions
    )
    return coarse_report, final_report, result
