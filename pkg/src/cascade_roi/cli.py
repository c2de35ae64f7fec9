"""``cascade-roi`` command line: batch driver for the inter-model pipeline stages.

Each subcommand reads a JSON manifest (an array of case objects), processes
cases on a bounded thread pool and writes per-case files into ``--out``.
A failing case is recorded in ``<out>/errors_<command>.json`` and makes the
process exit non-zero once the batch has finished.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import CascadeError, MissingGroundTruth, MissingRoiPrediction, TooFewSamples, UnknownKey
from .io.config import PipelineConfig, load_config, parse_value
from .io.nifti import read_nifti, write_nifti
from .io.report import reports_to_csv, write_text
from .metrics import component_trend
from .phantom import PhantomSpec, generate
from .pipeline import case_report, evaluate_case, postprocess
from .roi import RoiBox, crop, expand_box, paste_back
from .uncertainty import alpha_map, variance_map
from .volume import Mask, Volume

log = logging.getLogger("cascade_roi")

JOBS_ENV = "CASCADE_ROI_JOBS"


@dataclass
class CaseManifest:
    case_id: str
    coarse_pred: Path
    lung_mask: Path
    ct: Optional[Path] = None
    gt: Optional[Path] = None
    mc_samples: List[Path] = field(default_factory=list)
    roi_preds: List[Path] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict, base: Path) -> "CaseManifest":
        def resolve(p):
            return None if p is None else (base / p)

        missing = [k for k in ("case_id", "coarse_pred", "lung_mask") if k not in d]
        if missing:
            raise ValueError(f"manifest entry lacks {', '.join(missing)}")
        return cls(
            case_id=str(d["case_id"]),
            coarse_pred=resolve(d["coarse_pred"]),
            lung_mask=resolve(d["lung_mask"]),
            ct=resolve(d.get("ct")),
            gt=resolve(d.get("gt")),
            mc_samples=[resolve(p) for p in d.get("mc_samples") or []],
            roi_preds=[resolve(p) for p in d.get("roi_preds") or []],
        )


def load_manifest(path) -> List[CaseManifest]:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = [data]
    cases = [CaseManifest.from_dict(d, path.parent) for d in data]
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest contains duplicate case_id values")
    return cases


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _load_mask(path) -> Mask:
    v = read_nifti(path)
    if isinstance(v, Mask):
        return v
    return Mask(v.meta, v.data > 0)


def _load_volume(path) -> Volume:
    v = read_nifti(path)
    if isinstance(v, Volume):
        return v
    return Volume(v.meta, v.data.astype(np.float32))


# batch machinery -------------------------------------------------------------


@dataclass
class CaseOutcome:
    case_id: str
    value: object = None
    error: Optional[str] = None


def run_batch(cases: Sequence[CaseManifest], fn: Callable, jobs: int) -> List[CaseOutcome]:
    """Apply ``fn`` to every case; results come back sorted by case_id."""

    def guarded(case):
        try:
            return CaseOutcome(case.case_id, fn(case))
        except (CascadeError, OSError, ValueError, KeyError) as exc:
            log.error("case %s failed: %s", case.case_id, exc)
            return CaseOutcome(case.case_id, error=f"{type(exc).__name__}: {exc}")

    if jobs <= 1:
        outcomes = [guarded(c) for c in cases]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(guarded, cases))
    return sorted(outcomes, key=lambda o: o.case_id)


def _errors(outcomes: Sequence[CaseOutcome]) -> List[dict]:
    return [{"case_id": o.case_id, "error": o.error} for o in outcomes if o.error]


def _finish(out: Path, command: str, outcomes: Sequence[CaseOutcome]) -> int:
    errors = _errors(outcomes)
    path = out / f"errors_{command}.json"
    if errors:
        write_text(path, dump_json(errors))
        return 1
    if path.exists():
        path.unlink()
    return 0


# boxes -----------------------------------------------------------------------


def boxes_path(out: Path, case_id: str) -> Path:
    return out / f"{case_id}_boxes.json"


def read_boxes(path) -> List[RoiBox]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    dims = tuple(data["source_dims"])
    return [RoiBox.from_list(b, dims) for b in data["boxes"]]


def roi_name(case_id: str, k: int, margin: int) -> str:
    return f"{case_id}_roi{k}_m{margin}.nii.gz"


# subcommands -----------------------------------------------------------------


def cmd_postprocess(cases, cfg: PipelineConfig, out: Path, jobs: int) -> int:
    def one(case: CaseManifest):
        coarse = _load_volume(case.coarse_pred)
        lung = _load_mask(case.lung_mask)
        res = postprocess(coarse, lung, cfg)
        write_nifti(res.mask, out / f"{case.case_id}_mask.nii.gz")
        write_text(
            boxes_path(out, case.case_id),
            dump_json(
                {
                    "case_id": case.case_id,
                    "source_dims": list(res.mask.meta.dims),
                    "labels": res.kept,
                    "boxes": [b.to_list() for b in res.boxes],
                }
            ),
        )
        write_text(out / f"{case.case_id}_decisions.json", dump_json(res.decision_rows()))
        return res

    return _finish(out, "postprocess", run_batch(cases, one, jobs))


def cmd_extract_roi(cases, cfg: PipelineConfig, out: Path, jobs: int, margin: int) -> int:
    def one(case: CaseManifest):
        boxes = [expand_box(b, margin) for b in read_boxes(boxes_path(out, case.case_id))]
        if not boxes:
            return 0
        coarse = _load_volume(case.coarse_pred)
        ct = _load_volume(case.ct) if case.ct is not None else None
        for k, box in enumerate(boxes):
            name = roi_name(case.case_id, k, margin)
            write_nifti(crop(coarse, box), out / name)
            if ct is not None:
                write_nifti(crop(ct, box), out / name.replace(".nii.gz", "_ct.nii.gz"))
        write_text(
            out / f"{case.case_id}_rois_m{margin}.json",
            dump_json(
                {
                    "case_id": case.case_id,
                    "margin": margin,
                    "source_dims": list(coarse.meta.dims),
                    "boxes": [b.to_list() for b in boxes],
                }
            ),
        )
        return len(boxes)

    return _finish(out, "extract-roi", run_batch(cases, one, jobs))


def pasted_prediction(case: CaseManifest, out: Path, margin: int) -> Mask:
    boxes = [expand_box(b, margin) for b in read_boxes(boxes_path(out, case.case_id))]
    if len(case.roi_preds) < len(boxes):
        raise MissingRoiPrediction(
            f"{case.case_id}: {len(boxes)} ROI boxes but {len(case.roi_preds)} ROI predictions"
        )
    meta = _load_volume(case.coarse_pred).meta
    items = [(box, _load_mask(p)) for box, p in zip(boxes, case.roi_preds)]
    return paste_back(meta, items)


def cmd_pasteback(cases, cfg: PipelineConfig, out: Path, jobs: int, margin: int) -> int:
    def one(case: CaseManifest):
        mask = pasted_prediction(case, out, margin)
        write_nifti(mask, out / f"{case.case_id}_final.nii.gz")

    return _finish(out, "pasteback", run_batch(cases, one, jobs))


def _evaluate(case: CaseManifest, cfg: PipelineConfig, out: Path, margin: int, coarse_too=True):
    if case.gt is None:
        raise MissingGroundTruth(f"{case.case_id}: no ground truth in manifest")
    coarse = _load_volume(case.coarse_pred)
    lung = _load_mask(case.lung_mask)
    gt = _load_mask(case.gt)
    final = pasted_prediction(case, out, margin) if case.roi_preds else None
    if not coarse_too:
        res = postprocess(coarse, lung, cfg)
        mask = res.mask if final is None else final
        return None, case_report(
            case.case_id, mask, gt, cfg, res.components_before, res.components_after, res.decisions
        )
    coarse_rep, final_rep, _ = evaluate_case(case.case_id, coarse, lung, gt, cfg, final)
    return coarse_rep, final_rep


def _mean(values) -> Optional[float]:
    vals = [v for v in values if math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def metrics_summary(reports) -> dict:
    return {
        "n_cases": len(reports),
        "mean_dice": _mean([r.dice for r in reports]),
        "mean_hd95_mm": _mean([r.hd95_mm for r in reports]),
        "mean_boundary_dice": _mean([r.boundary_dice for r in reports]),
        "hd95_excluded": sum(1 for r in reports if not math.isfinite(r.hd95_mm)),
    }


def cmd_metrics(cases, cfg: PipelineConfig, out: Path, jobs: int, margin: int) -> int:
    outcomes = run_batch(cases, lambda c: _evaluate(c, cfg, out, margin), jobs)
    good = [o.value for o in outcomes if o.error is None]
    coarse = [c for c, _ in good]
    final = [f for _, f in good]
    trend = component_trend(final).to_dict() if final else {"status": "no-cases"}
    report = {
        "cases": [r.to_dict() for r in final],
        "coarse": [r.to_dict() for r in coarse],
        "summary": {"final": metrics_summary(final), "coarse": metrics_summary(coarse)},
        "trend": trend,
        "errors": _errors(outcomes),
    }
    write_text(out / "report.json", dump_json(report))
    write_text(out / "report.csv", reports_to_csv(final))
    write_text(out / "report_coarse.csv", reports_to_csv(coarse))
    return _finish(out, "metrics", outcomes)


def cmd_uncertainty(cases, cfg: PipelineConfig, out: Path, jobs: int) -> int:
    def one(case: CaseManifest):
        if len(case.mc_samples) < 2:
            raise TooFewSamples(f"{case.case_id}: {len(case.mc_samples)} MC samples listed")
        samples = [_load_volume(p) for p in case.mc_samples]
        U = variance_map(samples)
        write_nifti(U, out / f"{case.case_id}_uncertainty.nii.gz")
        write_nifti(alpha_map(U, cfg.alpha_scale), out / f"{case.case_id}_alpha.nii.gz")

    return _finish(out, "uncertainty", run_batch(cases, one, jobs))


def sweep_rows(cases, cfg: PipelineConfig, key: str, values: Sequence, jobs: int, out: Path, margin: int):
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    all_outcomes = []
    for value in values:
        cfg_v = cfg.replace(**{key: value})
        outcomes = run_batch(cases, lambda c: _evaluate(c, cfg_v, out, margin, False)[1], jobs)
        all_outcomes.extend(outcomes)
        final = [o.value for o in outcomes if o.error is None]
        s = metrics_summary(final)
        rows.append(
            {
                "key": key,
                "value": value,
                "mean_dice": s["mean_dice"],
                "mean_hd95_mm": s["mean_hd95_mm"],
                "n_cases": s["n_cases"],
                "hd95_excluded": s["hd95_excluded"],
            }
        )
    return rows, all_outcomes


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    cols = ["key", "value", "mean_dice", "mean_hd95_mm", "n_cases", "hd95_excluded"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow(["" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else row[c]) for c in cols])
    return buf.getvalue()


def cmd_sweep(cases, cfg: PipelineConfig, out: Path, jobs: int, margin: int, key: str, raw_values: str) -> int:
    if key not in PipelineConfig.__dataclass_fields__:
        raise UnknownKey(key)
    texts = [v for v in (raw_values or "").split(",") if v.strip()]
    values = [parse_value(key, v) for v in texts]
    rows, outcomes = sweep_rows(cases, cfg, key, values, jobs, out, margin)
    write_text(out / f"sweep_{key}.csv", sweep_csv(rows))
    return _finish(out, "sweep", outcomes)


def phantom_specs(args) -> List[PhantomSpec]:
    if args.manifest:
        with open(args.manifest, encoding="utf-8") as f:
            data = json.load(f)
        return [PhantomSpec.from_dict(d) for d in data]
    return [
        PhantomSpec(
            seed=args.seed + i,
            dims=tuple(args.dims),
            tumor_radius=args.radius,
            tumor_zone=args.zone,
            n_spurious=args.n_spurious,
            noise_flip_prob=args.noise,
            spurious_placement=args.placement,
        )
        for i in range(args.count)
    ]


def write_phantom(spec: PhantomSpec, out: Path) -> dict:
    """Write one phantom's volumes and return its manifest entry."""
    case = f"phantom_{spec.seed:06d}"
    ph = generate(spec)
    names = {
        "lung_mask": f"{case}_lung.nii.gz",
        "gt": f"{case}_gt.nii.gz",
        "coarse_pred": f"{case}_coarse.nii.gz",
    }
    write_nifti(ph.lung, out / names["lung_mask"])
    write_nifti(ph.gt, out / names["gt"])
    write_nifti(ph.coarse_prob, out / names["coarse_pred"])
    samples = []
    for t, s in enumerate(ph.samples):
        name = f"{case}_mc{t}.nii.gz"
        write_nifti(s, out / name)
        samples.append(name)
    echo = {
        "spec": spec.to_dict(),
        "tumor": {"center": list(ph.tumor.center), "radius": ph.tumor.radius},
        "spurious": [
            {"center": list(s.center), "radius": s.radius, "kind": s.kind} for s in ph.spurious
        ],
    }
    write_text(out / f"{case}_spec.json", dump_json(echo))
    return {"case_id": case, **names, "mc_samples": samples}


def cmd_phantom(args, out: Path, jobs: int) -> int:
    specs = phantom_specs(args)
    # reuse the batch machinery; specs are keyed by seed
    fake = [CaseManifest(f"phantom_{s.seed:06d}", Path(), Path()) for s in specs]
    by_id = {c.case_id: s for c, s in zip(fake, specs)}
    outcomes = run_batch(fake, lambda c: write_phantom(by_id[c.case_id], out), jobs)
    entries = [o.value for o in outcomes if o.error is None]
    write_text(out / "manifest.json", dump_json(entries))
    return _finish(out, "phantom", outcomes)


# entry point -----------------------------------------------------------------

COMMANDS = ("postprocess", "extract-roi", "pasteback", "metrics", "uncertainty", "phantom", "sweep")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cascade-roi", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--manifest", help="JSON array of cases (phantom: array of phantom specs)")
    p.add_argument("--config", help="key = value pipeline configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--margin", type=int, default=None, help="ROI margin in voxels (default: config roi_margin)")
    p.add_argument("--jobs", type=int, default=None, help=f"worker threads (default: ${JOBS_ENV} or 1)")
    p.add_argument("--key", help="sweep: config key to vary")
    p.add_argument("--values", help="sweep: comma-separated values")
    g = p.add_argument_group("phantom")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dims", type=int, nargs=3, default=(96, 96, 96))
    g.add_argument("--radius", type=float, default=8.0)
    g.add_argument("--zone", default="peripheral", choices=("peripheral", "mediastinal", "pleural-straddling"))
    g.add_argument("--n-spurious", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--placement", default="mixed", choices=("mixed", "exterior", "interior"))
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    jobs = args.jobs if args.jobs is not None else int(os.environ.get(JOBS_ENV, "1"))
    jobs = max(1, jobs)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "phantom":
            return cmd_phantom(args, out, jobs)
        if not args.manifest:
            raise ValueError(f"{args.command} requires --manifest")
        cfg = load_config(args.config) if args.config else PipelineConfig()
        margin = cfg.roi_margin if args.margin is None else args.margin
        if margin < 0:
            raise ValueError("--margin must be >= 0")
        cases = load_manifest(args.manifest)
        if args.command == "postprocess":
            return cmd_postprocess(cases, cfg, out, jobs)
        if args.command == "extract-roi":
            return cmd_extract_roi(cases, cfg, out, jobs, margin)
        if args.command == "pasteback":
            return cmd_pasteback(cases, cfg, out, jobs, margin)
        if args.command == "metrics":
            return cmd_metrics(cases, cfg, out, jobs, margin)
        if args.command == "uncertainty":
            return cmd_uncertainty(cases, cfg, out, jobs)
        return cmd_sweep(cases, cfg, out, jobs, margin, args.key, args.values)
    except (CascadeError, OSError, ValueError, KeyError) as exc:
        print(f"cascade-roi: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
