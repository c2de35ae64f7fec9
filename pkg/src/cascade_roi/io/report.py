"""Per-case report records and their JSON/CSV serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from ..errors import IoFailure

REPORT_FIELDS = (
    "case_id",
    "dice",
    "hd95_mm",
    "boundary_dice",
    "components_before",
    "components_after",
    "decisions",
)


@dataclass(frozen=True)
class CaseReport:
    case_id: str
    dice: float
    hd95_mm: float
    boundary_dice: float
    components_before: int
    components_after: int
    # (label, verdict, reason) triples
    decisions: Tuple[Tuple[int, str, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.components_after > self.components_before:
            raise ValueError(
                f"{self.case_id}: components_after ({self.components_after}) exceeds "
                f"components_before ({self.components_before})"
            )
        object.__setattr__(self, "decisions", tuple(tuple(d) for d in self.decisions))

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "dice": self.dice,
            # JSON has no infinity; null is the empty-mask sentinel
            "hd95_mm": self.hd95_mm if math.isfinite(self.hd95_mm) else None,
            "boundary_dice": self.boundary_dice,
            "components_before": self.components_before,
            "components_after": self.components_after,
            "decisions": [
                {"label": int(label), "verdict": verdict, "reason": reason}
                for label, verdict, reason in self.decisions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseReport":
        hd = d["hd95_mm"]
        return cls(
            case_id=d["case_id"],
            dice=float(d["dice"]),
            hd95_mm=math.inf if hd is None else float(hd),
            boundary_dice=float(d["boundary_dice"]),
            components_before=int(d["components_before"]),
            components_after=int(d["components_after"]),
            decisions=tuple((int(x["label"]), x["verdict"], x["reason"]) for x in d["decisions"]),
        )


def reports_to_json(reports: Sequence[CaseReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, allow_nan=False) + "\n"


def reports_to_csv(reports: Sequence[CaseReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for r in reports:
        writer.writerow(
            [
                r.case_id,
                repr(r.dice),
                repr(r.hd95_mm) if math.isfinite(r.hd95_mm) else "inf",
                repr(r.boundary_dice),
                r.components_before,
                r.components_after,
                len(r.decisions),
            ]
        )
    return buf.getvalue()


def write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_report(reports: Sequence[CaseReport], path, format: str = "json") -> None:
    """Write case reports as a JSON array or as CSV (decisions reduced to a count)."""
    if format == "json":
        text = reports_to_json(reports)
    elif format == "csv":
        text = reports_to_csv(reports)
    else:
        raise ValueError(f"unknown report format {format!r}")
    write_text(path, text)


def read_report(path) -> List[CaseReport]:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return [CaseReport.from_dict(d) for d in data]
