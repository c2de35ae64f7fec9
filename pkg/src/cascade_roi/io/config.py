"""Pipeline configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from typing import Union

from ..errors import IoFailure, OutOfRange, ParseFailure, UnknownKey

ALL = "ALL"


@dataclass(frozen=True)
class PipelineConfig:
    threshold_prob: float = 0.5
    dilation_radius: int = 1
    dilation_iterations: int = 1
    lung_overlap_min: float = 0.80
    mediastinal_overlap_min: float = 0.90
    surface_distance_max: float = 5.0
    min_component_voxels: int = 50
    top_k: Union[int, str] = 1
    roi_margin: int = 0
    connectivity: int = 26
    boundary_tolerance_voxels: int = 2
    alpha_scale: float = 1.0

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "PipelineConfig":
        for key in changes:
            if key not in _FIELD_TYPES:
                raise UnknownKey(key)
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}

_INT_KEYS = {
    "dilation_radius",
    "dilation_iterations",
    "min_component_voxels",
    "roi_margin",
    "connectivity",
    "boundary_tolerance_voxels",
}
_FLOAT_KEYS = {
    "threshold_prob",
    "lung_overlap_min",
    "mediastinal_overlap_min",
    "surface_distance_max",
    "alpha_scale",
}


def _check(ok: bool, key: str, value) -> None:
    if not ok:
        raise OutOfRange(key, value)


def validate(cfg: PipelineConfig) -> None:
    for key in _FLOAT_KEYS:
        value = getattr(cfg, key)
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), key, value)
        _check(math.isfinite(value), key, value)
    for key in _INT_KEYS:
        value = getattr(cfg, key)
        _check(isinstance(value, int) and not isinstance(value, bool), key, value)

    _check(0.0 < cfg.threshold_prob < 1.0, "threshold_prob", cfg.threshold_prob)
    _check(cfg.dilation_radius >= 1, "dilation_radius", cfg.dilation_radius)
    _check(cfg.dilation_iterations >= 0, "dilation_iterations", cfg.dilation_iterations)
    _check(0.0 <= cfg.lung_overlap_min <= 1.0, "lung_overlap_min", cfg.lung_overlap_min)
    _check(
        0.0 <= cfg.mediastinal_overlap_min <= 1.0
        and cfg.mediastinal_overlap_min >= cfg.lung_overlap_min,
        "mediastinal_overlap_min",
        cfg.mediastinal_overlap_min,
    )
    _check(cfg.surface_distance_max >= 0.0, "surface_distance_max", cfg.surface_distance_max)
    _check(cfg.min_component_voxels >= 1, "min_component_voxels", cfg.min_component_voxels)
    k = cfg.top_k
    _check(
        k == ALL or (isinstance(k, int) and not isinstance(k, bool) and k >= 1), "top_k", k
    )
    _check(cfg.roi_margin >= 0, "roi_margin", cfg.roi_margin)
    _check(cfg.connectivity in (6, 18, 26), "connectivity", cfg.connectivity)
    _check(cfg.boundary_tolerance_voxels >= 1, "boundary_tolerance_voxels", cfg.boundary_tolerance_voxels)
    _check(cfg.alpha_scale > 0.0, "alpha_scale", cfg.alpha_scale)


def parse_value(key: str, text: str):
    """Convert the textual value of ``key`` to its Python type."""
    text = text.strip()
    if key not in _FIELD_TYPES:
        raise UnknownKey(key)
    if key == "top_k":
        if text.upper() == ALL:
            return ALL
        return _parse_int(key, text)
    if key in _INT_KEYS:
        return _parse_int(key, text)
    try:
        return float(text)
    except ValueError:
        raise ParseFailure(f"{key} = {text}") from None


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        as_float = float(text)
    except ValueError:
        raise ParseFailure(f"{key} = {text}") from None
    # "1.5" for an integer field is a range problem, not a syntax one
    raise OutOfRange(key, as_float)


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseFailure(line, lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key or not value.strip():
            raise ParseFailure(line, lineno)
        if key not in _FIELD_TYPES:
            raise UnknownKey(key)
        values[key] = parse_value(key, value)
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg: PipelineConfig, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(dump_config(cfg))
    except OSError as exc:
        raise IoFailure(f"cannot write config {path}: {exc}") from exc
