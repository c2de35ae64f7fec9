"""MC-dropout variance maps and the uncertainty-weighted Dice + BCE loss.

Losses are evaluated in float64 and return the exact gradient with respect to
the predicted probabilities.  The confidence weights ``alpha`` are treated as
constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import GridMismatch, NegativeUncertainty, TooFewSamples, ValueOutOfRange
from .volume import Mask, Volume, check_grid_compat

PROB_CLAMP = 1e-7

ArrayLike = Union[np.ndarray, Volume, Mask]


@dataclass(frozen=True)
class LossResult:
    value: float
    gradient: np.ndarray
    dice_term: float
    ce_term: float


def _stack(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        samples = list(samples)
        if len(samples) >= 2 and all(isinstance(s, Volume) for s in samples):
            for s in samples[1:]:
                check_grid_compat(samples[0].meta, s.meta)
        arr = np.stack([s.data if isinstance(s, Volume) else np.asarray(s) for s in samples])
    if arr.shape[0] < 2:
        raise TooFewSamples(f"need at least 2 MC samples, got {arr.shape[0]}")
    if arr.size and (np.isnan(arr).any() or arr.min() < 0 or arr.max() > 1):
        raise ValueOutOfRange("MC samples must be probabilities in [0, 1]")
    return arr.astype(np.float64)


def variance_map(samples: Sequence[Volume]) -> Volume:
    """Per-voxel population variance (divide by T) across the MC samples."""
    samples = list(samples) if not isinstance(samples, np.ndarray) else samples
    arr = _stack(samples)
    mean = arr.mean(axis=0)
    var = ((arr - mean) ** 2).mean(axis=0)
    if isinstance(samples, list) and isinstance(samples[0], Volume):
        return Volume(samples[0].meta, var)
    return var.astype(np.float32)


def alpha_map(U: Union[Volume, np.ndarray], scale: float = 1.0):
    """Confidence weights ``exp(-scale * U)``, in (0, 1]."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    data = U.data if isinstance(U, Volume) else np.asarray(U)
    if data.size and data.min() < 0:
        raise NegativeUncertainty(f"uncertainty has negative values (min {data.min()})")
    alpha = np.exp(-scale * data.astype(np.float64))
    if isinstance(U, Volume):
        return Volume(U.meta, alpha)
    return alpha


def _as_float64(x: ArrayLike) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, (Volume, Mask)) else x, dtype=np.float64)


def _prepare(p: ArrayLike, g: ArrayLike, alpha: ArrayLike = None):
    grids = [x.meta for x in (p, g, alpha) if isinstance(x, (Volume, Mask))]
    for meta in grids[1:]:
        check_grid_compat(grids[0], meta)
    arrays = [_as_float64(x) for x in (p, g) + ((alpha,) if alpha is not None else ())]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            axis = next((i for i, (s, t) in enumerate(zip(shape, a.shape)) if s != t), 0)
            raise GridMismatch(axis, (shape, a.shape))
    pa = arrays[0]
    if pa.size and (np.isnan(pa).any() or pa.min() < 0 or pa.max() > 1):
        raise ValueOutOfRange("predictions must be probabilities in [0, 1]")
    return arrays


def soft_dice(p: np.ndarray, g: np.ndarray, w: np.ndarray, eps: float):
    """Weighted soft Dice loss and its gradient in ``p``."""
    num = 2.0 * np.sum(w * p * g) + eps
    den = np.sum(w * (p + g)) + eps
    value = 1.0 - num / den
    grad = (num * w - 2.0 * w * g * den) / den**2
    return float(value), grad


def bce(p: np.ndarray, g: np.ndarray):
    """Per-voxel binary cross-entropy on clamped probabilities, and d/dp."""
    lo, hi = PROB_CLAMP, 1.0 - PROB_CLAMP
    pc = np.clip(p, lo, hi)
    loss = -(g * np.log(pc) + (1.0 - g) * np.log1p(-pc))
    grad = (1.0 - g) / (1.0 - pc) - g / pc
    # clamp is flat outside its range
    grad = np.where((p > lo) & (p < hi), grad, 0.0)
    return loss, grad


def adaptive_loss(p: ArrayLike, g: ArrayLike, alpha: ArrayLike, eps: float = 1e-5) -> LossResult:
    """alpha-weighted soft Dice plus (1 - alpha)-weighted mean BCE."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    p, g, a = _prepare(p, g, alpha)
    dice, dice_grad = soft_dice(p, g, a, eps)
    voxel_ce, ce_grad = bce(p, g)
    n = p.size
    ce = float(np.sum((1.0 - a) * voxel_ce) / n)
    grad = dice_grad + (1.0 - a) * ce_grad / n
    return LossResult(dice + ce, grad, dice, ce)


def dice_ce_loss(
    p: ArrayLike, g: ArrayLike, w_dice: float = 1.0, w_ce: float = 1.0, eps: float = 1e-5
) -> LossResult:
    """Fixed-weight soft Dice + mean BCE baseline."""
    if w_dice < 0 or w_ce < 0 or (w_dice == 0 and w_ce == 0):
        raise ValueError("weights must be non-negative and not both zero")
    if not eps > 0:
        raise ValueError("eps must be positive")
    p, g = _prepare(p, g)
    ones = np.ones_like(p)
    dice, dice_grad = soft_dice(p, g, ones, eps)
    voxel_ce, ce_grad = bce(p, g)
    n = p.size
    dice_term = w_dice * dice
    ce_term = w_ce * float(np.sum(voxel_ce) / n)
    grad = w_dice * dice_grad + w_ce * ce_grad / n
    return LossResult(dice_term + ce_term, grad, dice_term, ce_term)
