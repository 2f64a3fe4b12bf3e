"""Training losses with analytic gradients.

All image losses return ``(value, d_pred)``; LUT regularisers return gradients
shaped like the bank. Values are reduced in float64; gradients are returned in
the dtype of the input they differentiate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .color import lab_with_backward, srgb_to_lab_array
from .errors import InvalidArgument
from .lut import LutBank, WeightMap

CIE94_K1 = 0.045
CIE94_K2 = 0.015
CIE94_EPS = 1e-8

# (pred, target) -> (value, d_pred)
PerceptualHook = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class LossWeights:
    w_mse: float = 1.0
    w_smooth: float = 1e-4
    w_mono: float = 10.0
    w_color: float = 0.005
    w_perceptual: float = 0.05

    def __post_init__(self):
        for name in ("w_mse", "w_smooth", "w_mono", "w_color", "w_perceptual"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidArgument(f"{name} must be finite and >= 0, got {v}")


def _same_shape(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise InvalidArgument(f"shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def mse_loss(pred: np.ndarray, target: np.ndarray):
    pred, target = _same_shape(pred, target)
    diff = pred.astype(np.float64) - target
    value = float(np.mean(diff * diff))
    return value, (2.0 * diff / diff.size).astype(pred.dtype)


@dataclass
class SmoothGrads:
    d_cells: np.ndarray
    d_omega: np.ndarray
    d_alpha: Optional[np.ndarray] = None


def _axis_pairs(values):
    # Adjacent-cell slices along the red, green and blue grid axes.
    for axis in (2, 3, 4):
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        yield tuple(lo), tuple(hi)


def smooth_loss(bank: LutBank, weights: WeightMap, include_alpha: bool = True):
    """Squared adjacent-cell differences over every LUT, plus ||omega||^2.

    With ``include_alpha`` the per-pixel mean of ``sum_m alpha_m^2`` is added
    (mean rather than sum so the term does not grow with resolution).
    """
    v = bank.values.astype(np.float64)
    d_cells = np.zeros_like(v)
    value = 0.0
    for lo, hi in _axis_pairs(v):
        diff = v[hi] - v[lo]
        value += float(np.sum(diff * diff))
        d_cells[hi] += 2.0 * diff
        d_cells[lo] -= 2.0 * diff
    omega = np.asarray(weights.omega, dtype=np.float64)
    value += float(np.sum(omega * omega))
    grads = SmoothGrads(d_cells.astype(bank.values.dtype),
                        (2.0 * omega).astype(weights.omega.dtype))
    if include_alpha:
        alpha = np.asarray(weights.alpha, dtype=np.float64)
        n_px = alpha.shape[0] * alpha.shape[1]
        value += float(np.sum(alpha * alpha)) / n_px
        grads.d_alpha = (2.0 * alpha / n_px).astype(weights.alpha.dtype)
    return value, grads


def monotonicity_loss(bank: LutBank):
    """Sum of ``max(0, c_i - c_{i+1})`` over adjacent cells, every axis and channel."""
    v = bank.values.astype(np.float64)
    d_cells = np.zeros_like(v)
    value = 0.0
    for lo, hi in _axis_pairs(v):
        drop = v[lo] - v[hi]
        active = drop > 0
        value += float(np.sum(drop[active]))
        d_cells[lo] += active
        d_cells[hi] -= active
    return value, d_cells.astype(bank.values.dtype)


def cie94_loss(pred: np.ndarray, target: np.ndarray, eps: float = CIE94_EPS):
    """Mean per-pixel CIE94 difference; S_C and S_H use the target's chroma."""
    pred, target = _same_shape(pred, target)
    if pred.shape[-1] != 3:
        raise InvalidArgument("images need 3 channels")
    lab_p, backward = lab_with_backward(pred)
    lab_t = srgb_to_lab_array(target)

    d_l = lab_p[..., 0] - lab_t[..., 0]
    da = lab_p[..., 1] - lab_t[..., 1]
    db = lab_p[..., 2] - lab_t[..., 2]
    c_p = np.hypot(lab_p[..., 1], lab_p[..., 2])
    c_t = np.hypot(lab_t[..., 1], lab_t[..., 2])
    d_c = c_p - c_t
    resid = da * da + db * db - d_c * d_c
    d_h2 = np.maximum(resid, 0.0)
    s_c = 1.0 + CIE94_K1 * c_t
    s_h = 1.0 + CIE94_K2 * c_t
    per_px = np.sqrt(d_l * d_l + (d_c / s_c) ** 2 + d_h2 / (s_h * s_h) + eps)
    n_px = per_px.size
    value = float(np.mean(per_px))

    g = 1.0 / (2.0 * per_px * n_px)
    safe_c = np.where(c_p > 0, c_p, 1.0)
    unit_a = np.where(c_p > 0, lab_p[..., 1] / safe_c, 0.0)
    unit_b = np.where(c_p > 0, lab_p[..., 2] / safe_c, 0.0)
    h_on = (resid > 0) / (s_h * s_h)
    k_c = 2.0 * d_c / (s_c * s_c)
    d_lab = np.stack([
        g * 2.0 * d_l,
        g * (k_c * unit_a + h_on * (2.0 * da - 2.0 * d_c * unit_a)),
        g * (k_c * unit_b + h_on * (2.0 * db - 2.0 * d_c * unit_b)),
    ], axis=-1)
    return value, backward(d_lab).astype(pred.dtype)


@dataclass
class LossTerms:
    total: float
    mse: float
    smooth: float
    mono: float
    color: float
    perceptual: float = 0.0


@dataclass
class LossGrads:
    d_pred: np.ndarray
    d_cells: np.ndarray
    d_omega: np.ndarray
    d_alpha: Optional[np.ndarray] = field(default=None)


def total_loss(pred: np.ndarray, target: np.ndarray, bank: LutBank, weights: WeightMap,
               loss_weights: LossWeights = LossWeights(),
               perceptual: Optional[PerceptualHook] = None,
               include_alpha: bool = True):
    """Weighted sum of the component losses.

    The perceptual term is dropped entirely when no hook is given.
    Returns ``(LossTerms, LossGrads)``.
    """
    lw = loss_weights
    pred, target = _same_shape(pred, target)
    mse, d_mse = mse_loss(pred, target)
    smooth, sg = smooth_loss(bank, weights, include_alpha=include_alpha)
    mono, d_mono = monotonicity_loss(bank)
    color, d_color = cie94_loss(pred, target)
    perc = 0.0
    d_pred = lw.w_mse * d_mse.astype(np.float64) + lw.w_color * d_color.astype(np.float64)
    if perceptual is not None:
        perc, d_perc = perceptual(pred, target)
        d_pred = d_pred + lw.w_perceptual * np.asarray(d_perc, dtype=np.float64)
    total = (lw.w_mse * mse + lw.w_smooth * smooth + lw.w_mono * mono
             + lw.w_color * color + (lw.w_perceptual * perc if perceptual is not None else 0.0))
    d_cells = (lw.w_smooth * sg.d_cells.astype(np.float64)
               + lw.w_mono * d_mono.astype(np.float64)).astype(bank.values.dtype)
    d_alpha = None
    if sg.d_alpha is not None:
        d_alpha = (lw.w_smooth * sg.d_alpha).astype(weights.alpha.dtype)
    grads = LossGrads(
        d_pred=d_pred.astype(pred.dtype),
        d_cells=d_cells,
        d_omega=(lw.w_smooth * sg.d_omega).astype(weights.omega.dtype),
        d_alpha=d_alpha,
    )
    terms = LossTerms(total=float(total), mse=mse, smooth=smooth, mono=mono,
                      color=color, perceptual=perc)
    return terms, grads
