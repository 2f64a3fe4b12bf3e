"""Reverse-mode gradients of the spatial-aware apply, plus a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .lut import LutBank, WeightMap, _check_weights, _consts, _grid, check_image
from .resample import upsample_bilinear, upsample_bilinear_backward

__all__ = [
    "ApplyGradients",
    "backward_apply",
    "central_differences",
    "finite_diff_check",
    "relative_error",
    "upsample_bilinear",
    "upsample_bilinear_backward",
]

# Row blocks for private gradient buffers. Fixed, so the merge order (and the
# result) is the same for any thread count.
MAX_BLOCKS = 8


@dataclass
class ApplyGradients:
    d_luts: np.ndarray  # (T, M, N, N, N, 3)
    d_alpha: np.ndarray  # (H, W, M)
    d_omega: np.ndarray  # (T,)


def _row_blocks(height: int) -> np.ndarray:
    n = min(MAX_BLOCKS, height)
    return np.array([b * height // n for b in range(n + 1)], dtype=np.int64)


def backward_apply(bank: LutBank, weights: WeightMap, image: np.ndarray,
                   d_output: np.ndarray) -> ApplyGradients:
    """Gradients of ``sum(d_output * apply_spatial_aware(bank, weights, image))``.

    The forward map is linear in cells, in alpha and in omega separately, so
    these are exact. Computed in the bank's dtype.
    """
    image = check_image(image)
    _check_weights(bank, weights, image)
    d_output = np.asarray(d_output)
    if d_output.shape != image.shape:
        raise InvalidArgument(f"d_output has shape {d_output.shape}, expected {image.shape}")
    if np.isnan(d_output).any():
        raise InvalidArgument("d_output contains NaN")

    values = np.ascontiguousarray(bank.values)
    dtype = values.dtype
    T, M, N = bank.t_scenarios, bank.m_categories, bank.n_bins
    H, W = image.shape[:2]
    rows = _row_blocks(H)
    n_blocks = rows.size - 1
    g_cells = np.zeros((n_blocks, M, N, N, N, 3), dtype=dtype)
    d_omega_part = np.zeros((n_blocks, T), dtype=dtype)
    d_alpha = np.empty((H, W, M), dtype=dtype)
    zero, one = _consts(dtype)
    omega = np.ascontiguousarray(weights.omega, dtype=dtype)
    _kernels.backward_kernel(
        values, omega, np.ascontiguousarray(weights.alpha, dtype=dtype),
        np.ascontiguousarray(image, dtype=dtype), np.ascontiguousarray(d_output, dtype=dtype),
        _grid(N, dtype), zero, one, rows, g_cells, d_alpha, d_omega_part)

    g = g_cells[0].copy()
    d_omega = d_omega_part[0].copy()
    for b in range(1, n_blocks):
        g += g_cells[b]
        d_omega += d_omega_part[b]
    d_luts = omega[:, None, None, None, None, None] * g[None]
    return ApplyGradients(d_luts=d_luts, d_alpha=d_alpha, d_omega=d_omega)


def central_differences(forward: Callable[[np.ndarray], float], x: np.ndarray,
                        step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``forward`` at ``x``, in float64."""
    if not step > 0:
        raise InvalidArgument(f"step must be positive, got {step}")
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    fd = np.empty(flat.size)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        f_plus = float(forward(x))
        flat[idx] = orig - step
        f_minus = float(forward(x))
        flat[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise InvalidArgument("forward returned a non-finite value")
        fd[idx] = (f_plus - f_minus) / (2 * step)
    return fd.reshape(x.shape)


def relative_error(analytic: np.ndarray, reference: np.ndarray, floor: float = 1e-8) -> float:
    """``max |a - r| / max(|a|, |r|, floor)`` over all coordinates."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    r = np.asarray(reference, dtype=np.float64).reshape(-1)
    if a.size != r.size:
        raise InvalidArgument(f"gradient has {a.size} entries, reference has {r.size}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(r)), floor)
    return float(np.max(np.abs(a - r) / denom))


def finite_diff_check(forward: Callable[[np.ndarray], float], x: np.ndarray,
                      analytic_grad: np.ndarray, step: float = 1e-6,
                      floor: float = 1e-8) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``forward`` at ``x``.

    The relative error per coordinate is ``|a - fd| / max(|a|, |fd|, floor)``.
    ``forward`` receives a perturbed copy of ``x``; evaluate it in float64 when
    checking float32 gradients.
    """
    if np.size(analytic_grad) != np.size(x):
        raise InvalidArgument(f"gradient has {np.size(analytic_grad)} entries, parameter has {np.size(x)}")
    return relative_error(analytic_grad, central_differences(forward, x, step), floor)
