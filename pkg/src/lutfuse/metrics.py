"""Image quality metrics on [0, 1] float images."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgument

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
LUMA = np.array([0.299, 0.587, 0.114])


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio for a peak of 1.0; ``inf`` for identical images."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_1d():
    x = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    # Separable 'valid' correlation with the symmetric window.
    k = g.size
    H, W = img.shape
    rows = sum(g[i] * img[i:H - k + 1 + i, :] for i in range(k))
    return sum(g[i] * rows[:, i:W - k + 1 + i] for i in range(k))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM on the luma channel (11x11 Gaussian window, sigma 1.5, valid region)."""
    a, b = _check_pair(a, b)
    if a.ndim == 3:
        a = a @ LUMA
        b = b @ LUMA
    if min(a.shape) < SSIM_WINDOW:
        raise InvalidArgument(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    g = _gaussian_1d()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))
