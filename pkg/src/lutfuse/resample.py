"""Bilinear resampling shared by image resizing and weight-map upsampling.

Convention: half-pixel centers (``align_corners=False``). Output index d maps
to source coordinate ``(d + 0.5) * in / out - 0.5``, clamped at 0 below; the
upper neighbour is clamped to the last row/column. Interpolation uses the
``a + f * (b - a)`` form so constant inputs come back bit-exact.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import InvalidArgument


def axis_coords(n_in: int, n_out: int, dtype=np.float32):
    """Return ``(i0, i1, frac)`` arrays for resampling one axis."""
    if n_in < 1 or n_out < 1:
        raise InvalidArgument(f"resample sizes must be >= 1, got {n_in} -> {n_out}")
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * n_in / n_out - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = (src - i0).astype(dtype)
    frac[i0 == i1] = 0
    return i0, i1, frac


def _resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if src.ndim != 3:
        raise InvalidArgument(f"expected an (H, W, C) array, got shape {src.shape}")
    if out_h < 1 or out_w < 1:
        raise InvalidArgument(f"target size must be >= 1, got {out_h}x{out_w}")
    if src.shape[0] < 1 or src.shape[1] < 1:
        raise InvalidArgument("source has a zero dimension")
    dtype = src.dtype if src.dtype in (np.float32, np.float64) else np.dtype(np.float32)
    src = np.ascontiguousarray(src, dtype=dtype)
    out = np.empty((out_h, out_w, src.shape[2]), dtype=dtype)
    ys = axis_coords(src.shape[0], out_h, dtype)
    xs = axis_coords(src.shape[1], out_w, dtype)
    _kernels.resize_kernel(src, *ys, *xs, out)
    return out


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an ``(H, W, C)`` image; the result stays within the source range."""
    return _resize(np.asarray(image), out_h, out_w)


def upsample_bilinear(map_lowres: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an ``(h, w, M)`` weight map to ``(H, W, M)``."""
    return _resize(np.asarray(map_lowres), out_h, out_w)


def upsample_bilinear_backward(d_output: np.ndarray, source_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`upsample_bilinear` for a source of size ``source_hw``.

    The clamp that keeps forward values inside the neighbour range never
    binds for genuine interpolation, so the adjoint is that of the plain
    bilinear map.
    """
    d_output = np.asarray(d_output)
    if d_output.ndim != 3:
        raise InvalidArgument(f"expected an (H, W, M) gradient, got shape {d_output.shape}")
    h, w = source_hw
    if h < 1 or w < 1:
        raise InvalidArgument(f"source size must be >= 1, got {h}x{w}")
    dtype = d_output.dtype if d_output.dtype in (np.float32, np.float64) else np.dtype(np.float32)
    d_output = np.ascontiguousarray(d_output, dtype=dtype)
    H, W = d_output.shape[:2]
    ys = axis_coords(h, H, dtype)
    xs = axis_coords(w, W, dtype)
    d_src = np.zeros((h, w, d_output.shape[2]), dtype=dtype)
    _kernels.resize_backward_kernel(d_output, *ys, *xs, dtype.type(1), d_src)
    return d_src
