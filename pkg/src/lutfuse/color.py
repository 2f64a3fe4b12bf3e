"""sRGB (D65) to CIELAB conversion with a hand-written reverse pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

# IEC 61966-2-1 linear sRGB -> XYZ
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
D65_WHITE = np.array([0.95047, 1.0, 1.08883])

_DELTA = 6.0 / 29.0
_LIN_SLOPE = 1.0 / (3.0 * _DELTA ** 2)

# d(L, a, b) / d(fx, fy, fz)
_LAB_FROM_F = np.array([
    [0.0, 116.0, 0.0],
    [500.0, -500.0, 0.0],
    [0.0, 200.0, -200.0],
])


@dataclass(frozen=True)
class LabColor:
    L: float
    a: float
    b: float


def srgb_decode(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c)
    return np.where(c <= 0.04045, c / 12.92,
                    ((np.maximum(c, 0.04045) + 0.055) / 1.055) ** 2.4)


def _srgb_decode_deriv(c):
    return np.where(c <= 0.04045, 1.0 / 12.92,
                    2.4 / 1.055 * ((np.maximum(c, 0.04045) + 0.055) / 1.055) ** 1.4)


def _f(t):
    return np.where(t > _DELTA ** 3, np.cbrt(np.maximum(t, _DELTA ** 3)), t * _LIN_SLOPE + 4.0 / 29.0)


def _f_deriv(t):
    return np.where(t > _DELTA ** 3, np.cbrt(np.maximum(t, _DELTA ** 3)) ** -2 / 3.0, _LIN_SLOPE)


def _forward(rgb):
    lin = srgb_decode(rgb)
    xyz_n = (lin @ SRGB_TO_XYZ.T) / D65_WHITE
    lab = _f(xyz_n) @ _LAB_FROM_F.T
    lab[..., 0] -= 16.0
    return lab, (rgb, xyz_n)


def srgb_to_lab_array(rgb: np.ndarray) -> np.ndarray:
    """Vectorised conversion of ``(..., 3)`` sRGB values in [0, 1] to LAB (float64)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise InvalidArgument(f"last axis must have 3 components, got shape {rgb.shape}")
    if np.isnan(rgb).any():
        raise InvalidArgument("color contains NaN")
    return _forward(rgb)[0]


def srgb_to_lab(color) -> LabColor:
    L, a, b = srgb_to_lab_array(np.asarray(color, dtype=np.float64).reshape(3))
    return LabColor(float(L), float(a), float(b))


def lab_with_backward(rgb: np.ndarray):
    """Return ``(lab, backward)`` where ``backward(d_lab)`` gives ``d_rgb``."""
    rgb = np.asarray(rgb, dtype=np.float64)
    lab, (rgb, xyz_n) = _forward(rgb)

    def backward(d_lab):
        d_f = d_lab @ _LAB_FROM_F
        d_xyz = d_f * _f_deriv(xyz_n) / D65_WHITE
        d_lin = d_xyz @ SRGB_TO_XYZ
        return d_lin * _srgb_decode_deriv(rgb)

    return lab, backward
