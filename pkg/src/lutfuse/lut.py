"""3D LUT types and the forward enhancement path.

An image is a plain ``(H, W, 3)`` float array of sRGB-encoded components in
[0, 1]; no wrapper type is used. LUT cells are stored red-major:
``values[i, j, k]`` is the output color for input (i, j, k) / (N - 1) with i
indexing red, j green and k blue (blue varies fastest in memory).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .resample import axis_coords

DEFAULT_N = 33
DEFAULT_T = 3
DEFAULT_M = 10

SIMPLEX_TOL = 1e-5


def _consts(dtype):
    dtype = np.dtype(dtype)
    return dtype.type(0), dtype.type(1)


def _grid(n: int, dtype) -> np.ndarray:
    return np.arange(n, dtype=dtype)


@dataclass
class Lut3d:
    values: np.ndarray  # (N, N, N, 3)

    def __post_init__(self):
        v = self.values
        if v.ndim != 4 or v.shape[3] != 3 or not (v.shape[0] == v.shape[1] == v.shape[2]):
            raise InvalidArgument(f"LUT values must have shape (N, N, N, 3), got {v.shape}")
        if v.shape[0] < 2:
            raise InvalidArgument("LUT needs at least 2 bins per axis")

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]


@dataclass
class LutBank:
    """T scenario sets of M basic LUTs, stored as one ``(T, M, N, N, N, 3)`` array."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 6 or v.shape[5] != 3 or not (v.shape[2] == v.shape[3] == v.shape[4]):
            raise InvalidArgument(f"bank values must have shape (T, M, N, N, N, 3), got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidArgument("bank needs T >= 1 and M >= 1")
        if v.shape[2] < 2:
            raise InvalidArgument("bank LUTs need at least 2 bins per axis")

    @property
    def t_scenarios(self) -> int:
        return self.values.shape[0]

    @property
    def m_categories(self) -> int:
        return self.values.shape[1]

    @property
    def n_bins(self) -> int:
        return self.values.shape[2]

    def lut(self, t: int, m: int) -> Lut3d:
        return Lut3d(self.values[t, m])

    @classmethod
    def identity(cls, t: int = DEFAULT_T, m: int = DEFAULT_M, n: int = DEFAULT_N,
                 dtype=np.float32) -> "LutBank":
        if t < 1 or m < 1:
            raise InvalidArgument(f"T and M must be >= 1, got T={t}, M={m}")
        ident = identity_lut(n, dtype).values
        return cls(np.broadcast_to(ident, (t, m) + ident.shape).copy())

    @classmethod
    def from_luts(cls, luts) -> "LutBank":
        """Build from a T-long list of M-long lists of :class:`Lut3d`."""
        rows = [np.stack([lut.values for lut in row]) for row in luts]
        sizes = {r.shape for r in rows}
        if len(sizes) != 1:
            raise InvalidArgument("all scenario rows need the same M and N")
        return cls(np.stack(rows))


@dataclass
class WeightMap:
    omega: np.ndarray  # (T,)
    alpha: np.ndarray  # (H, W, M)

    def validate(self, tol: float = SIMPLEX_TOL) -> None:
        if self.omega.ndim != 1 or self.alpha.ndim != 3:
            raise InvalidArgument("omega must be 1-D and alpha (H, W, M)")
        if np.any(self.omega < 0) or abs(float(self.omega.sum(dtype=np.float64)) - 1.0) > tol:
            raise InvalidArgument("omega is not on the simplex")
        if np.any(self.alpha < 0):
            raise InvalidArgument("alpha has negative entries")
        sums = self.alpha.sum(axis=2, dtype=np.float64)
        if np.any(np.abs(sums - 1.0) > tol):
            raise InvalidArgument("alpha is not on the simplex at every pixel")


def identity_lut(n_bins: int, dtype=np.float32) -> Lut3d:
    if n_bins < 2:
        raise InvalidArgument(f"n_bins must be >= 2, got {n_bins}")
    ramp = np.arange(n_bins, dtype=np.float64) / (n_bins - 1)
    r, g, b = np.meshgrid(ramp, ramp, ramp, indexing="ij")
    return Lut3d(np.stack([r, g, b], axis=-1).astype(dtype))


def check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidArgument(f"image must have shape (H, W, 3), got {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise InvalidArgument("image has a zero dimension")
    if np.isnan(image).any():
        raise InvalidArgument("image contains NaN")
    return image


def _run_apply(values, omega, alpha, image):
    values = np.ascontiguousarray(values)
    dtype = values.dtype
    image = np.ascontiguousarray(image, dtype=dtype)
    omega = np.ascontiguousarray(omega, dtype=dtype)
    alpha = np.ascontiguousarray(alpha, dtype=dtype)
    out = np.empty(image.shape, dtype=dtype)
    zero, one = _consts(dtype)
    _kernels.apply_kernel(values, omega, alpha, image, _grid(values.shape[2], dtype), zero, one, out)
    return out


def trilinear_sample(lut: Lut3d, color) -> np.ndarray:
    """Trilinear lookup of one RGB color; components are clamped to [0, 1]."""
    color = np.asarray(color, dtype=lut.values.dtype).reshape(1, 1, 3)
    check_image(color)
    values = np.ascontiguousarray(lut.values[None, None])
    one = np.ones(1, dtype=values.dtype)
    return _run_apply(values, one, one.reshape(1, 1, 1), color)[0, 0]


def fuse_category(row: np.ndarray | list, alpha_pixel, color) -> np.ndarray:
    """Category fusion for one pixel: sum_m alpha_m * sample(lut_m, color).

    ``row`` is either an ``(M, N, N, N, 3)`` array or a list of :class:`Lut3d`.
    """
    if not isinstance(row, np.ndarray):
        row = np.stack([lut.values for lut in row])
    alpha_pixel = np.asarray(alpha_pixel, dtype=row.dtype)
    if alpha_pixel.shape != (row.shape[0],):
        raise InvalidArgument(f"alpha has length {alpha_pixel.size}, expected M={row.shape[0]}")
    color = check_image(np.asarray(color, dtype=row.dtype).reshape(1, 1, 3))
    values = np.ascontiguousarray(row[None])
    one = np.ones(1, dtype=row.dtype)
    return _run_apply(values, one, alpha_pixel.reshape(1, 1, -1), color)[0, 0]


def _check_weights(bank: LutBank, weights: WeightMap, image: np.ndarray) -> None:
    if weights.omega.shape != (bank.t_scenarios,):
        raise InvalidArgument(f"omega has shape {weights.omega.shape}, bank has T={bank.t_scenarios}")
    if weights.alpha.ndim != 3 or weights.alpha.shape[2] != bank.m_categories:
        raise InvalidArgument(f"alpha has shape {weights.alpha.shape}, bank has M={bank.m_categories}")
    if weights.alpha.shape[:2] != image.shape[:2]:
        raise InvalidArgument(
            f"alpha is {weights.alpha.shape[:2]} but image is {image.shape[:2]}")


def apply_spatial_aware(bank: LutBank, weights: WeightMap, image: np.ndarray) -> np.ndarray:
    """Per pixel: sum_t sum_m (omega_t * alpha_m) * trilinear(lut_tm, pixel).

    Output is not clamped. Arithmetic runs in the bank's dtype.
    """
    image = check_image(image)
    _check_weights(bank, weights, image)
    return _run_apply(bank.values, weights.omega, weights.alpha, image)


def apply_lowres(bank: LutBank, omega: np.ndarray, alpha_lowres: np.ndarray,
                 image: np.ndarray) -> np.ndarray:
    """Same result as upsampling ``alpha_lowres`` to the image size and calling
    :func:`apply_spatial_aware`, without materialising the full-size map."""
    image = check_image(image)
    if omega.shape != (bank.t_scenarios,) or alpha_lowres.ndim != 3 \
            or alpha_lowres.shape[2] != bank.m_categories:
        raise InvalidArgument("weight shapes do not match the bank")
    dtype = bank.values.dtype
    H, W = image.shape[:2]
    ys = axis_coords(alpha_lowres.shape[0], H, dtype)
    xs = axis_coords(alpha_lowres.shape[1], W, dtype)
    out = np.empty((H, W, 3), dtype=dtype)
    zero, one = _consts(dtype)
    _kernels.apply_lowres_kernel(
        np.ascontiguousarray(bank.values), np.ascontiguousarray(omega, dtype=dtype),
        np.ascontiguousarray(alpha_lowres, dtype=dtype), *ys, *xs,
        np.ascontiguousarray(image, dtype=dtype), _grid(bank.n_bins, dtype), zero, one, out)
    return out


def flatten_bank(bank: LutBank, omega, alpha_const) -> Lut3d:
    """Collapse the bank to one LUT for spatially constant weights."""
    dtype = bank.values.dtype
    omega = np.asarray(omega, dtype=dtype)
    alpha_const = np.asarray(alpha_const, dtype=dtype)
    if omega.shape != (bank.t_scenarios,) or alpha_const.shape != (bank.m_categories,):
        raise InvalidArgument("weight lengths do not match the bank")
    for name, vec in (("omega", omega), ("alpha", alpha_const)):
        if np.any(vec < -1e-4) or abs(float(vec.sum(dtype=np.float64)) - 1.0) > 1e-4:
            raise InvalidArgument(f"{name} is not on the simplex")
    out = np.zeros(bank.values.shape[2:], dtype=dtype)
    for t in range(bank.t_scenarios):
        for m in range(bank.m_categories):
            out += (omega[t] * alpha_const[m]) * bank.values[t, m]
    return Lut3d(out)
