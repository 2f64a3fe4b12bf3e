"""Numba kernels for the per-pixel hot paths.

Every kernel is written against a fixed floating-point operation order so
that the vectorised path reproduces a scalar reference bit-for-bit. Float
constants are passed in as arguments (``one``, ``grid``) rather than written
as literals, which would silently promote float32 arithmetic to float64.

Cell layout is ``values[t, m, i, j, k, c]`` with i indexing red, j green and
k blue. Trilinear corner order is (di, dj, dk) with di varying fastest:
000, 100, 010, 110, 001, 101, 011, 111.
"""

import numba
import numpy as np
from numba import prange

# TBB is probed first by default and warns when the installed version is too old.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@numba.njit(cache=True, inline="always")
def _clamp01(v, zero, one):
    if v < zero:
        return zero
    if v > one:
        return one
    return v


@numba.njit(cache=True, inline="always")
def _cell_coord(v, grid, zero, one):
    n = grid.shape[0]
    s = _clamp01(v, zero, one) * grid[n - 1]
    i = int(s)
    if i > n - 2:
        i = n - 2
    return i, s - grid[i]


@numba.njit(cache=True, inline="always")
def _corner_weights(fr, fg, fb, one, w):
    gr = one - fr
    gg = one - fg
    gb = one - fb
    w[0] = gr * gg * gb
    w[1] = fr * gg * gb
    w[2] = gr * fg * gb
    w[3] = fr * fg * gb
    w[4] = gr * gg * fb
    w[5] = fr * gg * fb
    w[6] = gr * fg * fb
    w[7] = fr * fg * fb


@numba.njit(cache=True, inline="always")
def _sample(values, t, m, i, j, k, c, w):
    s = w[0] * values[t, m, i, j, k, c]
    s += w[1] * values[t, m, i + 1, j, k, c]
    s += w[2] * values[t, m, i, j + 1, k, c]
    s += w[3] * values[t, m, i + 1, j + 1, k, c]
    s += w[4] * values[t, m, i, j, k + 1, c]
    s += w[5] * values[t, m, i + 1, j, k + 1, c]
    s += w[6] * values[t, m, i, j + 1, k + 1, c]
    s += w[7] * values[t, m, i + 1, j + 1, k + 1, c]
    return s


@numba.njit(cache=True, inline="always")
def _fuse_pixel(values, omega, alpha_px, r, g, b, grid, zero, one, w, out_px):
    T = values.shape[0]
    M = values.shape[1]
    i, fr = _cell_coord(r, grid, zero, one)
    j, fg = _cell_coord(g, grid, zero, one)
    k, fb = _cell_coord(b, grid, zero, one)
    _corner_weights(fr, fg, fb, one, w)
    for c in range(3):
        out_px[c] = zero
    for t in range(T):
        for m in range(M):
            coef = omega[t] * alpha_px[m]
            for c in range(3):
                out_px[c] += coef * _sample(values, t, m, i, j, k, c, w)


@numba.njit(cache=True, parallel=True)
def apply_kernel(values, omega, alpha, image, grid, zero, one, out):
    H, W = image.shape[0], image.shape[1]
    for h in prange(H):
        w = np.empty(8, dtype=values.dtype)
        for x in range(W):
            _fuse_pixel(values, omega, alpha[h, x], image[h, x, 0], image[h, x, 1],
                        image[h, x, 2], grid, zero, one, w, out[h, x])


@numba.njit(cache=True, inline="always")
def _lerp_clamped(a, b, f):
    v = a + f * (b - a)
    lo = a if a < b else b
    hi = b if a < b else a
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@numba.njit(cache=True, parallel=True)
def resize_kernel(src, y0, y1, fy, x0, x1, fx, out):
    H, W = out.shape[0], out.shape[1]
    C = src.shape[2]
    for h in prange(H):
        a, b, f = y0[h], y1[h], fy[h]
        for x in range(W):
            c0, c1, g = x0[x], x1[x], fx[x]
            for ch in range(C):
                top = _lerp_clamped(src[a, c0, ch], src[a, c1, ch], g)
                bot = _lerp_clamped(src[b, c0, ch], src[b, c1, ch], g)
                out[h, x, ch] = _lerp_clamped(top, bot, f)


@numba.njit(cache=True)
def resize_backward_kernel(d_out, y0, y1, fy, x0, x1, fx, one, d_src):
    # Sequential on purpose: scatter-adds into d_src in a fixed order.
    H, W = d_out.shape[0], d_out.shape[1]
    C = d_out.shape[2]
    for h in range(H):
        a, b, f = y0[h], y1[h], fy[h]
        for x in range(W):
            c0, c1, g = x0[x], x1[x], fx[x]
            for ch in range(C):
                d = d_out[h, x, ch]
                d_top = (one - f) * d
                d_bot = f * d
                d_src[a, c0, ch] += (one - g) * d_top
                d_src[a, c1, ch] += g * d_top
                d_src[b, c0, ch] += (one - g) * d_bot
                d_src[b, c1, ch] += g * d_bot


@numba.njit(cache=True, parallel=True)
def apply_lowres_kernel(values, omega, alpha_low, y0, y1, fy, x0, x1, fx,
                        image, grid, zero, one, out):
    """Upsample the weight map on the fly and apply; never materialises H*W*M."""
    H, W = image.shape[0], image.shape[1]
    M = alpha_low.shape[2]
    for h in prange(H):
        w = np.empty(8, dtype=values.dtype)
        alpha_px = np.empty(M, dtype=values.dtype)
        a, b, f = y0[h], y1[h], fy[h]
        for x in range(W):
            c0, c1, g = x0[x], x1[x], fx[x]
            for m in range(M):
                top = _lerp_clamped(alpha_low[a, c0, m], alpha_low[a, c1, m], g)
                bot = _lerp_clamped(alpha_low[b, c0, m], alpha_low[b, c1, m], g)
                alpha_px[m] = _lerp_clamped(top, bot, f)
            _fuse_pixel(values, omega, alpha_px, image[h, x, 0], image[h, x, 1],
                        image[h, x, 2], grid, zero, one, w, out[h, x])


@numba.njit(cache=True, parallel=True)
def backward_kernel(values, omega, alpha, image, d_out, grid, zero, one,
                    row_starts, g_cells, d_alpha, d_omega_part):
    """Reverse pass of ``apply_kernel``.

    ``g_cells[b]`` and ``d_omega_part[b]`` are private accumulators for the
    row block ``row_starts[b]:row_starts[b+1]``; the caller merges them in
    block order so results do not depend on the thread count.
    ``g_cells[b, m]`` holds the cell gradient of category m before the
    per-scenario omega factor is applied.
    """
    T = values.shape[0]
    M = values.shape[1]
    W = image.shape[1]
    n_blocks = row_starts.shape[0] - 1
    for blk in prange(n_blocks):
        w = np.empty(8, dtype=values.dtype)
        gc = g_cells[blk]
        dom = d_omega_part[blk]
        for h in range(row_starts[blk], row_starts[blk + 1]):
            for x in range(W):
                i, fr = _cell_coord(image[h, x, 0], grid, zero, one)
                j, fg = _cell_coord(image[h, x, 1], grid, zero, one)
                k, fb = _cell_coord(image[h, x, 2], grid, zero, one)
                _corner_weights(fr, fg, fb, one, w)
                dy0 = d_out[h, x, 0]
                dy1 = d_out[h, x, 1]
                dy2 = d_out[h, x, 2]
                for m in range(M):
                    acc = zero
                    for t in range(T):
                        dot = _sample(values, t, m, i, j, k, 0, w) * dy0
                        dot += _sample(values, t, m, i, j, k, 1, w) * dy1
                        dot += _sample(values, t, m, i, j, k, 2, w) * dy2
                        acc += omega[t] * dot
                        dom[t] += alpha[h, x, m] * dot
                    d_alpha[h, x, m] = acc
                    am = alpha[h, x, m]
                    for q in range(8):
                        di = q & 1
                        dj = (q >> 1) & 1
                        dk = (q >> 2) & 1
                        aw = am * w[q]
                        gc[m, i + di, j + dj, k + dk, 0] += aw * dy0
                        gc[m, i + di, j + dj, k + dk, 1] += aw * dy1
                        gc[m, i + di, j + dj, k + dk, 2] += aw * dy2
