import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_bank_inputs
from lutfuse.errors import InvalidArgument
from lutfuse.grad import (backward_apply, central_differences, finite_diff_check,
                          relative_error)
from lutfuse.lut import LutBank, WeightMap, apply_spatial_aware
from lutfuse.model import set_threads


def _loss(values, omega, alpha, image, g):
    return float(np.sum(g * apply_spatial_aware(LutBank(values), WeightMap(omega, alpha), image)))


class TestBackwardApply:
    def test_zero_upstream(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng)
        g = backward_apply(LutBank(values), WeightMap(omega, alpha), image, np.zeros_like(image))
        assert not g.d_luts.any() and not g.d_alpha.any() and not g.d_omega.any()

    def test_single_grid_pixel(self):
        n = 5
        idx = (1, 3, 2)
        image = (np.array(idx, dtype=np.float64) / (n - 1)).reshape(1, 1, 3)
        g = backward_apply(LutBank.identity(1, 1, n, np.float64),
                           WeightMap(np.ones(1), np.ones((1, 1, 1))), image,
                           np.array([1.0, 0.0, 0.0]).reshape(1, 1, 3))
        expect = np.zeros((1, 1, n, n, n, 3))
        expect[(0, 0) + idx + (0,)] = 1.0
        assert np.array_equal(g.d_luts, expect)

    def test_shapes(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng, t=3, m=2, n=3, h=4, w=7)
        g = backward_apply(LutBank(values), WeightMap(omega, alpha), image, np.ones_like(image))
        assert g.d_luts.shape == values.shape
        assert g.d_alpha.shape == alpha.shape
        assert g.d_omega.shape == omega.shape
        assert g.d_luts.dtype == np.float32

    @pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-3), (np.float64, 1e-6)])
    def test_finite_differences(self, rng, dtype, tol):
        values, omega, alpha, image = random_bank_inputs(rng, t=2, m=2, n=3, h=4, w=4,
                                                         dtype=np.float64)
        g_out = rng.normal(size=image.shape)
        grads = backward_apply(LutBank(values.astype(dtype)),
                               WeightMap(omega.astype(dtype), alpha.astype(dtype)),
                               image.astype(dtype), g_out.astype(dtype))
        checks = [
            (lambda v: _loss(v, omega, alpha, image, g_out), values, grads.d_luts),
            (lambda a: _loss(values, omega, a, image, g_out), alpha, grads.d_alpha),
            (lambda o: _loss(values, o, alpha, image, g_out), omega, grads.d_omega),
        ]
        for f, x, a in checks:
            fd = central_differences(f, x, 1e-4)
            floor = 1e-3 * np.abs(fd).max()
            assert relative_error(a, fd, floor) < tol

    @given(st.integers(0, 2 ** 32 - 1))
    def test_adjoint_in_cells(self, seed):
        # The map is linear in the cells: <Y(v), g> == <v, dY/dv^T g>.
        rng = np.random.default_rng(seed)
        values, omega, alpha, image = random_bank_inputs(rng, dtype=np.float64)
        g_out = rng.normal(size=image.shape)
        grads = backward_apply(LutBank(values), WeightMap(omega, alpha), image, g_out)
        lhs = _loss(values, omega, alpha, image, g_out)
        assert abs(lhs - np.sum(values * grads.d_luts)) < 1e-5 * max(1, abs(lhs))
        assert abs(lhs - np.sum(alpha * grads.d_alpha)) < 1e-5 * max(1, abs(lhs))
        assert abs(lhs - np.sum(omega * grads.d_omega)) < 1e-5 * max(1, abs(lhs))

    def test_sparsity(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng, t=2, m=3, n=6, h=1, w=1)
        g = backward_apply(LutBank(values), WeightMap(omega, alpha), image, np.ones_like(image))
        touched = np.any(g.d_luts != 0, axis=-1).sum()
        assert touched <= 8 * 2 * 3

    def test_deterministic_and_thread_independent(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng, t=2, m=3, n=5, h=37, w=23)
        g_out = rng.normal(size=image.shape).astype(np.float32)
        args = (LutBank(values), WeightMap(omega, alpha), image, g_out)
        runs = []
        for n in (1, 4, 1):
            set_threads(n)
            runs.append(backward_apply(*args))
        set_threads(None)
        for r in runs[1:]:
            assert np.array_equal(r.d_luts, runs[0].d_luts)
            assert np.array_equal(r.d_alpha, runs[0].d_alpha)
            assert np.array_equal(r.d_omega, runs[0].d_omega)

    def test_rejects_nan_and_bad_shape(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng)
        d = np.zeros_like(image)
        d[0, 0, 0] = np.nan
        with pytest.raises(InvalidArgument):
            backward_apply(LutBank(values), WeightMap(omega, alpha), image, d)
        with pytest.raises(InvalidArgument):
            backward_apply(LutBank(values), WeightMap(omega, alpha), image, d[:-1])


class TestFiniteDiffCheck:
    def test_quadratic(self):
        x = np.array([1.0, 2.0])
        assert finite_diff_check(lambda v: float(np.sum(v ** 2)), x, [2.0, 4.0], 1e-5) < 1e-6

    @pytest.mark.parametrize("step", [1e-1, 1e-3, 1e-6])
    def test_linear_any_step(self, step):
        c = np.array([0.5, -3.0, 2.0])
        assert finite_diff_check(lambda v: float(c @ v), np.ones(3), c, step) < 1e-9

    def test_detects_wrong_gradient(self):
        assert finite_diff_check(lambda v: float(np.sum(v ** 2)), np.ones(2), [2.0, -2.0]) > 1.0

    def test_non_finite(self):
        with pytest.raises(InvalidArgument):
            finite_diff_check(lambda v: float("nan"), np.ones(2), np.zeros(2))

    def test_bad_step(self):
        with pytest.raises(InvalidArgument):
            finite_diff_check(lambda v: 0.0, np.ones(2), np.zeros(2), step=0.0)

    def test_spatial_apply_instance(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng, t=1, m=2, n=3, h=3, w=3,
                                                         dtype=np.float64)
        g_out = rng.normal(size=image.shape)
        grads = backward_apply(LutBank(values), WeightMap(omega, alpha), image, g_out)
        err = finite_diff_check(lambda a: _loss(values, omega, a, image, g_out), alpha, grads.d_alpha)
        assert err < 1e-6
