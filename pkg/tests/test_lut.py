import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_bank_inputs
from lutfuse.errors import InvalidArgument
from lutfuse.lut import (Lut3d, LutBank, WeightMap, apply_lowres, apply_spatial_aware,
                         flatten_bank, fuse_category, identity_lut, trilinear_sample)
from lutfuse.predictor import softmax
from lutfuse.resample import upsample_bilinear
from oracles import apply_ref, trilinear_ref


class TestIdentityLut:
    def test_two_bins_corner(self):
        assert np.array_equal(identity_lut(2).values[1, 1, 1], [1.0, 1.0, 1.0])

    def test_midpoint_of_33(self):
        assert np.array_equal(identity_lut(33).values[16, 16, 16], [0.5, 0.5, 0.5])

    def test_exact_ramp(self):
        n = 17
        v = identity_lut(n).values
        i, j, k = 3, 11, 16
        expect = np.array([i, j, k], dtype=np.float64) / (n - 1)
        assert np.array_equal(v[i, j, k], expect.astype(np.float32))

    @pytest.mark.parametrize("n", [1, 0, -3])
    def test_too_few_bins(self, n):
        with pytest.raises(InvalidArgument):
            identity_lut(n)


class TestTrilinear:
    def test_identity_reproduces_color(self):
        out = trilinear_sample(identity_lut(33), (0.5, 0.25, 0.75))
        np.testing.assert_array_equal(out, np.float32([0.5, 0.25, 0.75]))

    def test_constant_lut(self):
        lut = Lut3d(np.full((5, 5, 5, 3), 0.2, dtype=np.float32))
        out = trilinear_sample(lut, (0.13, 0.77, 0.51))
        np.testing.assert_allclose(out, 0.2, rtol=0, atol=1e-7)

    def test_identity_4_hand_value(self):
        out = trilinear_sample(identity_lut(4, np.float64), (0.1, 0.9, 0.5))
        np.testing.assert_allclose(out, [0.1, 0.9, 0.5], atol=1e-12)

    def test_out_of_range_is_clamped(self, rng):
        lut = Lut3d(rng.random((4, 4, 4, 3)).astype(np.float32))
        np.testing.assert_array_equal(trilinear_sample(lut, (-0.5, 1.7, 0.3)),
                                      trilinear_sample(lut, (0.0, 1.0, 0.3)))

    def test_nan_rejected(self):
        with pytest.raises(InvalidArgument):
            trilinear_sample(identity_lut(3), (np.nan, 0.1, 0.2))

    def test_matches_scalar_oracle_bitwise(self, rng):
        cells = rng.uniform(-0.2, 1.2, size=(5, 5, 5, 3)).astype(np.float32)
        for color in rng.uniform(-0.1, 1.1, size=(50, 3)).astype(np.float32):
            out = trilinear_sample(Lut3d(cells), color)
            ref = np.array(trilinear_ref(cells, *color, np.float32), dtype=np.float32)
            assert np.array_equal(out, ref)

    @given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
    def test_grid_points_exact(self, n, seed):
        rng = np.random.default_rng(seed)
        cells = rng.random((n, n, n, 3)).astype(np.float64)
        idx = rng.integers(0, n, size=3)
        color = idx / (n - 1)
        out = trilinear_sample(Lut3d(cells), color)
        assert np.array_equal(out, cells[tuple(idx)])

    @given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1), st.floats(1e-4, 0.05))
    def test_lipschitz_bound(self, n, seed, delta):
        rng = np.random.default_rng(seed)
        cells = rng.random((n, n, n, 3))
        lut = Lut3d(cells)
        c = rng.random(3) * (1 - delta)
        c2 = c.copy()
        ch = int(rng.integers(0, 3))
        c2[ch] += delta
        diffs = np.abs(np.diff(cells, axis=ch)).max()
        gap = np.abs(trilinear_sample(lut, c2) - trilinear_sample(lut, c)).max()
        assert gap <= (n - 1) * delta * diffs + 1e-12


class TestFuseCategory:
    def test_convex_combination(self):
        row = np.stack([np.full((3, 3, 3, 3), 0.2), np.full((3, 3, 3, 3), 0.6)])
        out = fuse_category(row, (0.3, 0.7), (0.4, 0.1, 0.9))
        np.testing.assert_allclose(out, 0.48, atol=1e-12)

    def test_one_hot_selects(self, rng):
        row = rng.random((3, 4, 4, 4, 3)).astype(np.float32)
        color = np.float32([0.3, 0.6, 0.9])
        out = fuse_category(row, (0, 1, 0), color)
        np.testing.assert_array_equal(out, trilinear_sample(Lut3d(row[1]), color))

    def test_identical_luts(self, rng):
        lut = rng.random((4, 4, 4, 3))
        row = [Lut3d(lut)] * 4
        alpha = softmax(rng.normal(size=4))
        out = fuse_category(row, alpha, (0.2, 0.5, 0.8))
        np.testing.assert_allclose(out, trilinear_sample(Lut3d(lut), (0.2, 0.5, 0.8)), atol=1e-12)

    def test_fuse_then_sample_equals_sample_then_fuse(self, rng):
        row = rng.random((3, 5, 5, 5, 3))
        alpha = softmax(rng.normal(size=3))
        color = rng.random(3)
        fused_cells = sum(a * lut for a, lut in zip(alpha, row))
        np.testing.assert_allclose(fuse_category(row, alpha, color),
                                   trilinear_sample(Lut3d(fused_cells), color), atol=1e-14)

    def test_wrong_alpha_length(self):
        with pytest.raises(InvalidArgument):
            fuse_category(np.zeros((2, 3, 3, 3, 3)), (1.0,), (0.1, 0.2, 0.3))


class TestApplySpatialAware:
    def test_identity_bank_any_weights(self, rng):
        _, omega, alpha, image = random_bank_inputs(rng, t=3, m=4, h=9, w=7)
        image = np.clip(image, 0, 1)
        bank = LutBank.identity(3, 4, 33)
        out = apply_spatial_aware(bank, WeightMap(omega, alpha), image)
        np.testing.assert_allclose(out, image, atol=1e-6, rtol=0)

    def test_degenerate_single_lut(self, rng):
        cells = rng.random((5, 5, 5, 3)).astype(np.float32)
        image = rng.random((4, 6, 3)).astype(np.float32)
        out = apply_spatial_aware(LutBank(cells[None, None].copy()),
                                  WeightMap(np.ones(1, np.float32), np.ones((4, 6, 1), np.float32)),
                                  image)
        for h in range(4):
            for x in range(6):
                assert np.array_equal(out[h, x], trilinear_sample(Lut3d(cells), image[h, x]))

    def test_matches_naive_reference(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng, t=2, m=3, n=4, h=8, w=8)
        out = apply_spatial_aware(LutBank(values), WeightMap(omega, alpha), image)
        assert np.array_equal(out, apply_ref(values, omega, alpha, image))

    def test_float64_matches_reference(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng, dtype=np.float64)
        out = apply_spatial_aware(LutBank(values), WeightMap(omega, alpha), image)
        assert np.array_equal(out, apply_ref(values, omega, alpha, image))

    @pytest.mark.parametrize("bad", ["omega", "alpha_m", "alpha_hw"])
    def test_shape_mismatch(self, rng, bad):
        values, omega, alpha, image = random_bank_inputs(rng)
        if bad == "omega":
            omega = np.ones(5, np.float32) / 5
        elif bad == "alpha_m":
            alpha = np.ones(alpha.shape[:2] + (7,), np.float32) / 7
        else:
            alpha = alpha[:-1]
        with pytest.raises(InvalidArgument):
            apply_spatial_aware(LutBank(values), WeightMap(omega, alpha), image)

    def test_bad_image(self, rng):
        values, omega, alpha, image = random_bank_inputs(rng)
        with pytest.raises(InvalidArgument):
            apply_spatial_aware(LutBank(values), WeightMap(omega, alpha), image[..., :2])

    @given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
    def test_linear_in_cells(self, seed, s):
        rng = np.random.default_rng(seed)
        values, omega, alpha, image = random_bank_inputs(rng, dtype=np.float64)
        w = WeightMap(omega, alpha)
        base = apply_spatial_aware(LutBank(values), w, image)
        scaled = apply_spatial_aware(LutBank(values * s), w, image)
        np.testing.assert_allclose(scaled, s * base, atol=1e-12)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_convexity(self, seed):
        rng = np.random.default_rng(seed)
        values, omega, alpha, image = random_bank_inputs(rng)
        values = np.clip(values, 0, 1)
        out = apply_spatial_aware(LutBank(values), WeightMap(omega, alpha), image)
        assert out.min() >= -1e-6 and out.max() <= 1 + 1e-6

    @given(st.integers(0, 2 ** 32 - 1))
    def test_identity_preserved_property(self, seed):
        rng = np.random.default_rng(seed)
        _, omega, alpha, image = random_bank_inputs(rng, t=2, m=3)
        image = np.clip(image, 0, 1)
        out = apply_spatial_aware(LutBank.identity(2, 3, 9), WeightMap(omega, alpha), image)
        np.testing.assert_allclose(out, image, atol=1e-6, rtol=0)


class TestApplyLowres:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_same_as_upsample_then_apply(self, rng, dtype):
        values, omega, _, image = random_bank_inputs(rng, h=13, w=11, dtype=dtype)
        low = softmax(rng.normal(size=(4, 3, 3)), axis=2).astype(dtype)
        full = upsample_bilinear(low, 13, 11)
        a = apply_spatial_aware(LutBank(values), WeightMap(omega, full), image)
        b = apply_lowres(LutBank(values), omega, low, image)
        assert np.array_equal(a, b)


class TestFlattenBank:
    def test_identity_bank(self):
        flat = flatten_bank(LutBank.identity(3, 4, 9), np.ones(3) / 3, np.ones(4) / 4)
        np.testing.assert_allclose(flat.values, identity_lut(9).values, atol=1e-6)

    def test_one_hot_copy(self, rng):
        values = rng.random((1, 2, 4, 4, 4, 3)).astype(np.float32)
        flat = flatten_bank(LutBank(values), [1.0], [1.0, 0.0])
        assert np.array_equal(flat.values, values[0, 0])

    def test_equals_apply_with_constant_weights(self, rng):
        values, omega, _, _ = random_bank_inputs(rng, t=2, m=3, n=5)
        alpha_c = softmax(rng.normal(size=3)).astype(np.float32)
        colors = rng.random((10, 10, 3)).astype(np.float32)
        flat = flatten_bank(LutBank(values), omega, alpha_c)
        a = apply_spatial_aware(LutBank(values),
                                WeightMap(omega, np.broadcast_to(alpha_c, (10, 10, 3)).copy()), colors)
        b = apply_spatial_aware(LutBank(flat.values[None, None].copy()),
                                WeightMap(np.ones(1, np.float32), np.ones((10, 10, 1), np.float32)),
                                colors)
        # Same real number, different association of the float32 sums.
        np.testing.assert_allclose(a, b, atol=2e-6, rtol=0)

    @pytest.mark.parametrize("omega,alpha", [([0.5, 0.6], [1, 0]), ([1.0, 0.0], [0.5, 0.4]),
                                             ([1.2, -0.2], [1, 0])])
    def test_simplex_violation(self, rng, omega, alpha):
        with pytest.raises(InvalidArgument):
            flatten_bank(LutBank.identity(2, 2, 3), omega, alpha)


class TestTypes:
    def test_bank_shape_checks(self):
        with pytest.raises(InvalidArgument):
            LutBank(np.zeros((1, 1, 3, 3, 2, 3)))
        with pytest.raises(InvalidArgument):
            LutBank.identity(0, 2, 3)

    def test_weight_map_validate(self):
        WeightMap(np.array([0.5, 0.5]), np.full((2, 2, 4), 0.25)).validate()
        with pytest.raises(InvalidArgument):
            WeightMap(np.array([0.5, 0.6]), np.full((2, 2, 4), 0.25)).validate()
        with pytest.raises(InvalidArgument):
            WeightMap(np.array([1.0]), np.full((2, 2, 4), 0.3)).validate()

    def test_from_luts(self, rng):
        luts = [[Lut3d(rng.random((3, 3, 3, 3))) for _ in range(2)] for _ in range(3)]
        bank = LutBank.from_luts(luts)
        assert (bank.t_scenarios, bank.m_categories, bank.n_bins) == (3, 2, 3)
        assert np.array_equal(bank.lut(2, 1).values, luts[2][1].values)
