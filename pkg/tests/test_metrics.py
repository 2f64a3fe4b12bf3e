import math

import numpy as np
import pytest
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from lutfuse.errors import InvalidArgument
from lutfuse.metrics import LUMA, psnr, ssim


class TestPsnr:
    def test_twenty_db(self):
        a = np.zeros((10, 10, 3))
        assert math.isclose(psnr(a, a + 0.1), 20.0, rel_tol=1e-12)

    def test_identical_is_inf(self, rng):
        x = rng.random((4, 4, 3))
        assert psnr(x, x) == math.inf

    def test_independent_recompute(self, rng):
        a, b = rng.random((9, 7, 3)), rng.random((9, 7, 3))
        mse = sum((float(x) - float(y)) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
        assert abs(psnr(a, b) - 10 * math.log10(1 / mse)) < 1e-6
        assert abs(psnr(a, b) - peak_signal_noise_ratio(b, a, data_range=1.0)) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgument):
            psnr(np.zeros((2, 2, 3)), np.zeros((2, 2)))


class TestSsim:
    def test_identical(self, rng):
        x = rng.random((16, 16, 3))
        assert math.isclose(ssim(x, x), 1.0, rel_tol=1e-12)

    def test_constant_images(self):
        a = np.full((12, 12, 3), 0.5)
        assert math.isclose(ssim(a, a.copy()), 1.0, rel_tol=1e-12)

    def test_negative_image(self, rng):
        x = rng.random((32, 32, 3))
        assert ssim(x, 1 - x) < 0.5

    def test_against_skimage(self, rng):
        a = rng.random((40, 33, 3))
        b = np.clip(a + 0.1 * rng.normal(size=a.shape), 0, 1)
        ref = structural_similarity(a @ LUMA, b @ LUMA, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, data_range=1.0)
        assert abs(ssim(a, b) - ref) < 1e-9

    def test_too_small(self):
        with pytest.raises(InvalidArgument):
            ssim(np.zeros((10, 20, 3)), np.zeros((10, 20, 3)))

    def test_range(self, rng):
        for _ in range(5):
            v = ssim(rng.random((16, 16, 3)), rng.random((16, 16, 3)))
            assert -1.0 <= v <= 1.0
