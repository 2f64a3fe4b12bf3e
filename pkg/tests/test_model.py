import numpy as np
import pytest

from lutfuse.errors import InvalidArgument
from lutfuse.grad import central_differences, relative_error
from lutfuse.losses import LossWeights, monotonicity_loss
from lutfuse.lut import LutBank, apply_spatial_aware
from lutfuse.model import Enhancer, jittered_identity_bank, loss_and_grads, set_threads
from lutfuse.predictor import ConvArch, init_predictor


class TestJitter:
    def test_zero_std_is_identity(self, rng):
        bank = jittered_identity_bank(2, 3, 5, 0.0, rng)
        assert np.array_equal(bank.values, LutBank.identity(2, 3, 5).values)

    def test_uniform_mix_is_identity(self, rng):
        bank = jittered_identity_bank(3, 4, 9, 0.05, rng, dtype=np.float64)
        mean = bank.values.mean(axis=(0, 1))
        np.testing.assert_allclose(mean, LutBank.identity(1, 1, 9, np.float64).values[0, 0], atol=1e-12)
        assert not np.allclose(bank.values[0, 0], bank.values[0, 1])

    def test_monotone(self, rng):
        bank = jittered_identity_bank(3, 10, 9, 0.5, rng, dtype=np.float64)
        assert monotonicity_loss(bank)[0] == 0

    def test_seeded(self):
        a = jittered_identity_bank(2, 2, 5, 0.01, np.random.default_rng(4))
        b = jittered_identity_bank(2, 2, 5, 0.01, np.random.default_rng(4))
        assert np.array_equal(a.values, b.values)


class TestEnhancer:
    def test_fresh_is_identity(self, rng):
        model = Enhancer.fresh(t=2, m=3, n=9, input_size=32)
        img = rng.random((20, 30, 3)).astype(np.float32)
        assert np.max(np.abs(model.enhance(img) - img)) <= 1e-6

    def test_enhance_matches_full_res_path(self, rng):
        model = Enhancer.fresh(t=2, m=3, n=5, predictor="grid", grid_size=4)
        model.predictor.params["alpha_logits"][:] = rng.normal(size=(4, 4, 3))
        model.bank = jittered_identity_bank(2, 3, 5, 0.1, rng)
        img = rng.random((9, 11, 3)).astype(np.float32)
        ref = apply_spatial_aware(model.bank, model.weight_map(img), img)
        assert np.array_equal(model.enhance(img), ref)

    def test_unknown_predictor(self):
        with pytest.raises(InvalidArgument):
            Enhancer.fresh(predictor="mlp")

    def test_parameters_keys(self):
        model = Enhancer.fresh(t=1, m=2, n=3, predictor="grid", grid_size=2)
        assert set(model.parameters()) == {"bank", "pred/alpha_logits", "pred/omega_logits"}

    def test_rejects_bad_image(self):
        model = Enhancer.fresh(t=1, m=1, n=3, predictor="grid", grid_size=2)
        with pytest.raises(InvalidArgument):
            model.enhance(np.zeros((4, 4, 4), dtype=np.float32))

    def test_threads_validation(self):
        with pytest.raises(InvalidArgument):
            set_threads(0)


class TestLossAndGrads:
    def test_end_to_end_finite_differences(self, rng):
        arch = ConvArch(t=2, m=2, input_size=8, enc=(3, 4, 4, 4), dec=(3, 3))
        net = init_predictor(1, arch, np.float64)
        for k, v in net.params.items():
            net.params[k] = 0.3 * rng.normal(size=v.shape)
        bank = jittered_identity_bank(2, 2, 3, 0.05, rng, dtype=np.float64)
        bank = LutBank(bank.values + 0.02 * rng.normal(size=bank.values.shape))
        model = Enhancer(bank, net)
        img, target = rng.random((6, 5, 3)), rng.random((6, 5, 3))
        lw = LossWeights(1.0, 1e-3, 0.0, 0.005, 0.0)
        _, grads, _ = loss_and_grads(model, img, target, lw)

        def loss_with(key, v):
            params = {k: (v if k == key else p) for k, p in model.parameters().items()}
            m = Enhancer(LutBank(params["bank"]),
                         type(net)(arch, {k[5:]: p for k, p in params.items() if k != "bank"}))
            return loss_and_grads(m, img, target, lw)[0].total

        for key in ("bank", "pred/enc0.w", "pred/omega.w", "pred/alpha.b"):
            fd = central_differences(lambda v: loss_with(key, v), model.parameters()[key], 1e-6)
            assert relative_error(grads[key], fd, 1e-3 * np.abs(fd).max()) < 1e-5, key

    def test_grad_keys_and_dtypes(self, rng):
        model = Enhancer.fresh(t=2, m=2, n=5, predictor="grid", grid_size=4)
        img = rng.random((8, 8, 3)).astype(np.float32)
        terms, grads, out = loss_and_grads(model, img, img)
        assert set(grads) == set(model.parameters())
        assert all(g.dtype == np.float32 and g.shape == model.parameters()[k].shape
                   for k, g in grads.items())
        assert out.shape == img.shape
        assert terms.mse <= 1e-12
