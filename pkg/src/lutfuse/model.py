"""Enhancer = LUT bank + weight predictor, and the end-to-end loss/gradient chain."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np

from .errors import InvalidArgument, NumericError
from .grad import backward_apply
from .losses import LossTerms, LossWeights, PerceptualHook, total_loss
from .lut import LutBank, WeightMap, apply_lowres, apply_spatial_aware, check_image
from .predictor import (ConvArch, ConvPredictor, GridPredictor, PredictorOutput,
                        init_predictor)
from .resample import resize_bilinear, upsample_bilinear, upsample_bilinear_backward

Predictor = Union[ConvPredictor, GridPredictor]

THREADS_ENV = "LUTFUSE_THREADS"


def set_threads(n: Optional[int] = None) -> int:
    """Set the kernel worker count (``None`` reads ``LUTFUSE_THREADS``).

    Capped at numba's pool size. Results never depend on this value.
    """
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if not env:
            return numba.get_num_threads()
        n = int(env)
    if n < 1:
        raise InvalidArgument(f"thread count must be >= 1, got {n}")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def jittered_identity_bank(t: int, m: int, n: int, std: float,
                           rng: np.random.Generator, dtype=np.float32) -> LutBank:
    """Identity bank with a small random tone bend per LUT.

    Channel c of each LUT becomes ``x_c + a * 4 x_c (1 - x_c)`` (one ``a`` per
    LUT, shared by the channels so each LUT leans brighter or darker); the
    bend amplitudes ``a`` sum to zero over all T*M LUTs, so under uniform weights
    the fused output is still the identity. Each LUT stays monotone (for
    ``|a| < 1/4``) and flat along the other two axes, so neither regulariser
    is disturbed. The point is to make the LUTs distinguishable: identical
    LUTs under a uniform softmax receive identical gradients forever.
    """
    bank = LutBank.identity(t, m, n, dtype=np.float64)
    if std > 0:
        amp = rng.normal(0.0, std, size=(t, m, 1))
        amp -= amp.mean(axis=(0, 1), keepdims=True)
        amp = np.clip(amp, -0.2, 0.2)
        x = bank.values[0, 0]  # (N, N, N, 3), channel c equals the c-axis coordinate
        bank.values += amp[:, :, None, None, None, :] * (4.0 * x * (1.0 - x))
    return LutBank(bank.values.astype(dtype))


@dataclass
class Enhancer:
    bank: LutBank
    predictor: Predictor

    @classmethod
    def fresh(cls, t: int = 3, m: int = 10, n: int = 33, predictor: str = "conv",
              seed: int = 0, input_size: int = 256, grid_size: int = 64) -> "Enhancer":
        """Identity bank with a predictor whose heads output uniform weights."""
        bank = LutBank.identity(t, m, n)
        if predictor == "conv":
            net = init_predictor(seed, ConvArch(t=t, m=m, input_size=input_size))
        elif predictor == "grid":
            net = GridPredictor.zeros(t, m, grid_size)
        else:
            raise InvalidArgument(f"unknown predictor kind {predictor!r}")
        return cls(bank, net)

    @property
    def alpha_size(self) -> int:
        if isinstance(self.predictor, ConvPredictor):
            return self.predictor.arch.alpha_size
        return self.predictor.alpha_size

    def predictor_input(self, image: np.ndarray) -> Optional[np.ndarray]:
        if isinstance(self.predictor, GridPredictor):
            return None
        s = self.predictor.arch.input_size
        return resize_bilinear(image, s, s)

    def predict(self, image: np.ndarray) -> PredictorOutput:
        return self.predictor.forward(self.predictor_input(image))

    def weight_map(self, image: np.ndarray) -> WeightMap:
        out = self.predict(image)
        return WeightMap(out.omega, upsample_bilinear(out.alpha_lowres, *image.shape[:2]))

    def enhance(self, image: np.ndarray) -> np.ndarray:
        image = check_image(image)
        out = self.predict(image)
        return apply_lowres(self.bank, out.omega, out.alpha_lowres, image)

    def astype(self, dtype) -> "Enhancer":
        return Enhancer(LutBank(self.bank.values.astype(dtype)), self.predictor.astype(dtype))

    def parameters(self) -> dict:
        """All trainable arrays, keyed as in checkpoints and gradient dicts."""
        params = {"bank": self.bank.values}
        params.update({f"pred/{k}": v for k, v in self.predictor.params.items()})
        return params


def loss_and_grads(model: Enhancer, image: np.ndarray, target: np.ndarray,
                   loss_weights: LossWeights = LossWeights(),
                   perceptual: Optional[PerceptualHook] = None,
                   include_alpha: bool = True) -> tuple[LossTerms, dict, np.ndarray]:
    """One forward/backward pass through the whole model.

    Returns ``(terms, grads, output)`` with ``grads`` keyed like
    :meth:`Enhancer.parameters`. The predictor sees a detached, resized copy
    of the input, so no gradient flows into the image. Raises
    :class:`NumericError` if the loss or its output gradient is non-finite.
    """
    out = model.predict(image)
    H, W = image.shape[:2]
    alpha_low = out.alpha_lowres.astype(model.bank.values.dtype)
    weights = WeightMap(out.omega.astype(model.bank.values.dtype),
                        upsample_bilinear(alpha_low, H, W))
    pred = apply_spatial_aware(model.bank, weights, image)
    terms, lg = total_loss(pred, target, model.bank, weights, loss_weights,
                           perceptual=perceptual, include_alpha=include_alpha)
    if not (np.isfinite(terms.total) and np.all(np.isfinite(lg.d_pred))):
        raise NumericError(f"non-finite loss {terms.total!r} or output gradient")
    ag = backward_apply(model.bank, weights, image, lg.d_pred)
    d_alpha = ag.d_alpha if lg.d_alpha is None else ag.d_alpha + lg.d_alpha
    d_alpha_low = upsample_bilinear_backward(d_alpha, alpha_low.shape[:2])
    d_omega = ag.d_omega + lg.d_omega
    pgrads = model.predictor.backward(d_omega, d_alpha_low)
    grads = {"bank": ag.d_luts + lg.d_cells}
    grads.update({f"pred/{k}": v for k, v in pgrads.items()})
    return terms, grads, pred
