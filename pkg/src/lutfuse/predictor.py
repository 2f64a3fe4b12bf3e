"""Two-head weight predictors.

``ConvPredictor`` is a small encoder-decoder over a square, downsampled input
(HWC layout). With the default widths and a 256x256 input:

    enc0  conv3x3 s1   3 -> 16   256x256   leaky-ReLU
    enc1  conv3x3 s2  16 -> 32   128x128   leaky-ReLU
    enc2  conv3x3 s2  32 -> 64    64x64    leaky-ReLU
    enc3  conv3x3 s2  64 -> 64    32x32    leaky-ReLU
    omega head: global average pool(enc3) -> fully connected -> T logits
    dec0  conv3x3 s1  (nearest-up2(enc3) + enc2) 64 -> 32   64x64   leaky-ReLU
    dec1  conv3x3 s1  32 -> 16    64x64    leaky-ReLU
    alpha head: conv1x1 16 -> M logits at 64x64

Both heads end in a softmax (omega over T, alpha over M at each location).
``GridPredictor`` replaces the network with free logits of the same output
shapes; it ignores its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidState

ARCH_CONV = 1
ARCH_GRID = 2


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(s: np.ndarray, d_s: np.ndarray, axis: int = -1) -> np.ndarray:
    return s * (d_s - np.sum(s * d_s, axis=axis, keepdims=True))


@dataclass
class PredictorOutput:
    omega_logits: np.ndarray  # (T,)
    alpha_logits_lowres: np.ndarray  # (h, w, M)
    omega: np.ndarray
    alpha_lowres: np.ndarray


# --------------------------------------------------------------------------
# convolution primitives (HWC, 3x3 kernels with zero padding 1, or 1x1)


def _im2col(x: np.ndarray, k: int, stride: int):
    H, W, C = x.shape
    pad = k // 2
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0))) if pad else x
    oh = (H + 2 * pad - k) // stride + 1
    ow = (W + 2 * pad - k) // stride + 1
    patches = [
        xp[ky:ky + stride * (oh - 1) + 1:stride, kx:kx + stride * (ow - 1) + 1:stride, :]
        for ky in range(k) for kx in range(k)
    ]
    cols = np.stack(patches, axis=2).reshape(oh * ow, k * k * C)
    return cols, (oh, ow)


def _col2im(d_cols: np.ndarray, x_shape, k: int, stride: int, out_hw):
    H, W, C = x_shape
    pad = k // 2
    oh, ow = out_hw
    d_cols = d_cols.reshape(oh, ow, k * k, C)
    dxp = np.zeros((H + 2 * pad, W + 2 * pad, C), dtype=d_cols.dtype)
    for q in range(k * k):
        ky, kx = divmod(q, k)
        dxp[ky:ky + stride * (oh - 1) + 1:stride, kx:kx + stride * (ow - 1) + 1:stride, :] += d_cols[:, :, q, :]
    return dxp[pad:pad + H, pad:pad + W, :]


def conv_forward(x, w, b, stride=1):
    """``w`` has shape (k, k, Cin, Cout). Returns output and a backward cache."""
    k, cout = w.shape[0], w.shape[3]
    cols, out_hw = _im2col(x, k, stride)
    y = cols @ w.reshape(-1, cout) + b
    return y.reshape(out_hw[0], out_hw[1], cout), (cols, x.shape, out_hw, stride)


def conv_backward(d_y, w, cache):
    cols, x_shape, out_hw, stride = cache
    k, cout = w.shape[0], w.shape[3]
    d_y2 = d_y.reshape(-1, cout)
    d_w = (cols.T @ d_y2).reshape(w.shape)
    d_b = d_y2.sum(axis=0)
    d_x = _col2im(d_y2 @ w.reshape(-1, cout).T, x_shape, k, stride, out_hw)
    return d_x, d_w, d_b


def _leaky(x, slope):
    return np.where(x > 0, x, x * slope)


def _leaky_backward(pre, d, slope):
    return np.where(pre > 0, d, d * slope)


def _up2(x):
    return x.repeat(2, axis=0).repeat(2, axis=1)


def _up2_backward(d):
    H, W, C = d.shape
    return d.reshape(H // 2, 2, W // 2, 2, C).sum(axis=(1, 3))


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvArch:
    t: int = 3
    m: int = 10
    input_size: int = 256
    in_channels: int = 3
    enc: tuple = (16, 32, 64, 64)
    dec: tuple = (32, 16)
    slope: float = 0.1

    def __post_init__(self):
        if self.t < 1 or self.m < 1:
            raise InvalidArgument("T and M must be >= 1")
        if self.input_size < 8 or self.input_size % 8:
            raise InvalidArgument(f"input size must be a positive multiple of 8, got {self.input_size}")
        if self.enc[2] != self.enc[3]:
            raise InvalidArgument("the skip connection needs enc[2] == enc[3]")

    @property
    def alpha_size(self) -> int:
        return self.input_size // 4

    def param_shapes(self) -> dict:
        c0, c1, c2, c3 = self.enc
        d0, d1 = self.dec
        return {
            "enc0.w": (3, 3, self.in_channels, c0), "enc0.b": (c0,),
            "enc1.w": (3, 3, c0, c1), "enc1.b": (c1,),
            "enc2.w": (3, 3, c1, c2), "enc2.b": (c2,),
            "enc3.w": (3, 3, c2, c3), "enc3.b": (c3,),
            "omega.w": (c3, self.t), "omega.b": (self.t,),
            "dec0.w": (3, 3, c2, d0), "dec0.b": (d0,),
            "dec1.w": (3, 3, d0, d1), "dec1.b": (d1,),
            "alpha.w": (1, 1, d1, self.m), "alpha.b": (self.m,),
        }


_HEADS = ("omega.w", "omega.b", "alpha.w", "alpha.b")


@dataclass
class ConvPredictor:
    arch: ConvArch
    params: dict  # name -> array, in ``arch.param_shapes()`` order
    _cache: dict | None = field(default=None, repr=False)

    arch_id = ARCH_CONV

    @property
    def dtype(self):
        return self.params["enc0.w"].dtype

    def astype(self, dtype) -> "ConvPredictor":
        return ConvPredictor(self.arch, {k: v.astype(dtype) for k, v in self.params.items()})

    def forward(self, x: np.ndarray) -> PredictorOutput:
        a = self.arch
        s = a.input_size
        if x.shape != (s, s, a.in_channels):
            raise InvalidArgument(f"predictor input must be {(s, s, a.in_channels)}, got {x.shape}")
        p = self.params
        x = np.asarray(x, dtype=self.dtype)
        c = {"x": x}
        h = x
        for i, stride in enumerate((1, 2, 2, 2)):
            pre, c[f"enc{i}"] = conv_forward(h, p[f"enc{i}.w"], p[f"enc{i}.b"], stride)
            c[f"enc{i}.pre"] = pre
            h = _leaky(pre, a.slope)
            c[f"enc{i}.out"] = h
        e3 = h
        pooled = e3.mean(axis=(0, 1))
        c["pooled"] = pooled
        omega_logits = pooled @ p["omega.w"] + p["omega.b"]

        skip = _up2(e3) + c["enc2.out"]
        pre, c["dec0"] = conv_forward(skip, p["dec0.w"], p["dec0.b"])
        c["dec0.pre"] = pre
        h = _leaky(pre, a.slope)
        pre, c["dec1"] = conv_forward(h, p["dec1.w"], p["dec1.b"])
        c["dec1.pre"] = pre
        h = _leaky(pre, a.slope)
        alpha_logits, c["alpha"] = conv_forward(h, p["alpha.w"], p["alpha.b"])

        out = PredictorOutput(omega_logits, alpha_logits,
                              softmax(omega_logits), softmax(alpha_logits, axis=2))
        c["out"] = out
        self._cache = c
        return out

    def backward(self, d_omega: np.ndarray, d_alpha_lowres: np.ndarray) -> dict:
        """Parameter gradients for upstream gradients w.r.t. the softmax outputs
        of the most recent :meth:`forward` call."""
        if self._cache is None:
            raise InvalidState("backward called before forward")
        a, p, c = self.arch, self.params, self._cache
        out = c["out"]
        if d_omega.shape != out.omega.shape or d_alpha_lowres.shape != out.alpha_lowres.shape:
            raise InvalidArgument("upstream gradient shapes do not match the last forward")
        dt = self.dtype
        g = {}
        d_zo = softmax_backward(out.omega, d_omega.astype(dt))
        d_za = softmax_backward(out.alpha_lowres, d_alpha_lowres.astype(dt), axis=2)

        g["omega.w"] = np.outer(c["pooled"], d_zo)
        g["omega.b"] = d_zo
        e3 = c["enc3.out"]
        d_e3 = np.broadcast_to(p["omega.w"] @ d_zo / (e3.shape[0] * e3.shape[1]), e3.shape).copy()

        d_h, g["alpha.w"], g["alpha.b"] = conv_backward(d_za, p["alpha.w"], c["alpha"])
        d_pre = _leaky_backward(c["dec1.pre"], d_h, a.slope)
        d_h, g["dec1.w"], g["dec1.b"] = conv_backward(d_pre, p["dec1.w"], c["dec1"])
        d_pre = _leaky_backward(c["dec0.pre"], d_h, a.slope)
        d_skip, g["dec0.w"], g["dec0.b"] = conv_backward(d_pre, p["dec0.w"], c["dec0"])
        d_h = d_e3 + _up2_backward(d_skip)
        for i in (3, 2, 1, 0):
            if i == 2:
                d_h = d_h + d_skip
            d_pre = _leaky_backward(c[f"enc{i}.pre"], d_h, a.slope)
            d_h, g[f"enc{i}.w"], g[f"enc{i}.b"] = conv_backward(d_pre, p[f"enc{i}.w"], c[f"enc{i}"])
        return {k: g[k].astype(dt) for k in p}


@dataclass
class GridPredictor:
    """Free low-resolution alpha logits plus T omega logits, no network."""

    params: dict  # "alpha_logits": (g, g, M), "omega_logits": (T,)
    _cache: PredictorOutput | None = field(default=None, repr=False)

    arch_id = ARCH_GRID

    @classmethod
    def zeros(cls, t: int, m: int, grid_size: int = 64, dtype=np.float32) -> "GridPredictor":
        if t < 1 or m < 1 or grid_size < 1:
            raise InvalidArgument("T, M and the grid size must be >= 1")
        return cls({"alpha_logits": np.zeros((grid_size, grid_size, m), dtype=dtype),
                    "omega_logits": np.zeros(t, dtype=dtype)})

    @property
    def dtype(self):
        return self.params["alpha_logits"].dtype

    @property
    def alpha_size(self) -> int:
        return self.params["alpha_logits"].shape[0]

    def astype(self, dtype) -> "GridPredictor":
        return GridPredictor({k: v.astype(dtype) for k, v in self.params.items()})

    def forward(self, x=None) -> PredictorOutput:
        zo = self.params["omega_logits"]
        za = self.params["alpha_logits"]
        self._cache = PredictorOutput(zo, za, softmax(zo), softmax(za, axis=2))
        return self._cache

    def backward(self, d_omega: np.ndarray, d_alpha_lowres: np.ndarray) -> dict:
        if self._cache is None:
            raise InvalidState("backward called before forward")
        out = self._cache
        return {
            "alpha_logits": softmax_backward(out.alpha_lowres, d_alpha_lowres.astype(self.dtype), axis=2),
            "omega_logits": softmax_backward(out.omega, d_omega.astype(self.dtype)),
        }


def init_predictor(seed: int, arch: ConvArch = ConvArch(), dtype=np.float32) -> ConvPredictor:
    """Kaiming-uniform kernels, zero biases, zero head layers."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b") or name in _HEADS:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return ConvPredictor(arch, params)


def predictor_forward(net, image: np.ndarray) -> PredictorOutput:
    return net.forward(image)


def predictor_backward(net, d_omega: np.ndarray, d_alpha_lowres: np.ndarray) -> dict:
    return net.backward(d_omega, d_alpha_lowres)
