"""Finite-difference checks of every analytic gradient on miniature instances.

Each group is checked twice against float64 central differences: once with
the analytic gradient computed in float32 (the training precision) and once
in float64. A coordinate's relative error is ``|a - fd| / max(|a|, |fd|, s)``
where ``s`` is a small fraction of the group's largest |fd|; without that
floor, entries that nearly cancel to zero would turn float32 rounding noise
into huge relative errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grad import backward_apply, central_differences, relative_error
from .losses import cie94_loss, monotonicity_loss, mse_loss, smooth_loss
from .lut import LutBank, WeightMap, apply_spatial_aware
from .predictor import ConvArch, GridPredictor, init_predictor, softmax
from .resample import upsample_bilinear, upsample_bilinear_backward

TOL_32 = 1e-3
TOL_64 = 1e-6
FD_STEP = 1e-5
FLOOR_FRACTION = 1e-3


@dataclass
class GroupResult:
    name: str
    err32: float
    err64: float
    tol32: float = TOL_32
    tol64: float = TOL_64

    @property
    def passed(self) -> bool:
        return self.err32 <= self.tol32 and self.err64 <= self.tol64


@dataclass
class _Group:
    name: str
    x: np.ndarray  # float64 point to check at
    loss: Callable[[np.ndarray], float]  # float64 forward
    grad: Callable[[np.ndarray, type], np.ndarray]  # analytic gradient in a dtype


def _miniature(rng):
    t, m, n, h, w = 2, 3, 3, 5, 4
    values = rng.uniform(-0.2, 1.2, size=(t, m, n, n, n, 3))
    omega = softmax(rng.normal(size=t))
    alpha = softmax(rng.normal(size=(h, w, m)), axis=2)
    image = rng.uniform(0.02, 0.98, size=(h, w, 3))
    g_out = rng.normal(size=(h, w, 3))
    return values, omega, alpha, image, g_out


def _apply_groups(rng) -> list[_Group]:
    values, omega, alpha, image, g_out = _miniature(rng)

    def out_loss(v, o, a):
        return float(np.sum(g_out * apply_spatial_aware(LutBank(v), WeightMap(o, a), image)))

    def grads(v, o, a, dt):
        return backward_apply(LutBank(v.astype(dt)), WeightMap(o.astype(dt), a.astype(dt)),
                              image.astype(dt), g_out.astype(dt))

    return [
        _Group("lut cells", values, lambda v: out_loss(v, omega, alpha),
               lambda v, dt: grads(v, omega, alpha, dt).d_luts),
        _Group("alpha", alpha, lambda a: out_loss(values, omega, a),
               lambda a, dt: grads(values, omega, a, dt).d_alpha),
        _Group("omega", omega, lambda o: out_loss(values, o, alpha),
               lambda o, dt: grads(values, o, alpha, dt).d_omega),
    ]


def _upsample_group(rng) -> _Group:
    low = rng.uniform(size=(3, 4, 2))
    g_out = rng.normal(size=(7, 9, 2))
    return _Group(
        "bilinear upsample", low,
        lambda a: float(np.sum(g_out * upsample_bilinear(a, 7, 9))),
        lambda a, dt: upsample_bilinear_backward(g_out.astype(dt), (3, 4)))


def _loss_groups(rng) -> list[_Group]:
    pred = rng.uniform(0.05, 0.95, size=(3, 3, 3))
    target = rng.uniform(0.05, 0.95, size=(3, 3, 3))
    values = rng.uniform(0.0, 1.0, size=(1, 2, 3, 3, 3, 3))
    omega = softmax(rng.normal(size=1))
    alpha = softmax(rng.normal(size=(2, 2, 2)), axis=2)

    def smooth_val(v):
        return smooth_loss(LutBank(v), WeightMap(omega, alpha))[0]

    def smooth_grad(v, dt):
        return smooth_loss(LutBank(v.astype(dt)), WeightMap(omega.astype(dt), alpha.astype(dt)))[1].d_cells

    return [
        _Group("mse loss", pred, lambda p: mse_loss(p, target)[0],
               lambda p, dt: mse_loss(p.astype(dt), target.astype(dt))[1]),
        _Group("smooth loss", values, smooth_val, smooth_grad),
        _Group("smooth loss alpha", alpha,
               lambda a: smooth_loss(LutBank(values), WeightMap(omega, a))[0],
               lambda a, dt: smooth_loss(LutBank(values.astype(dt)),
                                         WeightMap(omega.astype(dt), a.astype(dt)))[1].d_alpha),
        _Group("smooth loss omega", omega,
               lambda o: smooth_loss(LutBank(values), WeightMap(o, alpha))[0],
               lambda o, dt: smooth_loss(LutBank(values.astype(dt)),
                                         WeightMap(o.astype(dt), alpha.astype(dt)))[1].d_omega),
        _Group("monotonicity loss", values, lambda v: monotonicity_loss(LutBank(v))[0],
               lambda v, dt: monotonicity_loss(LutBank(v.astype(dt)))[1]),
        _Group("cie94 loss", pred, lambda p: cie94_loss(p, target)[0],
               lambda p, dt: cie94_loss(p.astype(dt), target.astype(dt))[1]),
    ]


def _predictor_groups(rng, seed) -> list[_Group]:
    arch = ConvArch(t=2, m=3, input_size=8, enc=(4, 4, 4, 4), dec=(4, 4))
    base = init_predictor(seed, arch, dtype=np.float64)
    # Heads start at zero, which would hide every gradient below them.
    for name in ("omega.w", "omega.b", "alpha.w", "alpha.b"):
        base.params[name] = rng.normal(0.0, 0.5, size=base.params[name].shape)
    x = rng.uniform(size=(8, 8, 3))
    c_omega = rng.normal(size=arch.t)
    c_alpha = rng.normal(size=(arch.alpha_size, arch.alpha_size, arch.m))

    def loss_of(net):
        out = net.forward(x)
        return float(np.sum(c_omega * out.omega) + np.sum(c_alpha * out.alpha_lowres))

    def make(name):
        def loss(p):
            net = base.astype(np.float64)
            net.params[name] = p
            return loss_of(net)

        def grad(p, dt):
            net = base.astype(dt)
            net.params[name] = p.astype(dt)
            net.forward(x.astype(dt))
            return net.backward(c_omega.astype(dt), c_alpha.astype(dt))[name]
        return _Group(f"conv predictor {name}", base.params[name].copy(), loss, grad)

    groups = [make(name) for name in arch.param_shapes()]

    grid = GridPredictor.zeros(2, 3, 4, dtype=np.float64)
    grid.params["alpha_logits"] = rng.normal(size=(4, 4, 3))
    grid.params["omega_logits"] = rng.normal(size=2)
    g_alpha = rng.normal(size=(4, 4, 3))
    g_omega = rng.normal(size=2)

    def grid_loss(z):
        return float(np.sum(g_alpha * softmax(z, axis=2)) + np.sum(g_omega * softmax(grid.params["omega_logits"])))

    def grid_grad(z, dt):
        net = GridPredictor({"alpha_logits": z.astype(dt),
                             "omega_logits": grid.params["omega_logits"].astype(dt)})
        net.forward()
        return net.backward(g_omega.astype(dt), g_alpha.astype(dt))["alpha_logits"]

    groups.append(_Group("grid predictor logits", grid.params["alpha_logits"].copy(),
                         grid_loss, grid_grad))
    return groups


def all_groups(seed: int = 0) -> list[_Group]:
    rng = np.random.default_rng(seed)
    return (_apply_groups(rng) + [_upsample_group(rng)] + _loss_groups(rng)
            + _predictor_groups(rng, seed))


def run_suite(seed: int = 0, fault: Optional[str] = None) -> list[GroupResult]:
    """Check every group; ``fault`` names a group whose analytic gradient is
    sign-flipped first (a self-test that the suite can fail)."""
    results = []
    for group in all_groups(seed):
        fd = central_differences(group.loss, group.x, FD_STEP)
        floor = max(1e-12, FLOOR_FRACTION * float(np.max(np.abs(fd))))
        sign = -1.0 if fault is not None and (fault == "any" or group.name.startswith(fault)) else 1.0
        errs = [relative_error(sign * np.asarray(group.grad(group.x.copy(), dt), dtype=np.float64),
                               fd, floor)
                for dt in (np.float32, np.float64)]
        results.append(GroupResult(group.name, *errs))
    return results


def format_results(results: list[GroupResult]) -> str:
    lines = [f"{'group':32s} {'err32':>10s} {'tol32':>8s} {'err64':>10s} {'tol64':>8s}  status"]
    for r in results:
        lines.append(f"{r.name:32s} {r.err32:10.2e} {r.tol32:8.0e} {r.err64:10.2e} {r.tol64:8.0e}  "
                     + ("ok" if r.passed else "FAIL"))
    return "\n".join(lines)
