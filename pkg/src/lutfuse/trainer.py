"""Adam + cosine-restart training over paired PNG datasets."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InvalidArgument, NumericError, PngError
from .imageio import load_png
from .losses import LossWeights, PerceptualHook
from .lut import LutBank
from .metrics import psnr, ssim
from .model import Enhancer, jittered_identity_bank, loss_and_grads, set_threads
from .predictor import ConvArch, GridPredictor, init_predictor

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch\tlr\tL_total\tL_r\tL_s\tL_m\tL_c\tval_PSNR\tval_SSIM\twall_ms"


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 1
    lr_amplitude: float = 2e-4
    lr_period_epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    t: int = 3
    m: int = 10
    n: int = 33
    predictor: str = "conv"
    predictor_input: int = 256
    grid_size: int = 64
    init_jitter: float = 1e-3
    alpha_l2: bool = True
    val_fraction: float = 0.1
    threads: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgument("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidArgument("batch size must be >= 1")
        if not self.lr_amplitude > 0:
            raise InvalidArgument("lr amplitude must be > 0")
        if self.lr_period_epochs < 1:
            raise InvalidArgument("lr period must be >= 1 epoch")
        if self.t < 1 or self.m < 1 or self.n < 2:
            raise InvalidArgument("need T >= 1, M >= 1, N >= 2")
        if self.predictor not in ("conv", "grid"):
            raise InvalidArgument(f"unknown predictor kind {self.predictor!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InvalidArgument("val_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss_weights"] = dataclasses.asdict(self.loss_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss_weights"] = LossWeights(**d["loss_weights"])
        return cls(**d)


def cosine_lr(step: int, steps_per_epoch: int, config: TrainConfig) -> float:
    """Cosine annealing from the amplitude to 0, restarting every period."""
    if step < 0:
        raise InvalidArgument("step must be >= 0")
    period = config.lr_period_epochs * steps_per_epoch
    phase = (step % period) / period
    return config.lr_amplitude * 0.5 * (1.0 + math.cos(math.pi * phase))


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, config: TrainConfig) -> None:
    """Bias-corrected Adam, updating ``params`` and ``state`` in place.

    Raises :class:`NumericError` (and leaves everything untouched) if any
    gradient is non-finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r} at step {state.step}")
    b1, b2 = config.beta1, config.beta2
    t = state.step + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + config.eps_adam)
        state.m[name] = m
        state.v[name] = v
    state.step = t


# --------------------------------------------------------------------------
# data


@dataclass
class Pair:
    name: str
    image: np.ndarray
    target: np.ndarray


def load_pairs(data_dir) -> list[Pair]:
    """Load ``<data_dir>/input/*.png`` paired by file name with ``<data_dir>/target/``."""
    data_dir = Path(data_dir)
    in_dir, gt_dir = data_dir / "input", data_dir / "target"
    if not in_dir.is_dir() or not gt_dir.is_dir():
        raise DataError(f"{data_dir} needs 'input/' and 'target/' subdirectories")
    pairs = []
    for src in sorted(in_dir.glob("*.png")):
        dst = gt_dir / src.name
        if not dst.exists():
            log.warning("skipping %s: no matching target", src.name)
            continue
        try:
            x, y = load_png(src), load_png(dst)
        except (PngError, OSError) as exc:
            log.warning("skipping %s: %s", src.name, exc)
            continue
        if x.shape != y.shape:
            log.warning("skipping %s: input %s vs target %s", src.name, x.shape[:2], y.shape[:2])
            continue
        pairs.append(Pair(src.name, x, y))
    if not pairs:
        raise DataError(f"no valid image pairs in {data_dir}")
    return pairs


def split_pairs(pairs: Sequence[Pair], val_fraction: float):
    """Deterministic train/val split by file-name hash.

    If either side ends up empty, validation falls back to the training set.
    """
    train, val = [], []
    for p in pairs:
        bucket = int(hashlib.sha1(p.name.encode()).hexdigest()[:8], 16) / 2 ** 32
        (val if bucket < val_fraction else train).append(p)
    if not train:
        train, val = list(pairs), []
    return train, (val or list(train))


# --------------------------------------------------------------------------
# model construction / checkpoints


def init_model(config: TrainConfig, rng: np.random.Generator) -> Enhancer:
    bank = jittered_identity_bank(config.t, config.m, config.n, config.init_jitter, rng)
    if config.predictor == "conv":
        net = init_predictor(config.seed, ConvArch(t=config.t, m=config.m,
                                                   input_size=config.predictor_input))
    else:
        net = GridPredictor.zeros(config.t, config.m, config.grid_size)
    return Enhancer(bank, net)


@dataclass
class Checkpoint:
    model: Enhancer
    adam: AdamState
    epoch: int  # completed epochs
    rng_state: dict
    config: TrainConfig


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    arrays = {}
    for name, arr in ckpt.model.parameters().items():
        arrays[f"param:{name}"] = arr
        if name in ckpt.adam.m:
            arrays[f"adam_m:{name}"] = ckpt.adam.m[name]
            arrays[f"adam_v:{name}"] = ckpt.adam.v[name]
    meta = {
        "epoch": ckpt.epoch,
        "adam_step": ckpt.adam.step,
        "rng_state": ckpt.rng_state,
        "config": ckpt.config.to_dict(),
    }
    arrays["meta"] = np.array(json.dumps(meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        config = TrainConfig.from_dict(meta["config"])
        model = init_model(config, np.random.default_rng(0))
        model.bank = LutBank(z["param:bank"].copy())
        for k in list(model.predictor.params):
            model.predictor.params[k] = z[f"param:pred/{k}"].copy()
        adam = AdamState(step=meta["adam_step"])
        for key in z.files:
            if key.startswith("adam_m:"):
                adam.m[key[7:]] = z[key].copy()
            elif key.startswith("adam_v:"):
                adam.v[key[7:]] = z[key].copy()
    return Checkpoint(model, adam, meta["epoch"], meta["rng_state"], config)


# --------------------------------------------------------------------------
# loop


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    total: float
    mse: float
    smooth: float
    mono: float
    color: float
    val_psnr: float
    val_ssim: float
    wall_ms: float

    def tsv(self) -> str:
        vals = [self.lr, self.total, self.mse, self.smooth, self.mono, self.color,
                self.val_psnr, self.val_ssim]
        wall = "-" if math.isnan(self.wall_ms) else f"{self.wall_ms:.1f}"
        return "\t".join([str(self.epoch)] + [repr(float(v)) for v in vals] + [wall])


def evaluate(model: Enhancer, pairs: Sequence[Pair]) -> tuple[float, float]:
    """Mean PSNR/SSIM of clamped outputs; SSIM is NaN for images under 11 px."""
    ps, ss = [], []
    for p in pairs:
        out = np.clip(model.enhance(p.image), 0.0, 1.0)
        ps.append(psnr(out, p.target))
        ss.append(ssim(out, p.target) if min(out.shape[:2]) >= 11 else math.nan)
    return float(np.mean(ps)), float(np.mean(ss))


@dataclass
class TrainResult:
    model: Enhancer
    history: list
    checkpoint: Checkpoint


def train(dataset, config: TrainConfig, log_path=None, checkpoint_path=None,
          resume=None, perceptual: Optional[PerceptualHook] = None,
          record_time: bool = True) -> TrainResult:
    """Train on a dataset directory or a list of :class:`Pair`.

    Writes one metrics row per epoch to ``log_path`` (appending when
    resuming) and overwrites ``checkpoint_path`` after every epoch. With
    ``record_time=False`` the wall_ms column is written as ``-`` so that
    logs of identical runs compare byte for byte.
    """
    set_threads(config.threads)
    pairs = load_pairs(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    if not pairs:
        raise DataError("no training pairs")
    train_set, val_set = split_pairs(pairs, config.val_fraction)

    if resume is not None:
        ckpt = load_checkpoint(resume)
        model, adam, start_epoch = ckpt.model, ckpt.adam, ckpt.epoch
        rng = np.random.default_rng()
        rng.bit_generator.state = ckpt.rng_state
    else:
        rng = np.random.default_rng(config.seed)
        model = init_model(config, rng)
        adam, start_epoch = AdamState(), 0

    steps_per_epoch = math.ceil(len(train_set) / config.batch_size)
    history = []
    log_fh = None
    if log_path is not None:
        log_fh = open(log_path, "a" if resume is not None else "w", encoding="utf-8")
        if resume is None:
            log_fh.write(METRICS_HEADER + "\n")
    ckpt = None
    try:
        for epoch in range(start_epoch, config.epochs):
            t0 = time.perf_counter()
            order = rng.permutation(len(train_set))
            sums = np.zeros(5)
            epoch_lr = cosine_lr(adam.step, steps_per_epoch, config)
            for b0 in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[b0:b0 + config.batch_size]]
                grads = None
                for pair in batch:
                    terms, g, _ = loss_and_grads(model, pair.image, pair.target,
                                                 config.loss_weights, perceptual,
                                                 include_alpha=config.alpha_l2)
                    sums += (terms.total, terms.mse, terms.smooth, terms.mono, terms.color)
                    grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
                if len(batch) > 1:
                    grads = {k: v / len(batch) for k, v in grads.items()}
                lr = cosine_lr(adam.step, steps_per_epoch, config)
                adam_step(model.parameters(), grads, adam, lr, config)
            means = sums / len(train_set)
            vp, vs = evaluate(model, val_set)
            wall = (time.perf_counter() - t0) * 1000.0 if record_time else math.nan
            row = EpochMetrics(epoch + 1, epoch_lr, *means, vp, vs, wall)
            history.append(row)
            log.info("epoch %d  loss %.6g  val PSNR %.3f", row.epoch, row.total, vp)
            if log_fh is not None:
                log_fh.write(row.tsv() + "\n")
                log_fh.flush()
            ckpt = Checkpoint(model, adam, epoch + 1, rng.bit_generator.state, config)
            if checkpoint_path is not None:
                save_checkpoint(ckpt, checkpoint_path)
    finally:
        if log_fh is not None:
            log_fh.close()
    if ckpt is None:
        ckpt = Checkpoint(model, adam, start_epoch, rng.bit_generator.state, config)
    return TrainResult(model, history, ckpt)
