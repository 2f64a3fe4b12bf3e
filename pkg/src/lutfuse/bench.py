"""Wall-clock benchmark of the inference path at several resolutions.

Times are split the way the enhancement pipeline is split: the predictor
stage (resize to the predictor input, network forward) does a fixed amount
of work, while the interpolation stage (on-the-fly weight upsampling plus
spatial-aware lookup) touches every pixel.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lut import apply_lowres
from .model import Enhancer

DEFAULT_RESOLUTIONS = ((640, 480), (1920, 1080), (3840, 2160))

# Published GPU timings (ms) for the same three sizes, printed for context only.
REFERENCE_GPU_MS = {(640, 480): 2.27, (1920, 1080): 2.34, (3840, 2160): 4.39}

HEADER = ("resolution\tpixels\tpredictor_median_ms\tpredictor_p95_ms"
          "\tinterp_median_ms\tinterp_p95_ms\ttotal_median_ms\ttotal_p95_ms\treference_gpu_ms")


@dataclass
class BenchRow:
    width: int
    height: int
    predictor_ms: np.ndarray
    interp_ms: np.ndarray

    @property
    def total_ms(self) -> np.ndarray:
        # Only the first len(interp_ms) predictor samples come from full runs.
        return self.predictor_ms[:len(self.interp_ms)] + self.interp_ms

    @staticmethod
    def _stats(x):
        return float(np.median(x)), float(np.percentile(x, 95))

    def tsv(self) -> str:
        ref = REFERENCE_GPU_MS.get((self.width, self.height))
        cols = [f"{self.width}x{self.height}", str(self.width * self.height)]
        for series in (self.predictor_ms, self.interp_ms, self.total_ms):
            cols += [f"{v:.3f}" for v in self._stats(series)]
        cols.append("-" if ref is None else f"{ref:.2f}")
        return "\t".join(cols)


def time_once(model: Enhancer, image: np.ndarray) -> tuple[float, float]:
    """Predictor and interpolation wall-clock time (ms) for one image."""
    t0 = time.perf_counter()
    out = model.predict(image)
    t1 = time.perf_counter()
    apply_lowres(model.bank, out.omega, out.alpha_lowres, image)
    t2 = time.perf_counter()
    return (t1 - t0) * 1000.0, (t2 - t1) * 1000.0


def run_bench(model: Enhancer, resolutions: Sequence[tuple[int, int]] = DEFAULT_RESOLUTIONS,
              repetitions: int = 5, seed: int = 0, warmup: int = 1,
              predictor_repetitions: Optional[int] = None) -> list[BenchRow]:
    """Time ``repetitions`` warm runs per ``(width, height)`` on uniform noise.

    ``predictor_repetitions`` (default ``repetitions``) adds predictor-only
    timings, which are cheap, so its median can be tightened without
    repeating the full-resolution interpolation.
    """
    rng = np.random.default_rng(seed)
    extra = max(0, (predictor_repetitions or repetitions) - repetitions)
    rows = []
    for w, h in resolutions:
        image = rng.random((h, w, 3), dtype=np.float32)
        for _ in range(warmup):
            time_once(model, image)
        samples = np.array([time_once(model, image) for _ in range(repetitions)])
        pred = list(samples[:, 0])
        for _ in range(extra):
            t0 = time.perf_counter()
            model.predict(image)
            pred.append((time.perf_counter() - t0) * 1000.0)
        rows.append(BenchRow(w, h, np.array(pred), samples[:, 1]))
    return rows


def parse_resolution(text: str) -> tuple[int, int]:
    w, _, h = text.lower().partition("x")
    return int(w), int(h)
