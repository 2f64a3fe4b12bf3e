import numpy as np

from lutfuse.predictor import softmax


def random_bank_inputs(rng, t=2, m=3, n=4, h=6, w=5, dtype=np.float32):
    """Random cells, simplex weights and an image that pokes outside [0, 1]."""
    values = rng.uniform(-0.1, 1.1, size=(t, m, n, n, n, 3)).astype(dtype)
    omega = softmax(rng.normal(size=t)).astype(dtype)
    alpha = softmax(rng.normal(size=(h, w, m)), axis=2).astype(dtype)
    image = rng.uniform(-0.05, 1.05, size=(h, w, 3)).astype(dtype)
    return values, omega, alpha, image


# Acceptance outcomes, printed by the terminal-summary hook in conftest.
CRITERIA: dict = {}


class criterion:
    """Record whether the enclosed checks for one acceptance criterion pass."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc is not None:
            first = str(exc).splitlines()[0] if str(exc) else ""
            detail = "; ".join(filter(None, [detail, f"{exc_type.__name__}: {first}"]))
        line = f"criterion {self.number} [{status}] {self.title}"
        CRITERIA[self.number] = f"{line} | {detail}" if detail else line
        print(CRITERIA[self.number])
        return False
