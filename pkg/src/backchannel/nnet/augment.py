"""Time and feature masking for normalised state sequences."""
from __future__ import annotations

import numpy as np

from ..corpus import LabeledSequence

MAX_TIME_FRACTION = 0.2
MAX_FEATURE_BAND = 8


def mask_values(values: np.ndarray, rng: np.random.Generator,
                max_time_fraction: float = MAX_TIME_FRACTION,
                max_band: int = MAX_FEATURE_BAND) -> np.ndarray:
    """Zero a span of steps, a band of feature dims, or both (picked uniformly)."""
    out = np.array(values, dtype=np.float64, copy=True)
    n, d = out.shape
    mode = rng.choice(("time", "frequency", "both"))
    if mode in ("time", "both") and n > 0:
        width = int(rng.integers(1, max(1, int(max_time_fraction * n)) + 1))
        start = int(rng.integers(0, n - width + 1))
        out[start:start + width] = 0.0
    if mode in ("frequency", "both"):
        width = int(rng.integers(1, min(max_band, d) + 1))
        start = int(rng.integers(0, d - width + 1))
        out[:, start:start + width] = 0.0
    return out


def augment(seq: LabeledSequence, rng: np.random.Generator, **kwargs) -> LabeledSequence:
    """A masked copy of ``seq``; labels and length are untouched."""
    return seq.with_values(mask_values(seq.values, rng, **kwargs))
