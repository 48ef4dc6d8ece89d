"""A random listener, for comparison: Poisson backchannels of uniform type.

Not part of the rule-based or learned policies; it calibrates how much of a
score is reachable by chance at a given rate.
"""
from __future__ import annotations

from typing import List

import numpy as np

from .corpus import TYPE_CLASSES
from .heuristic import BCDecision

DEFAULT_RATE_PER_MIN = 6.0


def random_policy(duration: float, rng: np.random.Generator,
                  rate_per_min: float = DEFAULT_RATE_PER_MIN, start: float = 0.0) -> List[BCDecision]:
    """Decisions at Poisson arrival times in ``[start, start + duration)``, ms resolution."""
    if rate_per_min < 0:
        raise ValueError(f"rate must be non-negative, got {rate_per_min}")
    out: List[BCDecision] = []
    if rate_per_min == 0 or duration <= 0:
        return out
    scale = 60.0 / rate_per_min
    t = start
    while True:
        t += rng.exponential(scale)
        if t >= start + duration:
            return out
        kind = TYPE_CLASSES[int(rng.integers(len(TYPE_CLASSES)))]
        out.append(BCDecision(round(t, 3), kind))
