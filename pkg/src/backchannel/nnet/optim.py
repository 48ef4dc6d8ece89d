"""SGD and Adam updates over a dict of parameter arrays (updated in place)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import ConfigurationError

DEFAULT_LR = {"adam": 1e-3, "sgd": 1e-2}


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def make_optimizer(kind: str, lr: Optional[float] = None) -> OptimizerState:
    if kind not in DEFAULT_LR:
        raise ConfigurationError(f"unknown optimizer {kind!r}")
    return OptimizerState(kind, DEFAULT_LR[kind] if lr is None else float(lr))


def optimize_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
                  state: OptimizerState) -> Dict[str, np.ndarray]:
    if state.kind == "sgd":
        for k, g in grads.items():
            params[k] -= state.lr * g
        return params
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, g in grads.items():
        m = state.m.setdefault(k, np.zeros_like(g))
        v = state.v.setdefault(k, np.zeros_like(g))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
