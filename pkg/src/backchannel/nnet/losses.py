"""Training losses and their derivatives with respect to the model output.

All losses are means over every output element. Focal loss uses a constant
``alpha`` for both classes, so ``alpha=1, gamma=0`` is exactly binary
cross-entropy.
"""
from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np

from ..errors import ValidationError

PROB_FLOOR = 1e-7
LOSSES = ("focal", "mse", "bce", "hinge")


class DomainError(ValidationError):
    """A probability-based loss received values outside [0, 1]."""


def _check_prob(pred):
    if np.any(pred < 0.0) or np.any(pred > 1.0) or not np.all(np.isfinite(pred)):
        raise DomainError("focal and bce losses need predictions in [0, 1]")


def data_loss(pred, target, kind: str, alpha: float = 0.25, gamma: float = 2.0) -> Tuple[float, np.ndarray]:
    """Mean loss and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"prediction shape {pred.shape} does not match target {target.shape}")
    n = pred.size
    if kind == "mse":
        diff = pred - target
        return float(np.mean(diff ** 2)), 2.0 * diff / n
    if kind == "hinge":
        y = 2.0 * target - 1.0
        margin = 1.0 - y * pred
        active = margin > 0
        return float(np.mean(np.where(active, margin, 0.0))), np.where(active, -y, 0.0) / n
    if kind == "bce":
        _check_prob(pred)
        pc = np.clip(pred, PROB_FLOOR, 1.0 - PROB_FLOOR)
        inside = (pred >= PROB_FLOOR) & (pred <= 1.0 - PROB_FLOOR)
        loss = -(target * np.log(pc) + (1.0 - target) * np.log(1.0 - pc))
        grad = (-target / pc + (1.0 - target) / (1.0 - pc)) * inside / n
        return float(np.mean(loss)), grad
    if kind == "focal":
        _check_prob(pred)
        sign = 2.0 * target - 1.0
        pt_raw = target * pred + (1.0 - target) * (1.0 - pred)
        pt = np.clip(pt_raw, PROB_FLOOR, 1.0 - PROB_FLOOR)
        inside = (pt_raw >= PROB_FLOOR) & (pt_raw <= 1.0 - PROB_FLOOR)
        log_pt = np.log(pt)
        weight = (1.0 - pt) ** gamma
        loss = -alpha * weight * log_pt
        d_pt = -alpha * weight / pt
        if gamma != 0:
            d_pt = d_pt + alpha * gamma * (1.0 - pt) ** (gamma - 1.0) * log_pt
        return float(np.mean(loss)), d_pt * sign * inside / n
    raise ValidationError(f"unknown loss {kind!r}")


def l2_penalty(weights: Iterable[np.ndarray], l2: float) -> float:
    return float(l2 * sum(np.sum(w * w) for w in weights))


def loss(pred, target, kind: str, l2: float = 0.0, weights: Iterable[np.ndarray] = (),
         alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Data loss plus ``l2 * sum ||W||^2`` over the given weight matrices."""
    value, _ = data_loss(pred, target, kind, alpha, gamma)
    return value + l2_penalty(weights, l2)
