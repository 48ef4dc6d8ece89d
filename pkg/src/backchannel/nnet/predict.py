"""Two-stage inference: timing model decides when, type model decides what."""
from __future__ import annotations

from collections import deque
from typing import List, Optional

import numpy as np

from ..corpus import TYPE_CLASSES
from ..dsp import STEP_S, StateStream, apply_norm
from ..errors import ConfigurationError
from ..heuristic import BCDecision
from .model import RecurrentModel, forward_window


class TwoStageDetector:
    """Incremental detector fed one raw state vector per 0.5 s step.

    Each model normalises with its own stored statistics. A step fires when
    the timing output exceeds the threshold; the type model then picks the
    kind. Steps lacking either model's full lookback yield nothing. The
    decision time is the start of the step's window.
    """

    def __init__(self, model_timing: RecurrentModel, model_type: RecurrentModel,
                 threshold: Optional[float] = None):
        for m in (model_timing, model_type):
            if m.norm_stats is None:
                raise ConfigurationError("model has no normalisation statistics")
        self.timing, self.type = model_timing, model_type
        self.threshold = model_timing.threshold if threshold is None else threshold
        self.need = max(model_timing.lookback, model_type.lookback)
        self._raw = deque(maxlen=self.need)

    def push(self, t_end: float, values: np.ndarray) -> Optional[BCDecision]:
        self._raw.append(np.asarray(values, dtype=np.float64))
        if len(self._raw) < self.need:
            return None
        raw = np.stack(self._raw)
        xt = apply_norm(raw[-self.timing.lookback:], self.timing.norm_stats)
        p = forward_window(xt, self.timing)[0]
        if not p > self.threshold:
            return None
        xy = apply_norm(raw[-self.type.lookback:], self.type.norm_stats)
        kind = int(np.argmax(forward_window(xy, self.type)))
        return BCDecision(float(t_end - STEP_S), TYPE_CLASSES[kind])


def predict_events(model_timing: RecurrentModel, model_type: RecurrentModel,
                   states: StateStream, threshold: Optional[float] = None) -> List[BCDecision]:
    """Backchannel decisions for a raw (unnormalised) 2 Hz state stream."""
    det = TwoStageDetector(model_timing, model_type, threshold)
    out = []
    for t, row in zip(states.t, states.values):
        d = det.push(float(t), row)
        if d is not None:
            out.append(d)
    return out
