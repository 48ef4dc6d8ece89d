"""Rule-based listener: backchannel after a sustained low-pitch region.

Rules, evaluated on a 10 ms pitch/VAD stream:

1. the region's pitch is below the 26th percentile of the speaker's voiced
   pitch over the trailing 50 s,
2. such regions continue for at least 110 ms,
3. the low region comes after at least 700 ms of continuous speech,
4. no backchannel was output in the preceding 800 ms,
5. output happens 700 ms after the low region ends.

Rule 4 is re-checked when the delayed output is due, and so is rule 3 if
the speaker has started a new speech run in the meantime. Percentiles are
rank based over voiced samples only and remain undefined until 5 s of voiced
pitch has been buffered.
"""
from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np

from .dsp import ProsodyStream
from .errors import SequencingError, ValidationError


@dataclass(frozen=True)
class HeuristicConfig:
    percentile: float = 26.0
    min_low_ms: int = 110
    min_speech_ms: int = 700
    cooldown_ms: int = 800
    wait_ms: int = 700
    history_ms: int = 50_000
    min_history_ms: int = 5_000
    region_ms: int = 10


@dataclass(frozen=True)
class BCDecision:
    t: float
    bc_type: str


@dataclass
class HeuristicState:
    config: HeuristicConfig = field(default_factory=HeuristicConfig)
    pitch_buffer: Deque[Tuple[int, float]] = field(default_factory=deque)
    sorted_pitch: List[float] = field(default_factory=list)
    speech_run_ms: int = 0
    last_bc_ms: float = -math.inf
    low_region_start_ms: Optional[int] = None
    low_region_last_ms: Optional[int] = None
    low_region_count: int = 0
    low_region_after_speech: bool = False
    pending_emission_ms: Optional[int] = None
    last_t_ms: Optional[int] = None

    @property
    def last_bc_t(self) -> float:
        return self.last_bc_ms / 1000.0

    @property
    def pending_emission_t(self) -> Optional[float]:
        return None if self.pending_emission_ms is None else self.pending_emission_ms / 1000.0


def percentile_of(buffer: Sequence[float], pitch_value: float) -> Optional[float]:
    """Percent of buffered values strictly below ``pitch_value``; None if empty."""
    if len(buffer) == 0:
        return None
    ordered = buffer if isinstance(buffer, list) and _is_sorted(buffer) else sorted(buffer)
    return 100.0 * bisect.bisect_left(ordered, pitch_value) / len(ordered)


def _is_sorted(xs: List[float]) -> bool:
    return all(a <= b for a, b in zip(xs, xs[1:]))


def _is_voiced(pitch) -> bool:
    return pitch is not None and math.isfinite(pitch) and pitch > 0


def step(state: HeuristicState, t: float, pitch_10ms: Optional[float], vad_voiced: bool,
         rng: np.random.Generator) -> Optional[BCDecision]:
    """Advance the listener by one 10 ms region starting at ``t`` seconds."""
    cfg = state.config
    t_ms = int(round(t * 1000.0))
    if state.last_t_ms is not None and t_ms <= state.last_t_ms:
        raise SequencingError(f"region at {t:.3f} s does not follow {state.last_t_ms / 1000:.3f} s")

    decision = None
    if state.pending_emission_ms is not None and t_ms >= state.pending_emission_ms:
        cooled = t_ms - state.last_bc_ms >= cfg.cooldown_ms
        mid_run_start = vad_voiced and state.speech_run_ms < cfg.min_speech_ms
        if cooled and not mid_run_start:
            kind = "vocal" if rng.random() < 0.5 else "nonvocal"
            decision = BCDecision(t_ms / 1000.0, kind)
            state.last_bc_ms = t_ms
        state.pending_emission_ms = None

    voiced = _is_voiced(pitch_10ms)
    buf, ordered = state.pitch_buffer, state.sorted_pitch
    while buf and buf[0][0] <= t_ms - cfg.history_ms:
        _, old = buf.popleft()
        del ordered[bisect.bisect_left(ordered, old)]

    low = False
    if voiced and len(buf) * cfg.region_ms >= cfg.min_history_ms:
        low = 100.0 * bisect.bisect_left(ordered, pitch_10ms) / len(ordered) < cfg.percentile

    if low:
        if state.low_region_start_ms is None:
            state.low_region_start_ms = t_ms
            state.low_region_count = 0
            state.low_region_after_speech = state.speech_run_ms >= cfg.min_speech_ms
        state.low_region_count += 1
        state.low_region_last_ms = t_ms
    elif state.low_region_start_ms is not None:
        end_ms = state.low_region_last_ms + cfg.region_ms
        long_enough = state.low_region_count * cfg.region_ms >= cfg.min_low_ms
        if (long_enough and state.low_region_after_speech
                and state.pending_emission_ms is None
                and t_ms - state.last_bc_ms >= cfg.cooldown_ms):
            state.pending_emission_ms = end_ms + cfg.wait_ms
        state.low_region_start_ms = None
        state.low_region_last_ms = None
        state.low_region_count = 0

    if voiced:
        buf.append((t_ms, float(pitch_10ms)))
        bisect.insort(ordered, float(pitch_10ms))
    state.speech_run_ms = state.speech_run_ms + cfg.region_ms if vad_voiced else 0
    state.last_t_ms = t_ms
    return decision


def run_offline(t: Sequence[float], pitch: Sequence[float], voiced: Sequence[bool],
                rng: np.random.Generator,
                config: Optional[HeuristicConfig] = None) -> List[BCDecision]:
    """Run ``step`` over aligned 10 ms streams and collect the decisions."""
    if not len(t) == len(pitch) == len(voiced):
        raise ValidationError(
            f"stream lengths differ: t={len(t)}, pitch={len(pitch)}, voiced={len(voiced)}")
    state = HeuristicState(config or HeuristicConfig())
    out = []
    for ti, pi, vi in zip(t, pitch, voiced):
        d = step(state, float(ti), float(pi), bool(vi), rng)
        if d is not None:
            out.append(d)
    return out


def run_stream(stream: ProsodyStream, rng: np.random.Generator,
               config: Optional[HeuristicConfig] = None) -> List[BCDecision]:
    return run_offline(stream.t, stream.pitch, stream.voiced, rng, config)
