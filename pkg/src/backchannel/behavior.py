"""Turning abstract decisions into listener actions: vocal cue, nod, gaze."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .errors import ConfigurationError
from .heuristic import BCDecision

NOD_HOLD_S = 0.5
DEFAULT_CUES = ("hmm", "ahh", "uh-huh", "mhm", "yeah")
ACTIONS = {"vocal": "vocal", "nonvocal": "nod", "nod": "nod", "both": "both"}


@dataclass(frozen=True)
class BehaviorConfig:
    cues: Tuple[str, ...] = DEFAULT_CUES
    nod_amplitude: Tuple[float, float] = (0.1, 0.3)
    gaze_at_user_s: Tuple[float, float] = (3.0, 7.0)
    gaze_away_s: Tuple[float, float] = (1.0, 3.0)


@dataclass(frozen=True)
class BCEvent:
    t: float
    action: str
    vocal_cue: Optional[str] = None
    nod_amplitude: Optional[float] = None
    hold_s: float = NOD_HOLD_S

    def __post_init__(self):
        if self.action not in ("vocal", "nod", "both"):
            raise ValueError(f"unknown action {self.action!r}")
        if (self.vocal_cue is not None) != (self.action in ("vocal", "both")):
            raise ValueError("vocal_cue must be set exactly for vocal and both")
        if (self.nod_amplitude is not None) != (self.action in ("nod", "both")):
            raise ValueError("nod_amplitude must be set exactly for nod and both")

    def to_record(self) -> dict:
        rec = {"t": round(self.t, 3), "kind": "bc", "action": self.action}
        if self.vocal_cue is not None:
            rec["cue"] = self.vocal_cue
        if self.nod_amplitude is not None:
            rec["amplitude"] = round(self.nod_amplitude, 6)
        return rec


@dataclass(frozen=True)
class GazeState:
    mode: str
    until_t: float

    def to_record(self, t: float) -> dict:
        return {"t": round(t, 3), "kind": "gaze", "mode": self.mode}


def realize(decision: BCDecision, rng: np.random.Generator,
            config: BehaviorConfig = BehaviorConfig()) -> BCEvent:
    """Pick a cue and/or nod amplitude for a decision, uniformly at random."""
    action = ACTIONS.get(decision.bc_type)
    if action is None:
        raise ConfigurationError(f"unknown backchannel type {decision.bc_type!r}")
    cue = amp = None
    if action in ("vocal", "both"):
        if not config.cues:
            raise ConfigurationError("vocal backchannel requested but the cue set is empty")
        cue = config.cues[int(rng.integers(len(config.cues)))]
    if action in ("nod", "both"):
        lo, hi = config.nod_amplitude
        amp = float(rng.uniform(lo, hi))
    return BCEvent(decision.t, action, cue, amp)


def _draw(rng, mode, config):
    lo, hi = config.gaze_at_user_s if mode == "at_user" else config.gaze_away_s
    return float(rng.uniform(lo, hi))


def initial_gaze(rng: np.random.Generator, config: BehaviorConfig = BehaviorConfig(),
                 t0: float = 0.0) -> GazeState:
    return GazeState("at_user", t0 + _draw(rng, "at_user", config))


def gaze_step(state: GazeState, t: float, rng: np.random.Generator,
              config: BehaviorConfig = BehaviorConfig()) -> GazeState:
    """State at time ``t``: flip mode at each expiry, drawing the next duration."""
    while t >= state.until_t:
        mode = "away" if state.mode == "at_user" else "at_user"
        state = GazeState(mode, state.until_t + _draw(rng, mode, config))
    return state


def gaze_schedule(duration: float, rng: np.random.Generator,
                  config: BehaviorConfig = BehaviorConfig()) -> List[Tuple[float, GazeState]]:
    """Transitions ``(t, new_state)`` over ``[0, duration)``, starting at the user."""
    state = initial_gaze(rng, config)
    out = [(0.0, state)]
    while state.until_t < duration:
        t = state.until_t
        state = gaze_step(state, t, rng, config)
        out.append((t, state))
    return out


LogRecord = dict


def merge_streams(bc_events: Sequence[BCEvent],
                  gaze_transitions: Sequence[Tuple[float, GazeState]]) -> List[LogRecord]:
    """Time-ordered log records; gaze precedes a backchannel at the same time."""
    keyed = [((round(t, 3), 0, i), g.to_record(t)) for i, (t, g) in enumerate(gaze_transitions)]
    keyed += [((round(e.t, 3), 1, i), e.to_record()) for i, e in enumerate(bc_events)]
    keyed.sort(key=lambda kv: kv[0])
    return [rec for _, rec in keyed]


def write_event_log(records: Iterable[LogRecord], out: TextIO) -> None:
    for rec in records:
        out.write(json.dumps(rec) + "\n")


def read_event_log(src: TextIO) -> List[LogRecord]:
    out = []
    for lineno, line in enumerate(src, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"event log line {lineno}: {exc}") from exc
    return out


def realize_session(decisions: Sequence[BCDecision], duration: float, rng: np.random.Generator,
                    config: BehaviorConfig = BehaviorConfig(), with_gaze: bool = True,
                    gaze_rng: Optional[np.random.Generator] = None) -> List[LogRecord]:
    """Full session log: realised backchannels plus the listening gaze schedule.

    ``gaze_rng`` (default: ``rng``, drawn after all backchannels) lets the
    gaze schedule be drawn independently of how many decisions there are.
    """
    events = [realize(d, rng, config) for d in decisions]
    gaze = gaze_schedule(duration, gaze_rng or rng, config) if with_gaze else []
    return merge_streams(events, gaze)


class LogMerger:
    """Incremental ``merge_streams`` for a live session.

    Gaze transitions are known up front; backchannels arrive in time order.
    ``release(horizon)`` returns every record that can no longer be preceded
    by a backchannel decided later, given that no future decision is earlier
    than ``horizon``.
    """

    def __init__(self, gaze_transitions: Sequence[Tuple[float, GazeState]] = ()):
        self._gaze = [((round(t, 3), 0, i), g.to_record(t)) for i, (t, g) in enumerate(gaze_transitions)]
        self._bc: List[Tuple[tuple, LogRecord]] = []
        self._n_bc = 0

    def add(self, event: BCEvent) -> None:
        self._bc.append(((round(event.t, 3), 1, self._n_bc), event.to_record()))
        self._n_bc += 1

    def release(self, horizon: float) -> List[LogRecord]:
        return self._take((round(horizon, 3), 1, -1))

    def finish(self) -> List[LogRecord]:
        return self._take(None)

    def _take(self, limit) -> List[LogRecord]:
        ready = [kv for kv in self._gaze + self._bc if limit is None or kv[0] < limit]
        if not ready:
            return []
        taken = {id(kv) for kv in ready}
        self._gaze = [kv for kv in self._gaze if id(kv) not in taken]
        self._bc = [kv for kv in self._bc if id(kv) not in taken]
        ready.sort(key=lambda kv: kv[0])
        return [rec for _, rec in ready]
