"""Scoring: step-level macro metrics, onset matching with a tolerance margin,
backchannel count deviation, per-minute rate series and engagement measures."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, TextIO, Tuple

import numpy as np

from .errors import ValidationError

MARGIN_S = 0.5


class Confusion(NamedTuple):
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray


class Scores(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def _ratio(num: float, den: float) -> float:
    return float(num) / den if den > 0 else 0.0


def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def confusion(preds: Sequence[int], labels: Sequence[int], n_classes: Optional[int] = None) -> Confusion:
    preds = np.asarray(preds, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if preds.shape != labels.shape:
        raise ValidationError(f"length mismatch: {len(preds)} predictions, {len(labels)} labels")
    if n_classes is None:
        n_classes = int(max(preds.max(initial=0), labels.max(initial=0))) + 1
        n_classes = max(n_classes, 2)
    classes = np.arange(n_classes)[:, None]
    p, y = preds[None, :] == classes, labels[None, :] == classes
    tp = np.sum(p & y, axis=1)
    fp = np.sum(p & ~y, axis=1)
    fn = np.sum(~p & y, axis=1)
    tn = len(labels) - tp - fp - fn
    return Confusion(tp, fp, fn, tn)


def macro_metrics(preds: Sequence[int], labels: Sequence[int],
                  n_classes: Optional[int] = None) -> Scores:
    """Unweighted class means; accuracy is balanced accuracy (mean recall).

    A class with no predictions (or no labels) contributes 0 to precision
    (or recall), and to F1.
    """
    c = confusion(preds, labels, n_classes)
    precision = [_ratio(tp, tp + fp) for tp, fp in zip(c.tp, c.fp)]
    recall = [_ratio(tp, tp + fn) for tp, fn in zip(c.tp, c.fn)]
    f1 = [_f1(p, r) for p, r in zip(precision, recall)]
    return Scores(float(np.mean(recall)), float(np.mean(precision)),
                  float(np.mean(recall)), float(np.mean(f1)))


# ---------------------------------------------------------------------------
# onset matching

def margin_pairs(pred_onsets: Sequence[float], true_onsets: Sequence[float],
                 margin: float = MARGIN_S) -> List[Tuple[int, int]]:
    """One-to-one pairs ``(pred_index, true_index)`` with ``|dt| <= margin``.

    Each true onset, in time order, takes the earliest unmatched prediction
    whose window ``[p - margin, p + margin]`` contains it. With equal-width
    windows this yields a maximum-cardinality matching.
    """
    p_order = np.argsort(np.asarray(pred_onsets, dtype=float), kind="stable")
    t_order = np.argsort(np.asarray(true_onsets, dtype=float), kind="stable")
    preds = [float(pred_onsets[i]) for i in p_order]
    eps = 1e-9
    pairs = []
    j = 0
    for ti in t_order:
        t = float(true_onsets[ti])
        while j < len(preds) and preds[j] < t - margin - eps:
            j += 1
        if j < len(preds) and preds[j] <= t + margin + eps:
            pairs.append((int(p_order[j]), int(ti)))
            j += 1
    return pairs


def margin_match(pred_onsets: Sequence[float], true_onsets: Sequence[float],
                 margin: float = MARGIN_S) -> Tuple[int, int, int]:
    """Return (TP, FP, FN) for onset lists under a ``[-margin, margin]`` tolerance."""
    tp = len(margin_pairs(pred_onsets, true_onsets, margin))
    return tp, len(pred_onsets) - tp, len(true_onsets) - tp


def margin_scores(tp: int, fp: int, fn: int, n_steps: int) -> Scores:
    """Precision/recall/F1 from matched onsets.

    Accuracy treats every 0.5 s step not involved in a match, false alarm
    or miss as a true negative: ``(TP + TN) / n_steps``.
    """
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    tn = max(0, n_steps - tp - fp - fn)
    accuracy = _ratio(tp + tn, max(n_steps, tp + fp + fn))
    return Scores(accuracy, precision, recall, _f1(precision, recall))


# ---------------------------------------------------------------------------
# count deviation

class UndefinedDeviation(ValueError):
    """The participant has no true backchannels, so the relative deviation is undefined."""


def bc_deviation(y_true: int, y_pred: int) -> float:
    """Relative count error ``|y_true - y_pred| / y_true``."""
    if y_true <= 0:
        raise UndefinedDeviation("deviation is undefined when the true count is 0")
    return abs(y_true - y_pred) / y_true


# ---------------------------------------------------------------------------
# time series and engagement

def bc_rate_series(onsets: Sequence[float], duration: float, window: float = 60.0,
                   hop: float = 15.0) -> List[Tuple[float, int]]:
    """Backchannel count in ``(t - window, t]`` for ``t = window, window + hop, ...``."""
    x = np.sort(np.asarray(onsets, dtype=float))
    out = []
    k = 0
    while True:
        t = window + k * hop
        if t > duration + 1e-9:
            break
        lo = np.searchsorted(x, t - window, side="right")
        hi = np.searchsorted(x, t, side="right")
        out.append((t, int(hi - lo)))
        k += 1
    return out


def write_rate_series_csv(series: Sequence[Tuple[float, float]], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["t_s", "count_per_min"])
    for t, c in series:
        writer.writerow([format(float(t), ".9g"), format(float(c), ".9g")])


class Engagement(NamedTuple):
    utterance_count: int
    utterances_per_second: float
    mean_duration_s: float
    speech_to_silence: float


def engagement_metrics(speech_intervals: Sequence[Tuple[float, float]],
                       session_duration: float) -> Engagement:
    """Utterance count, rate, mean length and speech-to-silence ratio.

    The ratio is ``inf`` when speech fills the whole session.
    """
    lengths = [e - s for s, e in speech_intervals]
    if any(l < 0 for l in lengths):
        raise ValidationError("interval ends before it starts")
    n = len(lengths)
    if n == 0:
        return Engagement(0, 0.0, 0.0, 0.0)
    talk = float(sum(lengths))
    silence = session_duration - talk
    ratio = math.inf if silence <= 1e-12 else talk / silence
    rate = n / session_duration if session_duration > 0 else 0.0
    return Engagement(n, rate, talk / n, ratio)


# ---------------------------------------------------------------------------
# reports

@dataclass
class ParticipantCounts:
    participant: str
    y_true: int
    y_pred: int
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def deviation(self) -> Optional[float]:
        return bc_deviation(self.y_true, self.y_pred) if self.y_true > 0 else None


@dataclass
class MetricsReport:
    macro: Scores
    margin: Scores
    per_participant: List[ParticipantCounts] = field(default_factory=list)

    @property
    def bc_deviation(self) -> Optional[float]:
        devs = [p.deviation for p in self.per_participant if p.deviation is not None]
        return float(np.mean(devs)) if devs else None

    @property
    def excluded(self) -> List[str]:
        return [p.participant for p in self.per_participant if p.y_true <= 0]

    def to_dict(self) -> Dict:
        return {
            "macro": self.macro._asdict(),
            "margin": self.margin._asdict(),
            "bc_prediction_deviation": self.bc_deviation,
            "per_participant": [
                {"participant": p.participant, "y_true": p.y_true, "y_pred": p.y_pred,
                 "tp": p.tp, "fp": p.fp, "fn": p.fn, "deviation": p.deviation}
                for p in self.per_participant
            ],
            "excluded_from_deviation": self.excluded,
        }


def onsets_to_steps(onsets: Sequence[float], origin: float, n_steps: int,
                    step_s: float = 0.5) -> np.ndarray:
    """Binary per-step labels: step k is 1 when an onset lies in ``[origin + k*step, +step)``."""
    out = np.zeros(n_steps, dtype=int)
    for t in onsets:
        k = int(math.floor((t - origin) / step_s + 1e-9))
        if 0 <= k < n_steps:
            out[k] = 1
    return out


@dataclass
class EpisodeResult:
    """Predicted and true onsets for one participant over a span of steps."""

    participant: str
    pred_onsets: List[float]
    true_onsets: List[float]
    origin: float
    n_steps: int


def build_report(episodes: Sequence[EpisodeResult], margin: float = MARGIN_S) -> MetricsReport:
    """Pool step-level and onset-level scores over episodes; deviation per participant."""
    preds, labels = [], []
    tp = fp = fn = n_steps = 0
    counts: Dict[str, ParticipantCounts] = {}
    for ep in episodes:
        preds.append(onsets_to_steps(ep.pred_onsets, ep.origin, ep.n_steps))
        labels.append(onsets_to_steps(ep.true_onsets, ep.origin, ep.n_steps))
        a, b, c = margin_match(ep.pred_onsets, ep.true_onsets, margin)
        tp, fp, fn, n_steps = tp + a, fp + b, fn + c, n_steps + ep.n_steps
        pc = counts.setdefault(ep.participant, ParticipantCounts(ep.participant, 0, 0))
        pc.y_true += len(ep.true_onsets)
        pc.y_pred += len(ep.pred_onsets)
        pc.tp, pc.fp, pc.fn = pc.tp + a, pc.fp + b, pc.fn + c
    if preds:
        macro = macro_metrics(np.concatenate(preds), np.concatenate(labels), n_classes=2)
    else:
        macro = Scores(0.0, 0.0, 0.0, 0.0)
    return MetricsReport(macro, margin_scores(tp, fp, fn, n_steps),
                         [counts[k] for k in sorted(counts)])
