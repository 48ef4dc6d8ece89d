"""Annotated dyadic conversations to labelled listener sequences.

Annotation CSV::

    participant,label,start_s,end_s
    p1,speech,0.000,2.500
    p2,nod,1.200,1.900

Labels are ``speech``, ``vocal_bc`` and ``nod``. A listener segment is a
stretch where exactly one participant holds a turn; states come from the
speaker's audio and labels from the listener's backchannel onsets.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .dsp import STEP_S, StateStream
from .errors import ConfigurationError, CoverageError, ValidationError

LABELS = ("speech", "vocal_bc", "nod")
BC_LABELS = ("vocal_bc", "nod")
TYPE_CLASSES = ("vocal", "nonvocal", "both")
HEADER = ["participant", "label", "start_s", "end_s"]

BC_CEILING_S = 1.0
MIN_TURN_S = 1.0
MAX_PAUSE_S = 2.0


class Interval(NamedTuple):
    label: str
    start_s: float
    end_s: float


@dataclass
class AnnotationTrack:
    participant_id: str
    intervals: List[Interval]

    def of(self, *labels: str) -> List[Interval]:
        return [iv for iv in self.intervals if iv.label in labels]


@dataclass(frozen=True)
class ListenerSegment:
    listener_id: str
    speaker_id: str
    start_s: float
    end_s: float

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass
class LabeledSequence:
    """Speaker states over one listener segment with per-step labels.

    ``timing`` is 1 where a listener backchannel starts inside the step;
    ``types`` holds an index into TYPE_CLASSES at those steps and -1 elsewhere.
    ``onsets`` keeps the exact listener onset times covered by the steps.
    """

    segment: ListenerSegment
    states: StateStream
    timing: np.ndarray
    types: np.ndarray
    onsets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.timing)

    @property
    def values(self) -> np.ndarray:
        return self.states.values

    def with_values(self, values: np.ndarray) -> "LabeledSequence":
        states = StateStream(self.states.t, values, self.states.gaps)
        return LabeledSequence(self.segment, states, self.timing.copy(), self.types.copy(),
                               self.onsets.copy())

    @property
    def origin(self) -> float:
        return float(self.states.start[0])


@dataclass
class Fold:
    train_ids: List[str]
    val_ids: List[str]
    test_ids: List[str]


@dataclass
class FoldSplit:
    k: int
    assignments: List[Fold]


# ---------------------------------------------------------------------------
# annotation I/O

def parse_annotations(text: str) -> List[AnnotationTrack]:
    """Parse annotation CSV text (header optional) into one track per participant, sorted by id."""
    by_id: Dict[str, List[Interval]] = {}
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        cells = [c.strip() for c in row]
        if lineno == 1 and cells == HEADER:
            continue
        if len(cells) != 4:
            raise ValidationError(f"line {lineno}: expected 4 fields, got {len(cells)}")
        pid, label, start, end = cells
        if not pid:
            raise ValidationError(f"line {lineno}: empty participant id")
        if label not in LABELS:
            raise ValidationError(f"line {lineno}: unknown label {label!r}")
        try:
            s, e = float(start), float(end)
        except ValueError:
            raise ValidationError(f"line {lineno}: times must be decimal seconds") from None
        if not (math.isfinite(s) and math.isfinite(e)):
            raise ValidationError(f"line {lineno}: non-finite time")
        if s < 0:
            raise ValidationError(f"line {lineno}: negative start time {s}")
        if e <= s:
            raise ValidationError(f"line {lineno}: end {e} is not after start {s}")
        by_id.setdefault(pid, []).append(Interval(label, s, e))

    tracks = []
    for pid in sorted(by_id):
        intervals = by_id[pid]
        intervals.sort(key=lambda iv: (iv.start_s, iv.end_s, iv.label))
        for label in LABELS:
            same = [iv for iv in intervals if iv.label == label]
            for a, b in zip(same, same[1:]):
                if b.start_s < a.end_s:
                    raise ValidationError(
                        f"participant {pid}: overlapping {label} intervals "
                        f"[{a.start_s}, {a.end_s}) and [{b.start_s}, {b.end_s})"
                    )
        tracks.append(AnnotationTrack(pid, intervals))
    return tracks


def _fmt_seconds(x: float) -> str:
    for digits in range(3, 18):
        s = f"{x:.{digits}f}"
        if float(s) == x:
            return s
    return repr(x)


def serialize_annotations(tracks: Iterable[AnnotationTrack]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HEADER)
    for track in tracks:
        for iv in track.intervals:
            writer.writerow([track.participant_id, iv.label,
                             _fmt_seconds(iv.start_s), _fmt_seconds(iv.end_s)])
    return out.getvalue()


# ---------------------------------------------------------------------------
# interval helpers

def _merge(intervals: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    out: List[Tuple[float, float]] = []
    for s, e in sorted(intervals):
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def _subtract(base: List[Tuple[float, float]], cut: List[Tuple[float, float]]):
    out = []
    for s, e in base:
        pieces = [(s, e)]
        for cs, ce in cut:
            nxt = []
            for ps, pe in pieces:
                if ce <= ps or cs >= pe:
                    nxt.append((ps, pe))
                    continue
                if cs > ps:
                    nxt.append((ps, cs))
                if ce < pe:
                    nxt.append((ce, pe))
            pieces = nxt
        out.extend(pieces)
    return out


def _overlaps(intervals, s, e) -> bool:
    return any(a < e and b > s for a, b in intervals)


def turns(track: AnnotationTrack, bc_ceiling_s: float = BC_CEILING_S) -> List[Tuple[float, float]]:
    """Speech runs longer than the backchannel ceiling."""
    speech = _merge((iv.start_s, iv.end_s) for iv in track.of("speech"))
    return [(s, e) for s, e in speech if e - s > bc_ceiling_s]


def _bridge_pauses(own, other, max_pause_s):
    out = []
    for s, e in own:
        if out and s - out[-1][1] <= max_pause_s and not _overlaps(other, out[-1][1], s):
            out[-1] = (out[-1][0], e)
        else:
            out.append((s, e))
    return out


def segment_roles(track_a: AnnotationTrack, track_b: AnnotationTrack,
                  min_turn_s: float = MIN_TURN_S, bc_ceiling_s: float = BC_CEILING_S,
                  max_pause_s: float = MAX_PAUSE_S) -> List[ListenerSegment]:
    """Split a conversation into stretches with one speaker and one listener.

    Speech no longer than ``bc_ceiling_s`` never counts as a turn, so short
    listener vocalisations do not break a segment. A speaker's pauses up to
    ``max_pause_s`` are bridged when the other participant does not take a
    turn in them. Instants where both hold a turn are dropped, as are pieces
    shorter than ``min_turn_s``.
    """
    ta = turns(track_a, bc_ceiling_s)
    tb = turns(track_b, bc_ceiling_s)
    ta, tb = _bridge_pauses(ta, tb, max_pause_s), _bridge_pauses(tb, ta, max_pause_s)
    segs: List[ListenerSegment] = []
    for s, e in _subtract(ta, tb):
        segs.append(ListenerSegment(track_b.participant_id, track_a.participant_id, s, e))
    for s, e in _subtract(tb, ta):
        segs.append(ListenerSegment(track_a.participant_id, track_b.participant_id, s, e))
    segs = [g for g in segs if g.end_s - g.start_s >= min_turn_s - 1e-12]
    segs.sort(key=lambda g: (g.start_s, g.end_s))
    return segs


# ---------------------------------------------------------------------------
# dataset assembly

def _step_range(stream: StateStream, seg: ListenerSegment) -> Tuple[int, int]:
    eps = 1e-9
    starts = stream.start
    ok = np.flatnonzero((starts >= seg.start_s - eps) & (stream.t <= seg.end_s + eps))
    expected = int(math.floor(seg.end_s / STEP_S + eps)) - int(math.ceil(seg.start_s / STEP_S - eps))
    if len(ok) < max(expected, 1) or (len(ok) and ok[-1] - ok[0] + 1 != len(ok)):
        raise CoverageError(
            f"features for speaker {seg.speaker_id} do not cover segment "
            f"[{seg.start_s:.3f}, {seg.end_s:.3f}) (listener {seg.listener_id})"
        )
    return int(ok[0]), int(ok[-1]) + 1


def build_dataset(features: Dict[str, StateStream], tracks: Sequence[AnnotationTrack],
                  segments: Sequence[ListenerSegment]) -> List[LabeledSequence]:
    """Label the speaker's states with the listener's backchannel onsets, per segment."""
    by_id = {t.participant_id: t for t in tracks}
    out = []
    for seg in segments:
        if seg.speaker_id not in features:
            raise CoverageError(f"no features for speaker {seg.speaker_id} (segment "
                                f"[{seg.start_s:.3f}, {seg.end_s:.3f}))")
        stream = features[seg.speaker_id]
        lo, hi = _step_range(stream, seg)
        states = stream.window(lo, hi)
        n = hi - lo
        origin = float(states.start[0])
        timing = np.zeros(n, dtype=np.int8)
        types = np.full(n, -1, dtype=np.int8)
        kinds: Dict[int, set] = {}
        onsets = []
        listener = by_id.get(seg.listener_id)
        if listener is not None:
            for iv in listener.of(*BC_LABELS):
                k = int(math.floor((iv.start_s - origin) / STEP_S + 1e-9))
                if 0 <= k < n:
                    kinds.setdefault(k, set()).add(iv.label)
                    onsets.append(iv.start_s)
        onsets = one_per_step(onsets, origin)
        for k, labels in kinds.items():
            timing[k] = 1
            if labels == {"vocal_bc", "nod"}:
                types[k] = 2
            elif labels == {"nod"}:
                types[k] = 1
            else:
                types[k] = 0
        out.append(LabeledSequence(seg, states, timing, types, np.array(sorted(onsets))))
    return out


def kfold_split(participant_ids: Sequence[str], k: int, seed: int) -> FoldSplit:
    """Participant-disjoint folds: test group i, validation group i+1, train the rest."""
    ids = sorted(set(participant_ids))
    if k < 3:
        raise ConfigurationError(f"k must be at least 3, got {k}")
    if k > len(ids):
        raise ConfigurationError(f"k={k} exceeds the {len(ids)} available participants")
    perm = np.random.default_rng(seed).permutation(len(ids))
    groups = [sorted(ids[j] for j in g) for g in np.array_split(perm, k)]
    folds = []
    for i in range(k):
        test, val = groups[i], groups[(i + 1) % k]
        train = sorted(p for j, g in enumerate(groups) if j not in (i, (i + 1) % k) for p in g)
        folds.append(Fold(train, val, test))
    return FoldSplit(k, folds)


def shuffle_labels(seqs: Sequence[LabeledSequence], rng: np.random.Generator) -> List[LabeledSequence]:
    """Permute step labels within each sequence (a no-signal control).

    Onsets move with their steps, keeping their offset inside the step.
    """
    out = []
    for seq in seqs:
        perm = rng.permutation(len(seq))
        timing, types = seq.timing[perm], seq.types[perm]
        origin = seq.origin
        offsets = {}
        for t in seq.onsets:
            offsets.setdefault(int(math.floor((t - origin) / STEP_S + 1e-9)), []).append(t)
        onsets = []
        for new_k, old_k in enumerate(perm):
            for t in offsets.get(int(old_k), []):
                onsets.append(t + (new_k - old_k) * STEP_S)
        new = LabeledSequence(seq.segment, seq.states, timing, types, np.array(sorted(onsets)))
        out.append(new)
    return out


def one_per_step(onsets: Iterable[float], origin: float = 0.0) -> List[float]:
    """Keep the earliest onset per 0.5 s step; a vocal and a nod together are one event."""
    first: Dict[int, float] = {}
    for t in onsets:
        k = int(math.floor((t - origin) / STEP_S + 1e-9))
        first[k] = min(t, first.get(k, math.inf))
    return sorted(first.values())


def bc_onsets(track: AnnotationTrack, start_s: float = 0.0,
              end_s: float = math.inf) -> List[float]:
    """Backchannel events (vocal, nod or both) starting within ``[start_s, end_s)``."""
    return one_per_step(iv.start_s for iv in track.of(*BC_LABELS) if start_s <= iv.start_s < end_s)


# ---------------------------------------------------------------------------
# manifest

@dataclass
class Conversation:
    audio_a: str
    audio_b: str
    annotations: str
    id_a: Optional[str] = None
    id_b: Optional[str] = None


def load_manifest(path) -> List[Conversation]:
    """Read a dataset manifest; relative paths resolve against the manifest's folder.

    Format: ``{"conversations": [{"audio_a", "audio_b", "annotations",
    "id_a"?, "id_b"?}, ...]}``. A bare list of entries is accepted too.
    Without ids, the sorted participant ids of the annotation file map to a, b.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest {path}: {exc}") from exc
    entries = doc.get("conversations") if isinstance(doc, dict) else doc
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"manifest {path}: no conversation entries")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, entry in enumerate(entries):
        try:
            paths = [entry[key] for key in ("audio_a", "audio_b", "annotations")]
        except (KeyError, TypeError):
            raise ValidationError(f"manifest entry {i}: needs audio_a, audio_b, annotations") from None
        paths = [p if os.path.isabs(p) else os.path.join(base, p) for p in paths]
        for p in paths:
            if not os.path.exists(p):
                raise ValidationError(f"manifest entry {i}: missing file {p}")
        out.append(Conversation(*paths, entry.get("id_a"), entry.get("id_b")))
    return out


def conversation_tracks(conv: Conversation) -> Tuple[AnnotationTrack, AnnotationTrack]:
    with open(conv.annotations, encoding="utf-8") as fh:
        tracks = {t.participant_id: t for t in parse_annotations(fh.read())}
    ids = sorted(tracks)
    id_a = conv.id_a or (ids[0] if ids else None)
    id_b = conv.id_b or (ids[1] if len(ids) > 1 else None)
    if id_a is None or id_b is None or id_a == id_b:
        raise ValidationError(f"{conv.annotations}: need annotations for two participants")
    return (tracks.get(id_a, AnnotationTrack(id_a, [])),
            tracks.get(id_b, AnnotationTrack(id_b, [])))
