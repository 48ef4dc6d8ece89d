"""Manifest to feature streams, listener segments and labelled sequences."""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import dsp
from .corpus import (AnnotationTrack, Conversation, LabeledSequence, ListenerSegment,
                     build_dataset, conversation_tracks, load_manifest, segment_roles)

log = logging.getLogger(__name__)

EXTRACTOR_VERSION = "1"


@dataclass
class ConversationData:
    conversation: Conversation
    tracks: Tuple[AnnotationTrack, AnnotationTrack]
    states: Dict[str, dsp.StateStream]
    prosody: Dict[str, dsp.ProsodyStream]
    duration: float
    segments: List[ListenerSegment]
    sequences: List[LabeledSequence]


def _digest(path: str) -> str:
    h = hashlib.sha256(EXTRACTOR_VERSION.encode())
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:24]


def extract_audio(path: str, cache_dir: Optional[str] = None
                  ) -> Tuple[dsp.StateStream, dsp.ProsodyStream, float]:
    """State and 10 ms prosody streams for a WAV, as they read back from CSV.

    With ``cache_dir`` the CSVs are stored under a hash of the audio bytes.
    """
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        key = _digest(path)
        f_path = os.path.join(cache_dir, f"{key}.features.csv")
        p_path = os.path.join(cache_dir, f"{key}.prosody.csv")
        if os.path.exists(f_path) and os.path.exists(p_path):
            with open(f_path, encoding="utf-8") as fh:
                states = dsp.read_features_csv(fh)
            with open(p_path, encoding="utf-8") as fh:
                prosody = dsp.read_prosody_csv(fh)
            return states, prosody, prosody.duration
    clip = dsp.read_wav(path)
    states = dsp.as_written(dsp.extract_states(clip))
    prosody = dsp.as_written(dsp.prosody_stream(clip))
    if cache_dir:
        for p, writer, obj in ((f_path, dsp.write_features_csv, states),
                               (p_path, dsp.write_prosody_csv, prosody)):
            tmp = p + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                writer(obj, fh)
            os.replace(tmp, p)
    return states, prosody, clip.duration


def load_conversation(conv: Conversation, cache_dir: Optional[str] = None,
                      min_turn_s: float = 1.0) -> ConversationData:
    tracks = conversation_tracks(conv)
    ids = (tracks[0].participant_id, tracks[1].participant_id)
    states, prosody, durations = {}, {}, []
    for pid, path in zip(ids, (conv.audio_a, conv.audio_b)):
        log.info("extracting features for %s from %s", pid, path)
        states[pid], prosody[pid], dur = extract_audio(path, cache_dir)
        durations.append(dur)
    segments = segment_roles(tracks[0], tracks[1], min_turn_s=min_turn_s)
    seqs = build_dataset(states, tracks, segments)
    return ConversationData(conv, tracks, states, prosody, min(durations), segments, seqs)


def load_corpus(manifest_path: str, cache_dir: Optional[str] = None,
                min_turn_s: float = 1.0) -> List[ConversationData]:
    return [load_conversation(c, cache_dir, min_turn_s) for c in load_manifest(manifest_path)]


def all_sequences(corpus: List[ConversationData]) -> List[LabeledSequence]:
    return [s for conv in corpus for s in conv.sequences]
