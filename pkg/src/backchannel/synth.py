"""Synthetic dyadic conversations with planted backchannel cues.

Each speaker's voice is a harmonic complex with a slowly wandering pitch.
Just before every listener backchannel, a short burst of band-limited noise
is mixed into the speaker's audio; the band depends on the backchannel type
(vocal / nod / both). The cue is visible in the MFCCs but leaves the pitch
track untouched, so a pitch-only policy cannot find it.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.signal import butter, sosfilt

from .corpus import AnnotationTrack, Interval, serialize_annotations
from .dsp import SAMPLE_RATE, STEP_S, AudioClip, write_wav

CUE_BANDS = {"vocal": (2500.0, 3300.0), "nonvocal": (4300.0, 5100.0), "both": (6100.0, 6900.0)}
CUE_OFFSET_S = (0.1, 0.45)


@dataclass
class SynthConversation:
    audio_a: AudioClip
    audio_b: AudioClip
    tracks: Tuple[AnnotationTrack, AnnotationTrack]
    cues: List[Tuple[float, str, str]]


def _voice(n: int, rng: np.random.Generator, sr: int, base_hz: float) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = base_hz * (1.0 + 0.12 * np.sin(2 * np.pi * rng.uniform(0.1, 0.3) * t + rng.uniform(0, 6.3))
                    + 0.06 * np.sin(2 * np.pi * rng.uniform(0.5, 1.5) * t + rng.uniform(0, 6.3)))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    x = np.zeros(n)
    for k in range(1, 16):
        x += np.sin(k * phase) / k
    syllables = 0.65 + 0.35 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 6.3))
    return 0.12 * x * syllables


def _ramp_gate(n: int, spans, sr: int, ramp_s: float = 0.01) -> np.ndarray:
    gate = np.zeros(n)
    r = max(1, int(ramp_s * sr))
    for s, e in spans:
        a, b = int(round(s * sr)), int(round(e * sr))
        a, b = max(0, a), min(n, b)
        if b <= a:
            continue
        seg = np.ones(b - a)
        k = min(r, (b - a) // 2)
        if k:
            ramp = np.linspace(0.0, 1.0, k, endpoint=False)
            seg[:k] = ramp
            seg[-k:] = ramp[::-1]
        gate[a:b] = np.maximum(gate[a:b], seg)
    return gate


def _band_noise(n: int, band, rng, sr: int) -> np.ndarray:
    sos = butter(4, band, btype="bandpass", fs=sr, output="sos")
    x = sosfilt(sos, rng.standard_normal(n))
    return x / (np.std(x) + 1e-12)


def make_conversation(ids: Tuple[str, str], duration_s: float, rng: np.random.Generator,
                      sr: int = SAMPLE_RATE, bc_gap_s: Tuple[float, float] = (2.5, 5.5),
                      turn_s: Tuple[float, float] = (14.0, 24.0), cue_level: float = 0.05
                      ) -> SynthConversation:
    n = int(round(duration_s * sr))
    speech = {ids[0]: [], ids[1]: []}
    bcs = {ids[0]: [], ids[1]: []}
    cues: List[Tuple[float, str, str]] = []

    t = 0.5
    who = int(rng.integers(2))
    while t < duration_s - 3.0:
        end = min(duration_s - 0.5, t + rng.uniform(*turn_s))
        speaker, listener = ids[who], ids[1 - who]
        speech[speaker].append((t, end))
        k = int(np.ceil((t + 2.5) / STEP_S))
        while True:
            k += int(round(rng.uniform(*bc_gap_s) / STEP_S))
            onset = k * STEP_S + 0.25
            if onset > end - 1.0:
                break
            kind = ("vocal", "nonvocal", "both")[int(rng.integers(3))]
            bcs[listener].append((onset, kind))
            cues.append((onset, speaker, kind))
        t = end + rng.uniform(0.3, 0.8)
        who = 1 - who

    audio = {}
    for j, pid in enumerate(ids):
        voice = _voice(n, rng, sr, base_hz=rng.uniform(95.0, 190.0))
        x = voice * _ramp_gate(n, speech[pid], sr, 0.02)
        for kind, band in CUE_BANDS.items():
            spans = [(on - STEP_S / 2 + CUE_OFFSET_S[0], on - STEP_S / 2 + CUE_OFFSET_S[1])
                     for on, spk, kd in cues if spk == pid and kd == kind]
            if spans:
                x += cue_level * _band_noise(n, band, rng, sr) * _ramp_gate(n, spans, sr)
        vocal_spans = [(on, on + 0.35) for on, kd in bcs[pid] if kd in ("vocal", "both")]
        if vocal_spans:
            x += 0.5 * voice * _ramp_gate(n, vocal_spans, sr)
        x += 1e-3 * rng.standard_normal(n)
        audio[pid] = AudioClip(np.clip(x, -1.0, 1.0), sr)

    tracks = []
    for pid in ids:
        ivs = [Interval("speech", round(s, 3), round(e, 3)) for s, e in speech[pid]]
        for on, kind in bcs[pid]:
            if kind in ("vocal", "both"):
                ivs.append(Interval("vocal_bc", round(on, 3), round(on + 0.35, 3)))
            if kind in ("nonvocal", "both"):
                ivs.append(Interval("nod", round(on, 3), round(on + 0.8, 3)))
        ivs.sort(key=lambda iv: (iv.start_s, iv.end_s, iv.label))
        tracks.append(AnnotationTrack(pid, ivs))
    return SynthConversation(audio[ids[0]], audio[ids[1]], (tracks[0], tracks[1]), cues)


def make_corpus(out_dir: str, n_conversations: int = 4, duration_s: float = 150.0,
                seed: int = 0) -> str:
    """Write WAVs, annotation CSVs and a manifest; return the manifest path."""
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for c in range(n_conversations):
        ids = (f"p{2 * c + 1}", f"p{2 * c + 2}")
        conv = make_conversation(ids, duration_s, rng)
        tracks = conv.tracks
        stem = f"conv{c + 1}"
        write_wav(os.path.join(out_dir, f"{stem}_a.wav"), conv.audio_a)
        write_wav(os.path.join(out_dir, f"{stem}_b.wav"), conv.audio_b)
        with open(os.path.join(out_dir, f"{stem}.csv"), "w", encoding="utf-8") as fh:
            fh.write(serialize_annotations(tracks))
        entries.append({"audio_a": f"{stem}_a.wav", "audio_b": f"{stem}_b.wav",
                        "annotations": f"{stem}.csv", "id_a": ids[0], "id_b": ids[1]})
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"conversations": entries}, fh, indent=2)
        fh.write("\n")
    return path
