"""Audio frontend: framing, MFCC, YIN pitch, 2 Hz state vectors, energy VAD.

Frame-level features are 17 columns per 30 ms frame::

    c1..c13, pitch, d_pitch, yin_energy, d_energy

and a state vector is the population mean and standard deviation of those
columns over a 0.5 s window, ordered ``[means(17), stds(17)]``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Optional, TextIO, Tuple

import numpy as np
from scipy.fft import dct, irfft, rfft
from scipy.io import wavfile
from scipy.signal import resample_poly

SAMPLE_RATE = 16000
WINDOW_S = 0.4
HOP_S = 0.03
STEP_S = 0.5
REGION_S = 0.01

N_MFCC = 13
N_MEL = 26
LOG_FLOOR = 1e-10
STD_FLOOR = 1e-6

F_MIN = 60.0
F_MAX = 400.0
YIN_THRESHOLD = 0.15

N_FRAME_FEATURES = 17
N_STATE = 2 * N_FRAME_FEATURES

FRAME_COLUMNS = (
    [f"c{i}" for i in range(1, N_MFCC + 1)]
    + ["pitch", "d_pitch", "yin_energy", "d_energy"]
)


class InsufficientAudioError(ValueError):
    """Raised when a clip is shorter than one analysis window."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio must be mono (1-D samples)")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def resampled(self, rate: int = SAMPLE_RATE) -> "AudioClip":
        if rate == self.sample_rate:
            return self
        g = math.gcd(rate, self.sample_rate)
        out = resample_poly(self.samples, rate // g, self.sample_rate // g)
        return AudioClip(np.clip(out, -1.0, 1.0), rate)


def read_wav(path) -> AudioClip:
    """Read a mono PCM or float WAV file and resample it to 16 kHz.

    Multi-channel files are averaged down to mono. Raises ``ValueError`` for
    unreadable files and rates below 8 kHz.
    """
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise ValueError(f"cannot read WAV file {path}: {exc}") from exc
    if rate < 8000:
        raise ValueError(f"sample rate {rate} Hz is below the 8 kHz minimum")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioClip(np.clip(x, -1.0, 1.0), int(rate)).resampled(SAMPLE_RATE)


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM."""
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(path, clip.sample_rate, pcm)


# ---------------------------------------------------------------------------
# framing

def _frame_geometry(clip: AudioClip, window_s: float, hop_s: float) -> Tuple[int, int, int]:
    win = int(round(window_s * clip.sample_rate))
    hop = int(round(hop_s * clip.sample_rate))
    n = len(clip.samples)
    if n < win:
        raise InsufficientAudioError(
            f"clip of {clip.duration * 1000:.0f} ms is shorter than the "
            f"{window_s * 1000:.0f} ms analysis window"
        )
    return win, hop, (n - win) // hop + 1


def frame_signal(clip: AudioClip, window_s: float = WINDOW_S, hop_s: float = HOP_S,
                 hamming: bool = True) -> np.ndarray:
    """Slice a clip into ``(n_frames, window)`` frames, Hamming-weighted by default."""
    win, hop, count = _frame_geometry(clip, window_s, hop_s)
    idx = np.arange(win)[None, :] + hop * np.arange(count)[:, None]
    frames = clip.samples[idx]
    if hamming:
        frames = frames * np.hamming(win)
    return frames


def frame_times(clip: AudioClip, window_s: float = WINDOW_S, hop_s: float = HOP_S) -> np.ndarray:
    """Frame centre times in seconds."""
    win, hop, count = _frame_geometry(clip, window_s, hop_s)
    return (hop * np.arange(count) + win / 2.0) / clip.sample_rate


# ---------------------------------------------------------------------------
# MFCC

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(n_fft: int, sample_rate: int = SAMPLE_RATE, n_filters: int = N_MEL,
                   f_lo: float = 0.0, f_hi: float = 8000.0) -> np.ndarray:
    """Triangular mel filters as an ``(n_filters, n_fft // 2 + 1)`` matrix."""
    f_hi = min(f_hi, sample_rate / 2.0)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(f_lo), _hz_to_mel(f_hi), n_filters + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    bank.setflags(write=False)
    return bank


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def mfcc(frames: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """MFCC c1..c13 for a batch of windowed frames, shape ``(n, 13)``."""
    frames = np.atleast_2d(frames)
    n_fft = _next_pow2(frames.shape[1])
    power = np.abs(rfft(frames, n=n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(n_fft, sample_rate).T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = dct(logmel, type=2, norm="ortho", axis=1)
    return ceps[:, 1:N_MFCC + 1]


def mfcc13(frame: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """MFCC c1..c13 of one windowed frame (c0 is dropped)."""
    return mfcc(np.asarray(frame, dtype=np.float64)[None, :], sample_rate)[0]


# ---------------------------------------------------------------------------
# YIN

def _cmnd(frames: np.ndarray, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalised difference, shape ``(n, tau_max + 1)``."""
    n, size = frames.shape
    w = size - tau_max
    if w <= 0:
        raise ValueError("frame too short for the requested minimum frequency")
    sq = np.concatenate([np.zeros((n, 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    e0 = sq[:, w][:, None]
    e_tau = sq[:, taus + w] - sq[:, taus]
    n_fft = _next_pow2(size + w)
    xspec = np.conj(rfft(frames[:, :w], n=n_fft, axis=1)) * rfft(frames, n=n_fft, axis=1)
    cross = irfft(xspec, n=n_fft, axis=1)[:, :tau_max + 1]
    diff = np.maximum(e0 + e_tau - 2.0 * cross, 0.0)
    diff[:, 0] = 0.0
    running = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff[:, 1:] * taus[1:] / running
    out[:, 1:] = np.where(running > 0, ratio, 1.0)
    return out


def yin_batch(frames: np.ndarray, sample_rate: int = SAMPLE_RATE, f_min: float = F_MIN,
              f_max: float = F_MAX, threshold: float = YIN_THRESHOLD) -> Tuple[np.ndarray, np.ndarray]:
    """YIN pitch and yin-energy for a batch of (unwindowed) frames.

    Unvoiced frames, where no lag in range dips below ``threshold``, get
    pitch 0 and yin-energy 0.
    """
    if not 0 < f_min < f_max < sample_rate / 2:
        raise ValueError("require 0 < f_min < f_max < sample_rate / 2")
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n = frames.shape[0]
    tau_min = max(2, int(math.floor(sample_rate / f_max)))
    tau_max = int(math.ceil(sample_rate / f_min))
    pitch = np.zeros(n)
    energy = np.zeros(n)
    if n == 0:
        return pitch, energy

    d = _cmnd(frames, tau_max)
    silent = np.sum(frames ** 2, axis=1) < 1e-10
    below = d[:, tau_min:tau_max + 1] < threshold
    voiced = below.any(axis=1) & ~silent
    first = np.argmax(below, axis=1) + tau_min
    for i in np.flatnonzero(voiced):
        row = d[i]
        tau = first[i]
        while tau < tau_max and row[tau + 1] < row[tau]:
            tau += 1
        shift = 0.0
        if 0 < tau < tau_max:
            a, b, c = row[tau - 1], row[tau], row[tau + 1]
            denom = a - 2.0 * b + c
            if denom > 0:
                shift = 0.5 * (a - c) / denom
        pitch[i] = sample_rate / (tau + shift)
        energy[i] = min(1.0, max(0.0, 1.0 - row[tau]))
    return pitch, energy


def yin(frame: np.ndarray, f_min: float = F_MIN, f_max: float = F_MAX,
        sample_rate: int = SAMPLE_RATE, threshold: float = YIN_THRESHOLD) -> Tuple[float, float]:
    """Pitch in Hz (0 when unvoiced) and yin-energy of a single frame."""
    p, e = yin_batch(np.asarray(frame)[None, :], sample_rate, f_min, f_max, threshold)
    return float(p[0]), float(e[0])


# ---------------------------------------------------------------------------
# frame features and 2 Hz aggregation

@dataclass
class FrameFeatures:
    """Per-frame features as columns; ``values`` is ``(n, 17)`` in FRAME_COLUMNS order."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.t), N_FRAME_FEATURES)

    def __len__(self):
        return len(self.t)

    @property
    def mfcc(self):
        return self.values[:, :N_MFCC]

    @property
    def pitch(self):
        return self.values[:, 13]

    @property
    def yin_energy(self):
        return self.values[:, 15]

    @classmethod
    def from_columns(cls, t, mfccs, pitch, yin_energy) -> "FrameFeatures":
        """Build frame features and attach first-difference derivatives."""
        pitch = np.asarray(pitch, dtype=np.float64)
        yin_energy = np.asarray(yin_energy, dtype=np.float64)
        values = np.column_stack([
            np.asarray(mfccs, dtype=np.float64).reshape(len(pitch), N_MFCC),
            pitch, first_difference(pitch),
            yin_energy, first_difference(yin_energy),
        ])
        return cls(t, values)


def first_difference(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    out[1:] = np.diff(x)
    return out


def frame_features(clip: AudioClip, chunk: int = 512, f_min: float = F_MIN,
                   f_max: float = F_MAX, threshold: float = YIN_THRESHOLD) -> FrameFeatures:
    """MFCC and YIN prosody for every 400 ms / 30 ms frame of a clip."""
    clip = clip.resampled(SAMPLE_RATE)
    win, hop, count = _frame_geometry(clip, WINDOW_S, HOP_S)
    hamming = np.hamming(win)
    mf = np.empty((count, N_MFCC))
    pitch = np.empty(count)
    energy = np.empty(count)
    for lo in range(0, count, chunk):
        hi = min(count, lo + chunk)
        idx = np.arange(win)[None, :] + hop * np.arange(lo, hi)[:, None]
        raw = clip.samples[idx]
        mf[lo:hi] = mfcc(raw * hamming, clip.sample_rate)
        pitch[lo:hi], energy[lo:hi] = yin_batch(raw, clip.sample_rate, f_min, f_max, threshold)
    return FrameFeatures.from_columns(frame_times(clip), mf, pitch, energy)


@dataclass
class StateStream:
    """A 2 Hz sequence of 34-dim state vectors; ``t`` is each window's end."""

    t: np.ndarray
    values: np.ndarray
    gaps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.t), N_STATE)
        if self.gaps is None:
            self.gaps = np.zeros(len(self.t), dtype=bool)

    def __len__(self):
        return len(self.t)

    @property
    def start(self) -> np.ndarray:
        return self.t - STEP_S

    def window(self, lo: int, hi: int) -> "StateStream":
        return StateStream(self.t[lo:hi], self.values[lo:hi], self.gaps[lo:hi])


def aggregate(frames: FrameFeatures, duration: Optional[float] = None,
              step_s: float = STEP_S) -> StateStream:
    """Pool frame features into ``[t, t + step)`` windows (mean and population std).

    Windows are anchored at 0 and only fully covered ones are emitted. When
    ``duration`` is omitted it is inferred as the last frame time plus one
    frame spacing. Empty windows yield a zero vector with ``gaps`` set.
    """
    n = len(frames)
    if duration is None:
        if n == 0:
            duration = 0.0
        else:
            spacing = frames.t[1] - frames.t[0] if n > 1 else 0.0
            duration = frames.t[-1] + spacing
    m = int(math.floor(duration / step_s + 1e-9))
    bucket = np.floor(frames.t / step_s + 1e-9).astype(int)
    bounds = np.searchsorted(bucket, np.arange(m + 1), side="left")
    out = np.zeros((m, N_STATE))
    gaps = np.zeros(m, dtype=bool)
    for k in range(m):
        block = frames.values[bounds[k]:bounds[k + 1]]
        if len(block) == 0:
            gaps[k] = True
            continue
        out[k, :N_FRAME_FEATURES] = block.mean(axis=0)
        out[k, N_FRAME_FEATURES:] = block.std(axis=0)
    return StateStream(step_s * (np.arange(m) + 1), out, gaps)


def extract_states(clip: AudioClip) -> StateStream:
    """Audio to 2 Hz state vectors (unnormalised)."""
    clip = clip.resampled(SAMPLE_RATE)
    return aggregate(frame_features(clip), duration=clip.duration)


# ---------------------------------------------------------------------------
# normalisation

@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "source": self.source}

    @classmethod
    def from_dict(cls, d) -> "NormStats":
        return cls(np.array(d["mean"]), np.array(d["std"]), d.get("source", ""))


def fit_norm(sequences: Iterable[np.ndarray], source: str = "") -> NormStats:
    """Per-dimension z-score statistics over the rows of all training sequences."""
    rows = [np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in sequences]
    rows = [r for r in rows if r.size]
    if not rows:
        raise ValueError("cannot fit normalisation on empty data")
    data = np.concatenate(rows, axis=0)
    return NormStats(data.mean(axis=0), data.std(axis=0), source)


def apply_norm(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# energy VAD and the 10 ms prosody stream

def vad_mask(clip: AudioClip, frame_ms: float = 10.0, threshold_db: float = -35.0,
             hangover_ms: float = 300.0) -> np.ndarray:
    """Voiced flag per non-overlapping frame after hangover bridging."""
    size = int(round(frame_ms * clip.sample_rate / 1000.0))
    count = len(clip.samples) // size
    if count == 0:
        return np.zeros(0, dtype=bool)
    rms = np.sqrt(np.mean(clip.samples[:count * size].reshape(count, size) ** 2, axis=1))
    ref = np.percentile(rms, 95)
    if ref < 1e-6:
        return np.zeros(count, dtype=bool)
    with np.errstate(divide="ignore"):
        level = 20.0 * np.log10(rms / ref)
    voiced = (level > threshold_db) & (rms >= 1e-6)
    return _bridge(voiced, int(math.ceil(hangover_ms / frame_ms - 1e-9)))


def _bridge(voiced: np.ndarray, max_gap: int) -> np.ndarray:
    """Fill unvoiced gaps shorter than ``max_gap`` frames between voiced runs."""
    out = voiced.copy()
    on = np.flatnonzero(voiced)
    if len(on) < 2:
        return out
    jumps = np.flatnonzero(np.diff(on) > 1)
    for j in jumps:
        a, b = on[j], on[j + 1]
        if b - a - 1 < max_gap:
            out[a + 1:b] = True
    return out


def mask_to_intervals(mask: np.ndarray, frame_s: float) -> List[Tuple[float, float]]:
    padded = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(a * frame_s, b * frame_s) for a, b in zip(edges[::2], edges[1::2])]


def vad(clip: AudioClip, frame_ms: float = 10.0, threshold_db: float = -35.0,
        hangover_ms: float = 300.0) -> List[Tuple[float, float]]:
    """Speech intervals ``[start, end)`` in seconds from an energy VAD.

    A frame is voiced when its RMS is within ``threshold_db`` of the clip's
    95th-percentile frame RMS; gaps shorter than ``hangover_ms`` are bridged.
    """
    mask = vad_mask(clip, frame_ms, threshold_db, hangover_ms)
    return mask_to_intervals(mask, frame_ms / 1000.0)


@dataclass
class ProsodyStream:
    """Pitch and VAD flags per 10 ms region; region k covers ``[t_k, t_k + 0.01)``."""

    t: np.ndarray
    pitch: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.pitch = np.asarray(self.pitch, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if not len(self.t) == len(self.pitch) == len(self.voiced):
            raise ValueError("prosody stream columns differ in length")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] + REGION_S) if len(self.t) else 0.0


def pitch_track(clip: AudioClip, hop_s: float = REGION_S, window_s: float = 0.05,
                f_min: float = F_MIN, f_max: float = F_MAX,
                threshold: float = YIN_THRESHOLD) -> np.ndarray:
    """YIN pitch per ``hop_s`` region, frames centred on each region."""
    clip = clip.resampled(SAMPLE_RATE)
    hop = int(round(hop_s * clip.sample_rate))
    win = int(round(window_s * clip.sample_rate))
    count = len(clip.samples) // hop
    pad = win // 2
    x = np.concatenate([np.zeros(pad), clip.samples, np.zeros(win)])
    out = np.zeros(count)
    for lo in range(0, count, 2048):
        hi = min(count, lo + 2048)
        centres = hop * np.arange(lo, hi) + hop // 2
        idx = centres[:, None] + np.arange(win)[None, :]
        out[lo:hi], _ = yin_batch(x[idx], clip.sample_rate, f_min, f_max, threshold)
    return out


def prosody_stream(clip: AudioClip, threshold_db: float = -35.0,
                   hangover_ms: float = 300.0) -> ProsodyStream:
    clip = clip.resampled(SAMPLE_RATE)
    pitch = pitch_track(clip)
    voiced = vad_mask(clip, 10.0, threshold_db, hangover_ms)
    n = min(len(pitch), len(voiced))
    return ProsodyStream(np.round(np.arange(n) * REGION_S, 2), pitch[:n], voiced[:n])


# ---------------------------------------------------------------------------
# CSV formats

def _g9(x: float) -> str:
    return format(float(x), ".9g")


def write_features_csv(stream: StateStream, out: TextIO) -> None:
    """``t,f1..f34`` with nine significant digits."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["t"] + [f"f{i}" for i in range(1, N_STATE + 1)])
    for t, row in zip(stream.t, stream.values):
        writer.writerow([_g9(t)] + [_g9(v) for v in row])


def read_features_csv(src: TextIO) -> StateStream:
    reader = csv.reader(src)
    header = next(reader, None)
    expected = ["t"] + [f"f{i}" for i in range(1, N_STATE + 1)]
    if header != expected:
        raise ValueError("features CSV header must be t,f1..f34")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != N_STATE + 1:
            raise ValueError(f"line {lineno}: expected {N_STATE + 1} fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    arr = np.array(rows, dtype=np.float64).reshape(-1, N_STATE + 1)
    return StateStream(arr[:, 0], arr[:, 1:])


def write_prosody_csv(stream: ProsodyStream, out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["t", "pitch_hz", "voiced"])
    for t, p, v in zip(stream.t, stream.pitch, stream.voiced):
        writer.writerow([f"{t:.2f}", _g9(p), int(v)])


def read_prosody_csv(src: TextIO) -> ProsodyStream:
    reader = csv.reader(src)
    header = next(reader, None)
    if header != ["t", "pitch_hz", "voiced"]:
        raise ValueError("prosody CSV header must be t,pitch_hz,voiced")
    t, p, v = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            t.append(float(row[0]))
            p.append(float(row[1]))
            v.append(int(row[2]) != 0)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return ProsodyStream(t, p, v)


def as_written(stream):
    """Round-trip a stream through its CSV form (matches what a reader of the file sees)."""
    buf = io.StringIO()
    if isinstance(stream, StateStream):
        write_features_csv(stream, buf)
        buf.seek(0)
        return read_features_csv(buf)
    write_prosody_csv(stream, buf)
    buf.seek(0)
    return read_prosody_csv(buf)
