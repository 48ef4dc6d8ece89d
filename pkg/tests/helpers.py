"""Shared signal and stream builders for the tests."""
import numpy as np

from backchannel.corpus import AnnotationTrack, Interval
from backchannel.dsp import SAMPLE_RATE, AudioClip


def sine(freq, seconds, amp=0.5, sr=SAMPLE_RATE, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def concat(*clips):
    return AudioClip(np.concatenate([c.samples for c in clips]), clips[0].sample_rate)


def silence(seconds, sr=SAMPLE_RATE):
    return AudioClip(np.zeros(int(round(seconds * sr))), sr)


def track(pid, *rows):
    return AnnotationTrack(pid, [Interval(lab, float(s), float(e)) for lab, s, e in rows])


def warmup_pitch(n):
    """Voiced pitch whose low-percentile runs are single regions (never qualify)."""
    return [100.0 + (37 * i) % 100 for i in range(n)]


def fixture_stream(segments, total_s=None):
    """Build a 10 ms (t_ms, pitch, vad) stream from (seconds, pitch) pieces.

    A piece's pitch may be a list (one value per region); pitch 0 means
    silence (unvoiced, VAD off).
    """
    pitch = []
    for seconds, value in segments:
        n = int(round(seconds * 100))
        if isinstance(value, (list, tuple)):
            assert len(value) == n
            pitch.extend(float(v) for v in value)
        else:
            pitch.extend([float(value)] * n)
    if total_s is not None:
        pitch.extend([0.0] * (int(round(total_s * 100)) - len(pitch)))
    t_ms = [10 * i for i in range(len(pitch))]
    vad = [p > 0 for p in pitch]
    return t_ms, pitch, vad


def fixture_a():
    # 6 s warm-up, 1 s mid pitch, 200 ms low, then silence
    return fixture_stream([(6.0, warmup_pitch(600)), (1.0, 150.0), (0.2, 110.0)], total_s=10.0)


def fixture_b():
    return fixture_stream([(6.0, warmup_pitch(600)), (1.0, 150.0), (0.1, 110.0)], total_s=10.0)


def fixture_c():
    return fixture_stream([(6.0, warmup_pitch(600)), (1.0, 150.0), (0.2, 110.0), (0.3, 150.0),
                           (0.2, 110.0)], total_s=10.0)


def random_prosody(rng, seconds=60.0):
    """Speech bursts and pauses with a wandering pitch, dips and unvoiced gaps."""
    n = int(round(seconds * 100))
    pitch = np.zeros(n)
    vad = np.zeros(n, dtype=bool)
    i = 0
    base = rng.uniform(90, 220)
    while i < n:
        run = int(rng.integers(30, 400))
        f = base * np.exp(np.cumsum(rng.normal(0, 0.02, run)))
        dips = rng.random(run) < 0.01
        for d in np.flatnonzero(dips):
            f[d:d + int(rng.integers(5, 30))] *= rng.uniform(0.7, 0.9)
        f[rng.random(run) < 0.05] = 0.0
        end = min(n, i + run)
        pitch[i:end] = f[:end - i]
        vad[i:end] = True
        i = end + int(rng.integers(5, 100))
    t_ms = [10 * k for k in range(n)]
    return t_ms, pitch.tolist(), vad.tolist()


def gradient_check(cell_kind, loss_kind, activation="sigmoid", hidden=4, batch=3, lookback=3,
                   l2=0.01, dropout=0.0, seed=0):
    """Largest relative gap between backprop and central differences."""
    from backchannel.nnet.model import init_model
    from backchannel.nnet.train import gradients
    from tests.oracles.finite_diff import max_relative_error, numeric_gradients

    rng = np.random.default_rng(seed)
    out = 3 if activation == "softmax" else 1
    model = init_model(cell_kind, hidden, out, activation, dropout, lookback, rng)
    for v in model.params.values():
        v += rng.normal(0, 0.3, v.shape)  # move off the zero-bias init
    X = rng.standard_normal((batch, lookback, model.input_dim))
    if out == 1:
        Y = rng.integers(0, 2, (batch, 1)).astype(float)
    else:
        Y = np.eye(out)[rng.integers(0, out, batch)]
    mask = np.ones((batch, hidden))
    if dropout:
        mask = (rng.random((batch, hidden)) >= dropout) / (1 - dropout)

    def f():
        return gradients(model, X, Y, loss_kind, l2, mask=mask)[0]

    _, analytic = gradients(model, X, Y, loss_kind, l2, mask=mask)
    numeric = numeric_gradients(f, model.params, eps=1e-5)
    return max_relative_error(analytic, numeric)
