"""Brute-force reimplementation of the pitch-percentile listener rules.

Everything is recomputed from scratch for each 10 ms region (no incremental
buffers) so it shares no state handling with the library version. Times are
integer milliseconds on a contiguous 10 ms grid.
"""
import numpy as np


def reference_decisions(t_ms, pitch, vad, rng, percentile=26.0, min_low_ms=110,
                        min_speech_ms=700, cooldown_ms=800, wait_ms=700,
                        history_ms=50_000, min_history_ms=5_000, region_ms=10):
    n = len(t_ms)
    tt = np.asarray(t_ms, dtype=np.int64)
    pp = np.asarray(pitch, dtype=float)
    voiced = (pp > 0) & np.isfinite(pp)

    # P1: is region i low, judged against voiced regions strictly earlier and
    # newer than t_i - history
    low = [False] * n
    for i in range(n):
        if not voiced[i]:
            continue
        hist = pp[:i][voiced[:i] & (tt[:i] > tt[i] - history_ms)]
        if len(hist) * region_ms < min_history_ms:
            continue
        below = int(np.count_nonzero(hist < pp[i]))
        low[i] = 100.0 * below / len(hist) < percentile

    # continuous speech before region i (VAD-based)
    def speech_before(i):
        run = 0
        j = i - 1
        while j >= 0 and vad[j]:
            run += region_ms
            j -= 1
        return run

    # maximal runs of low regions, keyed by the index that completes them
    completes = {}
    i = 0
    while i < n:
        if low[i]:
            a = i
            while i < n and low[i]:
                i += 1
            if i < n:
                completes[i] = (a, i - 1)
        else:
            i += 1

    out = []
    last_bc = None
    pending = None
    for i in range(n):
        t = t_ms[i]
        if pending is not None and t >= pending:
            cooled = last_bc is None or t - last_bc >= cooldown_ms
            if cooled and not (vad[i] and speech_before(i) < min_speech_ms):
                kind = "vocal" if rng.random() < 0.5 else "nonvocal"
                out.append((t / 1000.0, kind))
                last_bc = t
            pending = None
        if i in completes:
            a, b = completes[i]
            if ((b - a + 1) * region_ms >= min_low_ms
                    and speech_before(a) >= min_speech_ms
                    and pending is None
                    and (last_bc is None or t - last_bc >= cooldown_ms)):
                pending = t_ms[b] + region_ms + wait_ms
    return out
