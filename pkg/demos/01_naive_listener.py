"""Walk through the pitch-percentile listener on a synthetic speaker.

We build a 10 ms pitch/VAD stream by hand: a warm-up stretch so the rolling
pitch distribution fills up, then a few utterances that end on a low pitch
dip. The heuristic should answer each dip about 700 ms after it ends, as
long as the speaker has not started a new utterance by then.

Run:  python demos/01_naive_listener.py
"""
import io

import numpy as np

from backchannel import behavior, heuristic


def utterance(seconds, pitch_hz, rng):
    n = int(round(seconds * 100))
    return list(pitch_hz + rng.normal(0, 4, n)), [True] * n


def pause(seconds):
    n = int(round(seconds * 100))
    return [0.0] * n, [False] * n


def main():
    rng = np.random.default_rng(1)
    pitch, voiced = [], []

    def add(chunk):
        pitch.extend(chunk[0])
        voiced.extend(chunk[1])

    # six seconds of chatter at 130-180 Hz fills the 5 s minimum history
    for _ in range(4):
        add(utterance(1.2, rng.uniform(130, 180), rng))
        add(pause(0.3))
    # three utterances, each ending with a 200 ms dip to 95 Hz
    for _ in range(3):
        add(utterance(1.5, 160.0, rng))
        add(([95.0] * 20, [True] * 20))
        add(pause(1.2))

    t = np.arange(len(pitch)) * 0.01
    print(f"stream: {len(t)} regions, {t[-1] + 0.01:.1f} s")
    decisions = heuristic.run_offline(t, pitch, voiced, np.random.default_rng(0))
    for d in decisions:
        print(f"  decision at {d.t:5.2f} s -> {d.bc_type}")

    # the behavior layer picks a cue or nod amplitude and adds a gaze schedule
    log = behavior.realize_session(decisions, float(t[-1]) + 0.01, np.random.default_rng(2))
    buf = io.StringIO()
    behavior.write_event_log(log, buf)
    print("\nsession log:")
    print(buf.getvalue(), end="")


if __name__ == "__main__":
    main()
