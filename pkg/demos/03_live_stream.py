"""Replay a recording as if it were live and watch the listener react.

`stream` paces the audio at a chosen real-time factor and prints each
behavior event the moment its timestamp is reached. Here the factor is 0.1,
so 40 s of synthetic speech plays back in about 4 s. Ctrl-C stops the replay
early and still leaves a valid partial log behind.

At the end we replay the same file at factor 0 (as fast as possible) and
check that the log is byte-identical to the paced one. Pacing only changes
when events are shown, not which events occur.

Run:  python demos/03_live_stream.py [workdir]
"""
import filecmp
import os
import sys
import tempfile
import time

from backchannel import cli, synth

SEED = 1


def main():
    work = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="bc_stream_")
    synth.make_corpus(os.path.join(work, "corpus"), n_conversations=1, duration_s=40.0, seed=3)
    wav = os.path.join(work, "corpus", "conv1_a.wav")

    paced = os.path.join(work, "paced.jsonl")
    print(f"$ backchannel stream {wav} --policy naive --seed {SEED} --real-time-factor 0.1",
          flush=True)
    t0 = time.perf_counter()
    rc = cli.main(["stream", wav, "--policy", "naive", "--seed", str(SEED),
                   "--real-time-factor", "0.1", "--out", paced])
    print(f"exit {rc} after {time.perf_counter() - t0:.1f} s wall time\n")

    fast = os.path.join(work, "fast.jsonl")
    cli.main(["stream", wav, "--policy", "naive", "--seed", str(SEED),
              "--real-time-factor", "0", "--out", fast])
    same = filecmp.cmp(paced, fast, shallow=False)
    print(f"paced and unpaced logs identical: {same}")


if __name__ == "__main__":
    main()
