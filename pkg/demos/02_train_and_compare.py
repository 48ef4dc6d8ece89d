"""Train the two-stage listener on a planted corpus and compare policies.

The synthetic corpus plants a short noise burst in the speaker's audio just
before each listener backchannel, in a frequency band that depends on the
backchannel type. MFCCs see the burst; the pitch track does not. So the
learned policy should find the backchannels and the pitch heuristic should
mostly miss them.

Everything goes through the same entry point as the command line, so each
step below has a shell equivalent (printed as it runs).

Run:  python demos/02_train_and_compare.py [workdir]    (a few minutes)
"""
import json
import os
import sys
import tempfile

from backchannel import cli, synth

SEED = 0


def run(*argv):
    argv = [str(a) for a in argv]
    print("$ backchannel " + " ".join(argv), flush=True)
    rc = cli.main(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    work = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="bc_demo_")
    print(f"working in {work}\n")

    # four 150 s conversations, eight participants
    manifest = synth.make_corpus(os.path.join(work, "corpus"), n_conversations=4,
                                 duration_s=150.0, seed=SEED)
    cache = os.path.join(work, "cache")

    # 4-fold participant-disjoint cross-validation with a smaller hidden layer
    quick = ("--k", 4, "--set", "train.hidden_dim=32")
    for task in ("timing", "type"):
        run("train", manifest, "--task", task, "--seed", SEED, "--cache", cache, *quick,
            "--out", os.path.join(work, task))
    with open(os.path.join(work, "timing", "report.json")) as fh:
        report = json.load(fh)
    for fold in report["folds"]:
        m = fold["test"]["margin"]
        print(f"  fold {fold['fold']} test {fold['test_ids']}: margin F1 {m['f1']:.2f}, "
              f"stopped at epoch {fold['stop_epoch']} ({fold['stop_reason']})")

    print()
    run("compare", manifest, "--policies", "naive,learned,random", "--seed", SEED,
        "--cache", cache, "--timing-model", os.path.join(work, "timing", "model.json"),
        "--type-model", os.path.join(work, "type", "model.json"),
        "--out", os.path.join(work, "compare"))
    with open(os.path.join(work, "compare", "compare.json")) as fh:
        reports = json.load(fh)["reports"]
    print("\npolicy    margin P  margin R  margin F1  deviation")
    for name, r in reports.items():
        m = r["margin"]
        dev = r["bc_prediction_deviation"]
        print(f"{name:8s}  {m['precision']:8.2f}  {m['recall']:8.2f}  {m['f1']:9.2f}  "
              f"{dev if dev is None else round(dev, 2)}")
    print(f"\nper-listener rate series: {os.path.join(work, 'compare', 'rates')}")


if __name__ == "__main__":
    main()
