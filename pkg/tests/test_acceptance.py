"""Acceptance criteria 1-10, each reported as one PASS/FAIL line."""
import json
import os
import time

import numpy as np

from backchannel import dsp
from backchannel.heuristic import run_offline
from backchannel.metrics import bc_deviation, bc_rate_series, margin_match
from tests.conftest import SEED, record_criterion, run_cli
from tests.helpers import fixture_a, fixture_b, fixture_c, gradient_check, random_prosody, sine
from tests.oracles.heuristic_reference import reference_decisions
from tests.oracles.matching import exhaustive_max_matching


def test_criterion_01_gradient_oracle():
    t0 = time.perf_counter()
    errors = {(cell, loss): gradient_check(cell, loss, hidden=4)
              for cell in ("gru", "lstm") for loss in ("focal", "mse", "bce", "hinge")}
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst < 1e-4 and elapsed < 10.0
    assert record_criterion(1, ok, f"max relative error {worst:.2e} (< 1e-4) over 8 cell/loss "
                                   f"pairs, {elapsed:.1f} s (< 10 s)")


def test_criterion_02_heuristic_oracle():
    t0 = time.perf_counter()
    mismatches = 0
    n_decisions = 0
    for seed in range(100):
        t, p, v = random_prosody(np.random.default_rng(seed), seconds=60.0)
        ours = [(d.t, d.bc_type) for d in
                run_offline(np.asarray(t) / 1000.0, p, v, np.random.default_rng(seed))]
        ref = reference_decisions(t, p, v, np.random.default_rng(seed))
        mismatches += ours != ref
        n_decisions += len(ref)
    traces = []
    for fixture in (fixture_a, fixture_b, fixture_c):
        t, p, v = fixture()
        traces.append([d.t for d in run_offline(np.asarray(t) / 1000.0, p, v,
                                                np.random.default_rng(0))])
    elapsed = time.perf_counter() - t0
    fixtures_ok = traces == [[7.9], [], [7.9]]
    ok = mismatches == 0 and fixtures_ok and elapsed < 30.0
    assert record_criterion(2, ok, f"{100 - mismatches}/100 random streams identical "
                                   f"({n_decisions} decisions), fixtures A/B/C {traces}, "
                                   f"{elapsed:.1f} s (< 30 s)")


def test_criterion_03_deviation_exact():
    got = (bc_deviation(10, 10), bc_deviation(4, 7), bc_deviation(5, 0))
    assert record_criterion(3, got == (0.0, 0.75, 1.0), f"deviation (10,10), (4,7), (5,0) = {got}")


def test_criterion_04_matching_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        n, m = rng.integers(0, 21, size=2)
        span = rng.uniform(2.0, 20.0)
        preds = np.round(rng.uniform(0, span, n), 2).tolist()
        trues = np.round(rng.uniform(0, span, m), 2).tolist()
        bad += margin_match(preds, trues, 0.5)[0] != exhaustive_max_matching(preds, trues, 0.5)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60.0
    assert record_criterion(4, ok, f"{1000 - bad}/1000 instances equal the exhaustive optimum, "
                                   f"{elapsed:.1f} s (< 60 s)")


def test_criterion_05_dsp_invariants():
    x = np.random.default_rng(5).standard_normal(6400) * np.hamming(6400) * 0.1
    base = dsp.mfcc13(x)
    gain = max(float(np.max(np.abs(dsp.mfcc13(k * x) - base))) for k in (0.1, 2.0, 10.0))
    pitch_err = max(abs(dsp.yin(sine(f, 0.4).samples)[0] - f) / f for f in (110, 220, 330))
    rng = np.random.default_rng(6)
    train = [rng.normal(rng.normal(0, 50, 34), rng.uniform(0.1, 40, 34), (n, 34)) for n in (80, 95)]
    stats = dsp.fit_norm(train)
    z = dsp.apply_norm(np.concatenate(train), stats)
    mu, sd = float(np.max(np.abs(z.mean(0)))), float(np.max(np.abs(z.std(0) - 1)))
    ok = gain <= 1e-6 and pitch_err <= 0.015 and mu < 1e-9 and sd < 1e-6
    assert record_criterion(5, ok, f"MFCC gain drift {gain:.1e} (<= 1e-6), YIN worst relative "
                                   f"error {pitch_err:.4f} (<= 0.015), post-norm |mean| {mu:.1e}, "
                                   f"|std-1| {sd:.1e}")


def test_criterion_06_end_to_end_training(trained, shuffled, clock):
    f1 = trained["timing"]["report"]["mean_test"]["margin"]["f1"]
    f1_shuffled = shuffled["mean_test"]["margin"]["f1"]
    runtime = sum(clock.spans[k] for k in ("generate", "train_timing", "train_shuffled"))
    ok = f1 >= 0.8 and f1_shuffled < 0.3 and runtime < 600
    assert record_criterion(6, ok, f"held-out margin F1 {f1:.3f} (>= 0.8), shuffled-label "
                                   f"control {f1_shuffled:.3f} (< 0.3), {runtime:.0f} s (< 600 s)")


def test_criterion_07_type_model(trained):
    mean = trained["type"]["report"]["mean_test"]["macro"]
    plain = np.mean([f["test"]["plain_accuracy"] for f in trained["type"]["report"]["folds"]])
    ok = mean["accuracy"] >= 0.7
    assert record_criterion(7, ok, f"held-out type accuracy {mean['accuracy']:.3f} (>= 0.7, "
                                   f"chance 1/3; plain accuracy {plain:.3f})")


def test_criterion_08_report_parity(planted, trained, tmp_path):
    corpus_dir = os.path.dirname(planted["manifest"])
    with open(planted["manifest"]) as fh:
        entry = json.load(fh)["conversations"][0]
    feats = tmp_path / "speaker.csv"
    assert run_cli("extract", os.path.join(corpus_dir, entry["audio_a"]), "--out", feats) == 0
    rc = run_cli("predict", "--features", feats, "--policy", "learned",
                 "--timing-model", trained["timing"]["model"],
                 "--type-model", trained["type"]["model"],
                 "--truth", os.path.join(corpus_dir, entry["annotations"]),
                 "--listener", entry["id_b"], "--seed", SEED, "--out", tmp_path)
    assert rc == 0
    with open(tmp_path / "report.json") as fh:
        report = json.load(fh)
    fields = ("accuracy", "precision", "recall", "f1")
    missing = [f"{s}.{f}" for s in ("macro", "margin") for f in fields
               if f not in report.get(s, {})]
    if "bc_prediction_deviation" not in report:
        missing.append("bc_prediction_deviation")
    assert record_criterion(8, not missing, "report fields missing: " + (", ".join(missing) or "none"))


def _snapshot(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def _run_everything(planted, trained, root, capsys):
    """Every command once, with fixed inputs and seed."""
    corpus_dir = os.path.dirname(planted["manifest"])
    with open(planted["manifest"]) as fh:
        entry = json.load(fh)["conversations"][1]
    wav = os.path.join(corpus_dir, entry["audio_a"])
    truth = os.path.join(corpus_dir, entry["annotations"])
    listener = entry["id_b"]
    models = ("--timing-model", trained["timing"]["model"], "--type-model", trained["type"]["model"])
    seed = ("--seed", 7)
    calls = [
        ("extract", wav, "--out", root / "feat.csv"),
        ("train", planted["manifest"], "--task", "timing", *seed, "--cache", planted["cache"],
         "--k", 3, "--set", "train.max_epochs=3", "--set", "train.hidden_dim=16",
         "--out", root / "train"),
        ("predict", "--features", root / "feat.csv", "--policy", "naive", *seed,
         "--truth", truth, "--listener", listener, "--out", root / "naive"),
        ("predict", "--features", root / "feat.csv", "--policy", "learned", *models, *seed,
         "--truth", truth, "--listener", listener, "--out", root / "learned"),
        ("predict", "--features", root / "feat.csv", "--policy", "random", *seed,
         "--out", root / "random"),
        ("stream", wav, "--policy", "learned", *models, *seed, "--real-time-factor", 0,
         "--out", root / "stream.jsonl"),
        ("compare", planted["manifest"], "--policies", "naive,learned,random", *models, *seed,
         "--cache", planted["cache"], "--out", root / "compare"),
        ("metrics", root / "learned" / "events.jsonl", "--truth", truth, "--listener", listener,
         "--audio", wav, "--out", root / "metrics"),
    ]
    codes = []
    stdout = []
    for argv in calls:
        codes.append(run_cli(*argv))
        stdout.append(capsys.readouterr().out)
    return codes, stdout


def test_criterion_09_determinism(planted, trained, tmp_path, capsys):
    runs = []
    for name in ("a", "b"):
        root = tmp_path / name
        root.mkdir()
        codes, stdout = _run_everything(planted, trained, root, capsys)
        runs.append((codes, stdout, _snapshot(root)))
    (ca, sa, fa), (cb, sb, fb) = runs
    differing = sorted(k for k in set(fa) | set(fb) if fa.get(k) != fb.get(k))
    ok = ca == cb and all(c == 0 for c in ca) and sa == sb and not differing and len(fa) > 10
    assert record_criterion(9, ok, f"{len(ca)} commands, {len(fa)} output files, exit codes {ca}, "
                                   f"differing files: {differing or 'none'}")


def test_criterion_10_rate_series():
    fixture = bc_rate_series([10, 30, 70], 90.0)
    uniform = bc_rate_series(np.arange(0.5, 300.0, 2.0), 300.0)
    counts = {c for _, c in uniform}
    ok = fixture == [(60, 2), (75, 2), (90, 1)] and counts == {30}
    assert record_criterion(10, ok, f"fixture {fixture}, uniform 0.5/s series values {sorted(counts)}")
