import json
import os
import signal
import subprocess
import sys
import time

import numpy as np
import pytest

from backchannel import cli, dsp
from backchannel.dsp import AudioClip, ProsodyStream
from tests.conftest import SEED, run_cli
from tests.helpers import concat, fixture_a, silence, sine


def _voice(seconds, seed=0):
    """A pitched tone with pauses, so VAD and YIN both have something to find."""
    rng = np.random.default_rng(seed)
    parts = []
    total = 0.0
    while total < seconds:
        d = min(float(rng.uniform(0.8, 2.0)), seconds - total)
        parts.append(sine(float(rng.uniform(110, 220)), d, 0.3))
        total += d
        gap = min(float(rng.uniform(0.2, 0.6)), seconds - total)
        if gap > 0:
            parts.append(silence(gap))
            total += gap
    x = concat(*parts).samples
    n = int(round(seconds * dsp.SAMPLE_RATE))
    return AudioClip(np.pad(x, (0, max(0, n - len(x))))[:n], dsp.SAMPLE_RATE)


@pytest.fixture(scope="module")
def wav10(tmp_path_factory):
    path = tmp_path_factory.mktemp("audio") / "ten.wav"
    dsp.write_wav(path, _voice(10.0))
    return path


def _prosody_csv(path, stream):
    t, p, v = stream
    with open(path, "w") as fh:
        dsp.write_prosody_csv(ProsodyStream(np.asarray(t) / 1000.0, p, v), fh)
    return path


def _events(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh]


# --- global behaviour ------------------------------------------------------------------

def test_help_exits_zero(capsys):
    assert run_cli("--help") == 0
    assert "extract" in capsys.readouterr().out


def test_stochastic_commands_need_seed(tmp_path, capsys):
    rc = run_cli("predict", "--prosody", _prosody_csv(tmp_path / "p.csv", fixture_a()),
                 "--out", tmp_path / "o")
    assert rc == 2
    assert "--seed" in capsys.readouterr().err


def test_global_flags_before_or_after_subcommand(tmp_path):
    p = _prosody_csv(tmp_path / "p.csv", fixture_a())
    assert run_cli("--seed", 1, "predict", "--prosody", p, "--out", tmp_path / "a") == 0
    assert run_cli("predict", "--prosody", p, "--seed", 1, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a/events.jsonl").read_bytes() == (tmp_path / "b/events.jsonl").read_bytes()


def test_bad_override(tmp_path, capsys):
    p = _prosody_csv(tmp_path / "p.csv", fixture_a())
    assert run_cli("predict", "--prosody", p, "--seed", 0, "--out", tmp_path,
                   "--set", "heuristic.nonsense=1") == 2
    assert "nonsense" in capsys.readouterr().err
    assert run_cli("predict", "--prosody", p, "--seed", 0, "--out", tmp_path, "--set", "oops") == 2


def test_override_beats_config_file(tmp_path):
    p = _prosody_csv(tmp_path / "p.csv", fixture_a())
    cfg = tmp_path / "c.toml"
    cfg.write_text("[heuristic]\nmin_speech_ms = 100000\n")
    run_cli("predict", "--prosody", p, "--seed", 0, "--config", cfg, "--out", tmp_path / "f",
            "--no-gaze")
    assert _events(tmp_path / "f/events.jsonl") == []
    run_cli("predict", "--prosody", p, "--seed", 0, "--config", cfg, "--out", tmp_path / "g",
            "--set", "heuristic.min_speech_ms=700", "--no-gaze")
    assert [e["t"] for e in _events(tmp_path / "g/events.jsonl")] == [7.9]


def test_malformed_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[heuristic\n")
    assert run_cli("metrics", tmp_path / "none.jsonl", "--config", cfg, "--out", tmp_path) == 2
    cfg.write_text("[mystery]\na = 1\n")
    assert run_cli("metrics", tmp_path / "none.jsonl", "--config", cfg, "--out", tmp_path) == 2


# --- extract ------------------------------------------------------------------------------

def test_extract_row_count_and_sidecar(tmp_path):
    wav = tmp_path / "a.wav"
    dsp.write_wav(wav, _voice(60.0))
    out = tmp_path / "feat.csv"
    assert run_cli("extract", wav, "--out", out) == 0
    with open(out) as fh:
        states = dsp.read_features_csv(fh)
    assert len(states) == 120
    with open(tmp_path / "feat.prosody.csv") as fh:
        prosody = dsp.read_prosody_csv(fh)
    assert len(prosody) == 6000


def test_extract_corrupt_header(tmp_path, capsys):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFX\x00\x00\x00\x00garbage" * 10)
    assert run_cli("extract", bad, "--out", tmp_path / "f.csv") == 2
    assert "error" in capsys.readouterr().err


def test_extract_too_short(tmp_path, capsys):
    wav = tmp_path / "s.wav"
    dsp.write_wav(wav, silence(0.2))
    assert run_cli("extract", wav, "--out", tmp_path / "f.csv") == 2
    assert capsys.readouterr().err


def test_extract_missing_file(tmp_path):
    assert run_cli("extract", tmp_path / "nope.wav", "--out", tmp_path / "f.csv") == 2


def test_extract_byte_identical(tmp_path, wav10):
    for name in ("a", "b"):
        assert run_cli("extract", wav10, "--out", tmp_path / f"{name}.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.prosody.csv").read_bytes() == (tmp_path / "b.prosody.csv").read_bytes()


# --- predict -------------------------------------------------------------------------------

def test_predict_naive_fixture_a(tmp_path):
    p = _prosody_csv(tmp_path / "a.csv", fixture_a())
    assert run_cli("predict", "--prosody", p, "--policy", "naive", "--seed", 0,
                   "--out", tmp_path) == 0
    recs = _events(tmp_path / "events.jsonl")
    bcs = [r for r in recs if r["kind"] == "bc"]
    assert [r["t"] for r in bcs] == [7.9]
    assert bcs[0]["action"] in ("vocal", "nod")
    assert recs[0] == {"t": 0.0, "kind": "gaze", "mode": "at_user"}
    ts = [r["t"] for r in recs]
    assert ts == sorted(ts)


def test_predict_random_rate_zero(tmp_path, wav10):
    feats = tmp_path / "f.csv"
    run_cli("extract", wav10, "--out", feats)
    assert run_cli("predict", "--features", feats, "--policy", "random", "--seed", 3,
                   "--set", "random.rate_per_min=0", "--out", tmp_path) == 0
    assert [r for r in _events(tmp_path / "events.jsonl") if r["kind"] == "bc"] == []


def test_predict_random_rate_positive(tmp_path, wav10):
    feats = tmp_path / "f.csv"
    run_cli("extract", wav10, "--out", feats)
    run_cli("predict", "--features", feats, "--policy", "random", "--seed", 3,
            "--set", "random.rate_per_min=120", "--out", tmp_path, "--no-gaze")
    bcs = _events(tmp_path / "events.jsonl")
    assert 5 <= len(bcs) <= 40 and all(0 <= r["t"] <= 10 for r in bcs)


def test_predict_truth_perfect(tmp_path):
    p = _prosody_csv(tmp_path / "a.csv", fixture_a())
    truth = tmp_path / "truth.csv"
    truth.write_text("participant,label,start_s,end_s\n"
                     "listener,vocal_bc,7.900,8.200\nspeaker,speech,0.000,7.200\n")
    assert run_cli("predict", "--prosody", p, "--seed", 0, "--truth", truth,
                   "--listener", "listener", "--out", tmp_path) == 0
    with open(tmp_path / "report.json") as fh:
        report = json.load(fh)
    assert report["margin"]["f1"] == 1.0
    assert report["bc_prediction_deviation"] == 0.0


def test_predict_truth_needs_listener_choice(tmp_path, capsys):
    p = _prosody_csv(tmp_path / "a.csv", fixture_a())
    truth = tmp_path / "truth.csv"
    truth.write_text("participant,label,start_s,end_s\na,vocal_bc,1.000,1.200\nb,nod,2.000,2.500\n")
    assert run_cli("predict", "--prosody", p, "--seed", 0, "--truth", truth,
                   "--out", tmp_path) == 2
    assert "--listener" in capsys.readouterr().err


def test_predict_learned_missing_model(tmp_path, capsys, wav10):
    feats = tmp_path / "f.csv"
    run_cli("extract", wav10, "--out", feats)
    rc = run_cli("predict", "--features", feats, "--policy", "learned", "--seed", 0,
                 "--timing-model", tmp_path / "nope.json", "--type-model", tmp_path / "nope.json",
                 "--out", tmp_path)
    assert rc == 2
    assert "model" in capsys.readouterr().err
    assert run_cli("predict", "--features", feats, "--policy", "learned", "--seed", 0,
                   "--out", tmp_path) == 2


def test_predict_naive_without_prosody(tmp_path, capsys):
    feats = tmp_path / "f.csv"
    with open(feats, "w") as fh:
        dsp.write_features_csv(dsp.StateStream([0.5], np.zeros((1, 34))), fh)
    assert run_cli("predict", "--features", feats, "--seed", 0, "--out", tmp_path) == 2
    assert "prosody" in capsys.readouterr().err


# --- metrics --------------------------------------------------------------------------------

def test_metrics_command(tmp_path, wav10):
    log = tmp_path / "events.jsonl"
    log.write_text('{"t": 0.0, "kind": "gaze", "mode": "at_user"}\n'
                   '{"t": 2.0, "kind": "bc", "action": "nod", "amplitude": 0.2}\n'
                   '{"t": 6.0, "kind": "bc", "action": "vocal", "cue": "hmm"}\n')
    truth = tmp_path / "t.csv"
    truth.write_text("participant,label,start_s,end_s\nL,nod,2.300,2.800\n")
    assert run_cli("metrics", log, "--truth", truth, "--audio", wav10, "--out", tmp_path) == 0
    with open(tmp_path / "report.json") as fh:
        r = json.load(fh)
    assert (r["margin"]["precision"], r["margin"]["recall"]) == (0.5, 1.0)
    assert r["bc_prediction_deviation"] == 1.0
    assert r["bc_count"] == 2 and r["duration_s"] == pytest.approx(10.0)
    assert r["engagement"]["utterance_count"] >= 1
    assert (tmp_path / "rate_series.csv").read_text().startswith("t_s,count_per_min\n")


def test_metrics_bad_log(tmp_path):
    log = tmp_path / "events.jsonl"
    log.write_text("{broken\n")
    assert run_cli("metrics", log, "--out", tmp_path) == 2


# --- stream ----------------------------------------------------------------------------------

@pytest.mark.parametrize("policy", ["naive", "random"])
def test_stream_factor_zero_equals_predict(tmp_path, wav10, capsys, policy):
    feats = tmp_path / "f.csv"
    run_cli("extract", wav10, "--out", feats)
    assert run_cli("predict", "--features", feats, "--policy", policy, "--seed", 11,
                   "--set", "random.rate_per_min=30", "--out", tmp_path) == 0
    capsys.readouterr()
    assert run_cli("stream", wav10, "--policy", policy, "--seed", 11, "--real-time-factor", 0,
                   "--set", "random.rate_per_min=30", "--out", tmp_path / "s.jsonl") == 0
    stdout = capsys.readouterr().out
    expected = (tmp_path / "events.jsonl").read_text()
    assert stdout == expected
    assert (tmp_path / "s.jsonl").read_text() == expected


def test_stream_learned_factor_zero_equals_predict(tmp_path, planted, trained, capsys):
    wav = os.path.join(os.path.dirname(planted["manifest"]), "conv1_a.wav")
    feats = tmp_path / "f.csv"
    run_cli("extract", wav, "--out", feats)
    models = ("--timing-model", trained["timing"]["model"], "--type-model", trained["type"]["model"])
    assert run_cli("predict", "--features", feats, "--policy", "learned", *models, "--seed", 2,
                   "--out", tmp_path) == 0
    capsys.readouterr()
    assert run_cli("stream", wav, "--policy", "learned", *models, "--seed", 2,
                   "--real-time-factor", 0) == 0
    out = capsys.readouterr().out
    assert out == (tmp_path / "events.jsonl").read_text()
    assert any('"kind": "bc"' in line for line in out.splitlines())


def test_stream_real_time_pacing(tmp_path, wav10, capsys):
    t0 = time.perf_counter()
    assert run_cli("stream", wav10, "--seed", 0, "--real-time-factor", 1) == 0
    elapsed = time.perf_counter() - t0
    print(f"stream at factor 1 on a 10 s clip took {elapsed:.2f} s")
    assert abs(elapsed - 10.0) <= 0.5


def test_stream_rejects_negative_factor(wav10):
    assert run_cli("stream", wav10, "--seed", 0, "--real-time-factor", -1) == 2


def test_stream_interrupt_leaves_valid_partial_log(tmp_path):
    wav = tmp_path / "long.wav"
    dsp.write_wav(wav, _voice(30.0, seed=4))
    log = tmp_path / "s.jsonl"
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    proc = subprocess.Popen(
        [sys.executable, "-m", "backchannel", "stream", str(wav), "--seed", "0",
         "--policy", "random", "--set", "random.rate_per_min=120", "--out", str(log)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=env, text=True)
    time.sleep(8.0)
    proc.send_signal(signal.SIGINT)
    out, err = proc.communicate(timeout=20)
    assert proc.returncode == 130
    assert "interrupted" in err
    lines = out.splitlines()
    recs = [json.loads(line) for line in lines]
    assert recs and all(r["t"] < 30.0 for r in recs)
    assert log.read_text().splitlines() == lines
    ts = [r["t"] for r in recs]
    assert ts == sorted(ts)


# --- train / compare on the planted corpus -----------------------------------------------------

def test_train_outputs(trained):
    for task in ("timing", "type"):
        d = trained[task]["dir"]
        for name in ("model.json", "history.json", "report.json"):
            assert (d / name).exists()
        report = trained[task]["report"]
        assert report["k"] == 8 and len(report["folds"]) == 8
        for f in report["folds"]:
            assert not set(f["test_ids"]) & set(f["train_ids"])
            assert not set(f["val_ids"]) & set(f["train_ids"])
        with open(d / "history.json") as fh:
            assert len(json.load(fh)) == 8


def test_train_grid_and_config_precedence(planted, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[train]\nmax_epochs = 5\nhidden_dim = 8\n\n[grid]\nlookback = [5, 10]\n")
    out = tmp_path / "g"
    rc = run_cli("train", planted["manifest"], "--seed", SEED, "--cache", planted["cache"],
                 "--k", 3, "--grid", "--config", cfg, "--set", "train.max_epochs=2", "--out", out)
    assert rc == 0
    with open(out / "grid.json") as fh:
        grid = json.load(fh)
    ranking = grid["ranking"]
    assert [r["rank"] for r in ranking] == [1, 2]
    assert {r["config"]["lookback"] for r in ranking} == {5, 10}
    assert all(r["config"]["max_epochs"] == 2 and r["config"]["hidden_dim"] == 8 for r in ranking)
    with open(out / "report.json") as fh:
        assert json.load(fh)["config"] == ranking[0]["config"]
    assert "top-3 count" in capsys.readouterr().err


def test_train_insufficient_positives(tmp_path, capsys):
    d = tmp_path / "c"
    d.mkdir()
    dsp.write_wav(d / "a.wav", _voice(12.0, 1))
    dsp.write_wav(d / "b.wav", _voice(12.0, 2))
    (d / "ann.csv").write_text("participant,label,start_s,end_s\n"
                               "x,speech,0.000,6.000\ny,speech,6.500,12.000\n")
    (d / "m.json").write_text(json.dumps({"conversations": [
        {"audio_a": "a.wav", "audio_b": "b.wav", "annotations": "ann.csv"}]}))
    rc = run_cli("train", d / "m.json", "--seed", 0, "--out", tmp_path / "o")
    assert rc == 2
    err = capsys.readouterr().err
    assert "positive" in err and "k=8" in err


def test_train_missing_manifest(tmp_path):
    assert run_cli("train", tmp_path / "none.json", "--seed", 0, "--out", tmp_path) == 2


def test_compare_policy_with_itself(planted, tmp_path):
    out = tmp_path / "c"
    assert run_cli("compare", planted["manifest"], "--policies", "naive,naive", "--seed", SEED,
                   "--cache", planted["cache"], "--out", out) == 0
    with open(out / "compare.json") as fh:
        doc = json.load(fh)
    assert doc["reports"]["naive"] == doc["reports"]["naive_2"]
    rates = sorted(os.listdir(out / "rates"))
    assert len(rates) == 16 and rates[0].startswith("naive_")


def test_compare_naive_recall_at_least_silent_random(planted, tmp_path):
    out = tmp_path / "c"
    assert run_cli("compare", planted["manifest"], "--policies", "naive,random", "--seed", SEED,
                   "--cache", planted["cache"], "--set", "random.rate_per_min=0", "--out", out) == 0
    with open(out / "compare.json") as fh:
        reports = json.load(fh)["reports"]
    assert reports["random"]["margin"]["recall"] == 0.0
    assert reports["naive"]["margin"]["recall"] >= reports["random"]["margin"]["recall"]


def test_compare_learned_beats_naive(planted, trained, tmp_path, capsys):
    out = tmp_path / "c"
    rc = run_cli("compare", planted["manifest"], "--policies", "naive,learned,random",
                 "--timing-model", trained["timing"]["model"],
                 "--type-model", trained["type"]["model"],
                 "--seed", SEED, "--cache", planted["cache"], "--out", out)
    assert rc == 0
    with open(out / "compare.json") as fh:
        reports = json.load(fh)["reports"]
    f1 = {k: v["margin"]["f1"] for k, v in reports.items()}
    print("compare margin F1:", f1)
    assert f1["learned"] > f1["naive"]


def test_compare_needs_two_policies(planted, tmp_path):
    assert run_cli("compare", planted["manifest"], "--policies", "naive", "--seed", 0,
                   "--out", tmp_path) == 2
    assert run_cli("compare", planted["manifest"], "--policies", "naive,oracle", "--seed", 0,
                   "--out", tmp_path) == 2


def test_main_module_entry_point():
    rc = subprocess.run([sys.executable, "-m", "backchannel", "--help"], capture_output=True,
                        env=dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path)))
    assert rc.returncode == 0


def test_exit_code_one_on_runtime_failure(monkeypatch, tmp_path, capsys):
    def boom(args, settings):
        raise RuntimeError("disk on fire")
    monkeypatch.setitem(cli.COMMANDS, "metrics", boom)
    assert run_cli("metrics", tmp_path / "x", "--out", tmp_path) == 1
    assert "disk on fire" in capsys.readouterr().err


def test_parse_value_types():
    assert cli._parse_value("3") == 3
    assert cli._parse_value("0.5") == 0.5
    assert cli._parse_value("[1, 2]") == [1, 2]
    assert cli._parse_value("gru") == "gru"
    assert cli._parse_value("true") is True



def test_sidecar_path(tmp_path):
    assert cli.sidecar_path(str(tmp_path / "x.csv")) == str(tmp_path / "x.prosody.csv")
