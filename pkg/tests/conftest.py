import json
import time

import numpy as np
import pytest

from backchannel import cli, synth

SEED = 0
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Remember a PASS/FAIL line for the end-of-run summary and print it."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


class Clock:
    """Wall-clock seconds spent building the shared end-to-end artifacts."""

    def __init__(self):
        self.spans = {}

    def run(self, name, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        self.spans[name] = time.perf_counter() - t0
        return out


@pytest.fixture(scope="session")
def clock():
    return Clock()


@pytest.fixture(scope="session")
def planted(tmp_path_factory, clock):
    """Four 150 s conversations (8 participants, 10 min) with planted cues."""
    root = tmp_path_factory.mktemp("planted")
    manifest = clock.run("generate", synth.make_corpus, str(root / "corpus"), 4, 150.0, SEED)
    return {"root": root, "manifest": manifest, "cache": str(root / "cache")}


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="session")
def trained(planted, clock):
    """Timing and type models trained with the default task configs."""
    root = planted["root"]
    out = {}
    for task in ("timing", "type"):
        d = root / f"train_{task}"
        rc = clock.run(f"train_{task}", run_cli, "train", planted["manifest"], "--task", task,
                       "--seed", SEED, "--cache", planted["cache"], "--out", d)
        assert rc == 0
        with open(d / "report.json") as fh:
            out[task] = {"dir": d, "model": d / "model.json", "report": json.load(fh)}
    return out


@pytest.fixture(scope="session")
def shuffled(planted, trained, clock):
    d = planted["root"] / "train_shuffled"
    rc = clock.run("train_shuffled", run_cli, "train", planted["manifest"], "--task", "timing",
                   "--shuffle-labels", "--seed", SEED, "--cache", planted["cache"], "--out", d)
    assert rc == 0
    with open(d / "report.json") as fh:
        return json.load(fh)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

