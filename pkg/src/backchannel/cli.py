"""Command-line entry point: ``backchannel <command> [options]``.

Commands: extract, train, predict, stream, compare, metrics. Exit status is
0 on success, 1 on a runtime failure and 2 on bad input or configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import queue
import sys
import threading
import time
import zlib
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import behavior, corpus, dsp, heuristic, metrics, pipeline
from .baseline import DEFAULT_RATE_PER_MIN, random_policy
from .errors import ConfigurationError, InsufficientDataError
from .heuristic import BCDecision, HeuristicConfig
from .nnet import train as T
from .nnet.model import load_model, save_model
from .nnet.predict import TwoStageDetector, predict_events

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("backchannel")

POLICIES = ("naive", "learned", "random")
STOCHASTIC = ("train", "predict", "stream", "compare")
DEFAULT_GRID = {"cell_kind": ["gru", "lstm"], "lookback": [5, 10]}
SECTIONS = ("heuristic", "behavior", "train", "grid", "random", "vad", "corpus", "predict")


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_settings(path: Optional[str], overrides: Sequence[str]) -> Dict[str, dict]:
    """TOML file sections, then ``section.key=value`` overrides on top."""
    settings: Dict[str, dict] = {s: {} for s in SECTIONS}
    if path:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigurationError(f"{path}: {exc}") from exc
        for section, table in data.items():
            if section not in settings or not isinstance(table, dict):
                raise ConfigurationError(f"{path}: unknown section [{section}]")
            settings[section].update(table)
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in settings:
            raise ConfigurationError(f"override {item!r} must look like section.key=value")
        settings[section][name] = _parse_value(value)
    return settings


def _build(cls, table: dict, base=None, what: str = ""):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigurationError(f"unknown {what} setting(s): {', '.join(unknown)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}
    try:
        return dataclasses.replace(base, **values) if base is not None else cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"{what}: {exc}") from exc


def _only(table: dict, allowed: Sequence[str], what: str) -> dict:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown {what} setting(s): {', '.join(unknown)}")
    return table


def heuristic_config(settings) -> HeuristicConfig:
    return _build(HeuristicConfig, settings["heuristic"], what="heuristic")


def behavior_config(settings) -> behavior.BehaviorConfig:
    return _build(behavior.BehaviorConfig, settings["behavior"], what="behavior")


def vad_options(settings) -> dict:
    return _only(settings["vad"], ("threshold_db", "hangover_ms"), "vad")


def train_config(settings, task: str, seed: int) -> T.TrainConfig:
    base = T.TIMING_CONFIG if task == "timing" else T.TYPE_CONFIG
    return T.TrainConfig.from_dict({**base.to_dict(), **settings["train"], "seed": seed})


def random_rate(settings) -> float:
    return float(_only(settings["random"], ("rate_per_min",), "random").get(
        "rate_per_min", DEFAULT_RATE_PER_MIN))


# ---------------------------------------------------------------------------
# I/O helpers

def _clean(obj):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def _outdir(args) -> str:
    if not args.out:
        raise UsageError(f"{args.command} needs --out DIR")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _read_features(path: str) -> dsp.StateStream:
    with open(path, encoding="utf-8") as fh:
        return dsp.read_features_csv(fh)


def _read_prosody(path: str) -> dsp.ProsodyStream:
    with open(path, encoding="utf-8") as fh:
        return dsp.read_prosody_csv(fh)


def _read_track(path: str, listener: Optional[str]) -> corpus.AnnotationTrack:
    with open(path, encoding="utf-8") as fh:
        tracks = corpus.parse_annotations(fh.read())
    by_id = {t.participant_id: t for t in tracks}
    if listener is None:
        if len(tracks) != 1:
            raise UsageError(f"{path} has participants {sorted(by_id)}; pick one with --listener")
        return tracks[0]
    if listener not in by_id:
        # a listener with no annotations simply produced no backchannels
        return corpus.AnnotationTrack(listener, [])
    return by_id[listener]


def _rngs(seed: int, *tags) -> Tuple[np.random.Generator, ...]:
    """Independent generators for the policy, the realisation and the gaze schedule."""
    words = [seed] + [zlib.crc32(str(t).encode()) for t in tags]
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(words).spawn(3))


def _load_models(args):
    if not args.timing_model or not args.type_model:
        raise ConfigurationError("policy 'learned' needs --timing-model and --type-model")
    for p in (args.timing_model, args.type_model):
        if not os.path.exists(p):
            raise ConfigurationError(f"model file not found: {p}")
    return load_model(args.timing_model), load_model(args.type_model)


def sidecar_path(features_path: str) -> str:
    stem, ext = os.path.splitext(features_path)
    return f"{stem}.prosody{ext or '.csv'}"


# ---------------------------------------------------------------------------
# extract

def cmd_extract(args, settings) -> int:
    if not args.out:
        raise UsageError("extract needs --out FEATURES.csv")
    clip = dsp.read_wav(args.audio)
    states = dsp.extract_states(clip)
    prosody = dsp.prosody_stream(clip, **vad_options(settings))
    prosody_path = args.prosody_out or sidecar_path(args.out)
    for path, writer, obj in ((args.out, dsp.write_features_csv, states),
                              (prosody_path, dsp.write_prosody_csv, prosody)):
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            writer(obj, fh)
    log.info("wrote %d state vectors to %s and %d regions to %s",
             len(states), args.out, len(prosody), prosody_path)
    return 0


# ---------------------------------------------------------------------------
# train

def _check_positives(task: str, seqs, k: int) -> None:
    per: Dict[str, int] = {}
    for s in seqs:
        per[s.segment.listener_id] = per.get(s.segment.listener_id, 0) + int((s.timing == 1).sum())
    total = sum(per.values())
    if total < k:
        detail = ", ".join(f"{p}={n}" for p, n in sorted(per.items())) or "no listener segments"
        raise InsufficientDataError(
            f"only {total} positive steps for {task} training across {len(per)} listeners "
            f"({detail}); need at least one per fold (k={k})")


def cmd_train(args, settings) -> int:
    out = _outdir(args)
    copts = _only(settings["corpus"], ("min_turn_s", "k"), "corpus")
    k = int(args.k or copts.get("k", 8))
    data = pipeline.load_corpus(args.manifest, args.cache, float(copts.get("min_turn_s", 1.0)))
    seqs = pipeline.all_sequences(data)
    if args.shuffle_labels:
        seqs = corpus.shuffle_labels(seqs, np.random.default_rng(args.seed))
    _check_positives(args.task, seqs, k)
    ids = sorted({s.segment.listener_id for s in seqs})
    split = corpus.kfold_split(ids, k, args.seed)
    config = train_config(settings, args.task, args.seed)

    report: dict = {"task": args.task, "k": k, "shuffled_labels": bool(args.shuffle_labels)}
    if args.grid:
        grid = dict(settings["grid"]) or DEFAULT_GRID
        candidates = T.expand_grid(grid, base=config)
        priorities = ("accuracy", "f1")
        ranked = T.grid_search(candidates, args.task, seqs, split, priorities)
        table = [{"rank": i + 1, "top_count": r.top_count, "mean_val": r.mean_scores,
                  "config": r.config.to_dict()} for i, r in enumerate(ranked)]
        write_json(os.path.join(out, "grid.json"), {"metric_priorities": list(priorities),
                                                   "ranking": table})
        for row in table:
            print(f"{row['rank']:3d}  top-3 count {row['top_count']:3d}  "
                  f"val f1 {row['mean_val']['f1']:.3f}  "
                  + " ".join(f"{n}={row['config'][n]}" for n in grid), file=sys.stderr)
        config = ranked[0].config

    results = T.cross_validate(args.task, seqs, split, config)
    select = (lambda r: r.val["margin"]["f1"]) if args.task == "timing" else (lambda r: r.val["macro"]["f1"])
    best = max(results, key=lambda r: (select(r), -r.fold))
    save_model(best.model, os.path.join(out, "model.json"))

    history = [{"fold": r.fold, **r.history.to_dict()} for r in results]
    write_json(os.path.join(out, "history.json"), history)
    section = "margin" if args.task == "timing" else "macro"
    report.update({
        "config": config.to_dict(),
        "deployed_fold": best.fold,
        "folds": [{"fold": r.fold, "train_ids": split.assignments[r.fold].train_ids,
                   "val_ids": split.assignments[r.fold].val_ids,
                   "test_ids": split.assignments[r.fold].test_ids,
                   "stop_epoch": r.history.stop_epoch, "stop_reason": r.history.stop_reason,
                   "val": r.val, "test": r.test} for r in results],
        "mean_test": {"macro": T.mean_metrics([r.test for r in results], "macro")},
    })
    if args.task == "timing":
        report["mean_test"]["margin"] = T.mean_metrics([r.test for r in results], "margin")
        devs = [r.test["bc_prediction_deviation"] for r in results
                if r.test["bc_prediction_deviation"] is not None]
        report["mean_test"]["bc_prediction_deviation"] = float(np.mean(devs)) if devs else None
    write_json(os.path.join(out, "report.json"), report)
    summary = report["mean_test"][section]
    print(f"{args.task}: mean held-out {section} "
          + " ".join(f"{k}={v:.3f}" for k, v in summary.items()), file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# predict / stream

def _timeline(policy: str, states: Optional[dsp.StateStream],
              prosody: Optional[dsp.ProsodyStream]) -> float:
    if policy == "naive" or states is None:
        return prosody.duration if prosody is not None else 0.0
    return float(states.t[-1]) if len(states) else 0.0


def decide(policy: str, args, settings, rng, states=None, prosody=None) -> List[BCDecision]:
    if policy == "naive":
        if prosody is None:
            raise UsageError("policy 'naive' needs the prosody stream (--prosody)")
        return heuristic.run_stream(prosody, rng, heuristic_config(settings))
    if policy == "learned":
        if states is None:
            raise UsageError("policy 'learned' needs --features")
        mt, my = _load_models(args)
        return predict_events(mt, my, states, _threshold(args, settings))
    if states is None and prosody is None:
        raise UsageError("policy 'random' needs --features or --prosody")
    return random_policy(_timeline(policy, states, prosody), rng, random_rate(settings))


def _threshold(args, settings) -> Optional[float]:
    if getattr(args, "threshold", None) is not None:
        return args.threshold
    return _only(settings["predict"], ("threshold",), "predict").get("threshold")


def truth_report(decisions: Sequence[BCDecision], track: corpus.AnnotationTrack,
                 duration: float) -> metrics.MetricsReport:
    n_steps = int(math.ceil(duration / dsp.STEP_S - 1e-9))
    true = corpus.bc_onsets(track, 0.0, n_steps * dsp.STEP_S)
    pred = [d.t for d in decisions]
    return metrics.build_report([metrics.EpisodeResult(track.participant_id, pred, true, 0.0, n_steps)])


def cmd_predict(args, settings) -> int:
    out = _outdir(args)
    states = _read_features(args.features) if args.features else None
    prosody_path = args.prosody
    if prosody_path is None and args.features and os.path.exists(sidecar_path(args.features)):
        prosody_path = sidecar_path(args.features)
    prosody = _read_prosody(prosody_path) if prosody_path else None
    policy_rng, realize_rng, gaze_rng = _rngs(args.seed, "session")
    decisions = decide(args.policy, args, settings, policy_rng, states, prosody)
    duration = _timeline(args.policy, states, prosody)
    records = behavior.realize_session(decisions, duration, realize_rng, behavior_config(settings),
                                       with_gaze=not args.no_gaze, gaze_rng=gaze_rng)
    with open(os.path.join(out, "events.jsonl"), "w", encoding="utf-8") as fh:
        behavior.write_event_log(records, fh)
    log.info("%d backchannel decisions over %.1f s", len(decisions), duration)
    if args.truth:
        track = _read_track(args.truth, args.listener)
        report = truth_report(decisions, track, duration).to_dict()
        report.update({"policy": args.policy, "duration_s": duration})
        write_json(os.path.join(out, "report.json"), report)
    return 0


_END = object()


def _producer(items, rtf: float, t0: float, q: "queue.Queue", stop: threading.Event) -> None:
    for avail, item in items:
        if stop.is_set():
            return
        if rtf > 0:
            delay = t0 + rtf * avail - time.monotonic()
            if delay > 0 and stop.wait(delay):
                return
        while not stop.is_set():
            try:
                q.put((avail, item), timeout=0.1)
                break
            except queue.Full:
                continue
    q.put((math.inf, _END))


def cmd_stream(args, settings) -> int:
    t0 = time.monotonic()
    if args.real_time_factor < 0:
        raise UsageError("--real-time-factor must be >= 0")
    states, prosody, _ = pipeline.extract_audio(args.audio, args.cache)
    if vad_options(settings):
        prosody = dsp.as_written(dsp.prosody_stream(dsp.read_wav(args.audio), **vad_options(settings)))
    policy_rng, realize_rng, gaze_rng = _rngs(args.seed, "session")
    bcfg = behavior_config(settings)
    duration = _timeline(args.policy, states, prosody)
    gaze = behavior.gaze_schedule(duration, gaze_rng, bcfg) if not args.no_gaze else []
    merger = behavior.LogMerger(gaze)

    # items become available when their audio has been heard: a region at its
    # end, a state vector at its window end
    if args.policy == "naive":
        cfg = heuristic_config(settings)
        hstate = heuristic.HeuristicState(cfg)
        items = [(round(t + dsp.REGION_S, 2), (t, p, v))
                 for t, p, v in zip(prosody.t, prosody.pitch, prosody.voiced)]

        def consume(item):
            t, p, v = item
            d = heuristic.step(hstate, float(t), float(p), bool(v), policy_rng)
            return d, float(t)
    elif args.policy == "learned":
        detector = TwoStageDetector(*_load_models(args), _threshold(args, settings))
        items = [(float(t), (float(t), row)) for t, row in zip(states.t, states.values)]

        def consume(item):
            t, row = item
            return detector.push(t, row), t
    else:
        planned = random_policy(duration, policy_rng, random_rate(settings))
        items = [(d.t, d) for d in planned]

        def consume(item):
            return item, item.t

    sink = open(args.out, "w", encoding="utf-8") if args.out else None

    def emit(records):
        for rec in records:
            line = json.dumps(rec)
            sys.stdout.write(line + "\n")
            if sink:
                sink.write(line + "\n")
        if records:
            sys.stdout.flush()
            if sink:
                sink.flush()

    q: "queue.Queue" = queue.Queue(maxsize=256)
    stop = threading.Event()
    worker = threading.Thread(target=_producer, args=(items, args.real_time_factor, t0, q, stop),
                              daemon=True)
    worker.start()
    try:
        while True:
            avail, item = q.get()
            if item is _END:
                break
            decision, horizon = consume(item)
            if decision is not None:
                merger.add(behavior.realize(decision, realize_rng, bcfg))
            emit(merger.release(horizon))
        if args.real_time_factor > 0:
            rest = t0 + args.real_time_factor * duration - time.monotonic()
            if rest > 0:
                time.sleep(rest)
        emit(merger.finish())
    except KeyboardInterrupt:
        stop.set()
        print("stream interrupted; log ends at the last complete record", file=sys.stderr)
        return 130
    finally:
        stop.set()
        if sink:
            sink.close()
    return 0


# ---------------------------------------------------------------------------
# compare

def _policy_names(policies: Sequence[str]) -> List[str]:
    names, seen = [], {}
    for p in policies:
        seen[p] = seen.get(p, 0) + 1
        names.append(p if seen[p] == 1 else f"{p}_{seen[p]}")
    return names


def cmd_compare(args, settings) -> int:
    out = _outdir(args)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    if len(policies) < 2:
        raise UsageError("compare needs at least two policies")
    for p in policies:
        if p not in POLICIES:
            raise UsageError(f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
    copts = _only(settings["corpus"], ("min_turn_s", "k"), "corpus")
    data = pipeline.load_corpus(args.manifest, args.cache, float(copts.get("min_turn_s", 1.0)))
    models = _load_models(args) if "learned" in policies else None

    summary = {}
    rate_dir = os.path.join(out, "rates")
    os.makedirs(rate_dir, exist_ok=True)
    for name, policy in zip(_policy_names(policies), policies):
        episodes = []
        per_listener: Dict[str, List[float]] = {}
        durations: Dict[str, float] = {}
        for ci, conv in enumerate(data):
            cache: Dict[str, List[BCDecision]] = {}
            for seq in conv.sequences:
                spk = seq.segment.speaker_id
                if spk not in cache:
                    rng = _rngs(args.seed, policy, ci, spk)[0]
                    if policy == "naive":
                        cache[spk] = heuristic.run_stream(conv.prosody[spk], rng, heuristic_config(settings))
                    elif policy == "learned":
                        cache[spk] = predict_events(*models, conv.states[spk], _threshold(args, settings))
                    else:
                        cache[spk] = random_policy(conv.duration, rng, random_rate(settings))
                lo, hi = seq.origin, seq.origin + len(seq) * dsp.STEP_S
                pred = [d.t for d in cache[spk] if lo <= d.t < hi]
                lid = seq.segment.listener_id
                episodes.append(metrics.EpisodeResult(lid, pred, list(map(float, seq.onsets)),
                                                      seq.origin, len(seq)))
                per_listener.setdefault(lid, []).extend(pred)
                durations[lid] = conv.duration
        report = metrics.build_report(episodes).to_dict()
        summary[name] = report
        for lid in sorted(per_listener):
            series = metrics.bc_rate_series(per_listener[lid], durations[lid])
            with open(os.path.join(rate_dir, f"{name}_{lid}.csv"), "w", encoding="utf-8") as fh:
                metrics.write_rate_series_csv(series, fh)
        m = report["margin"]
        print(f"{name:10s} margin P={m['precision']:.3f} R={m['recall']:.3f} F1={m['f1']:.3f}",
              file=sys.stderr)
    write_json(os.path.join(out, "compare.json"), {"policies": policies, "reports": summary})
    return 0


# ---------------------------------------------------------------------------
# metrics

def cmd_metrics(args, settings) -> int:
    out = _outdir(args)
    with open(args.events, encoding="utf-8") as fh:
        records = behavior.read_event_log(fh)
    pred = [float(r["t"]) for r in records if r.get("kind") == "bc"]
    result: dict = {}
    clip = dsp.read_wav(args.audio) if args.audio else None
    duration = args.duration
    if duration is None:
        duration = clip.duration if clip is not None else max(pred + [0.0])
    if args.truth:
        track = _read_track(args.truth, args.listener)
        decisions = [BCDecision(t, "vocal") for t in pred]
        result.update(truth_report(decisions, track, duration).to_dict())
    if clip is not None:
        speech = dsp.vad(clip, **vad_options(settings))
        result["engagement"] = metrics.engagement_metrics(speech, clip.duration)._asdict()
    result["duration_s"] = duration
    result["bc_count"] = len(pred)
    write_json(os.path.join(out, "report.json"), result)
    with open(os.path.join(out, "rate_series.csv"), "w", encoding="utf-8") as fh:
        metrics.write_rate_series_csv(metrics.bc_rate_series(pred, duration), fh)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies default to SUPPRESS so flags given before the
    # subcommand are not overwritten
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d(None),
                        help="random seed (required by stochastic commands)")
    common.add_argument("--config", default=d(None), help="TOML settings file")
    common.add_argument("--set", action="append", default=d([]), metavar="SECTION.KEY=VALUE",
                        help="override one setting; wins over --config")
    common.add_argument("--out", default=d(None), help="output file (extract, stream) or directory")
    common.add_argument("--cache", default=d(None), help="directory for cached feature CSVs")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="backchannel", parents=[_global_flags(False)],
                                     description="Listener backchannel prediction toolkit.")
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="WAV to state-vector CSV and prosody sidecar")
    p.add_argument("audio")
    p.add_argument("--prosody-out", help="sidecar path (default: <out stem>.prosody.csv)")

    p = sub.add_parser("train", parents=[common], help="cross-validated training on a manifest")
    p.add_argument("manifest")
    p.add_argument("--task", choices=T.TASKS, default="timing")
    p.add_argument("--k", type=int, help="number of folds (default 8)")
    p.add_argument("--grid", action="store_true", help="rank the [grid] settings first")
    p.add_argument("--shuffle-labels", action="store_true",
                   help="permute step labels within each segment (no-signal control)")

    def policy_args(p):
        p.add_argument("--policy", choices=POLICIES, default="naive")
        p.add_argument("--timing-model")
        p.add_argument("--type-model")
        p.add_argument("--threshold", type=float)
        p.add_argument("--no-gaze", action="store_true", help="omit the gaze schedule from the log")

    p = sub.add_parser("predict", parents=[common], help="offline decisions for one stream")
    p.add_argument("--features")
    p.add_argument("--prosody")
    p.add_argument("--truth", help="annotation CSV to score against")
    p.add_argument("--listener", help="participant whose backchannels are the truth")
    policy_args(p)

    p = sub.add_parser("stream", parents=[common], help="paced replay of a WAV with live events")
    p.add_argument("audio")
    p.add_argument("--real-time-factor", type=float, default=1.0,
                   help="wall seconds per audio second; 0 runs as fast as possible")
    policy_args(p)

    p = sub.add_parser("compare", parents=[common], help="score several policies on a manifest")
    p.add_argument("manifest")
    p.add_argument("--policies", default="naive,learned")
    p.add_argument("--timing-model")
    p.add_argument("--type-model")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("metrics", parents=[common], help="score an event log")
    p.add_argument("events")
    p.add_argument("--truth")
    p.add_argument("--listener")
    p.add_argument("--audio", help="user audio for VAD engagement metrics")
    p.add_argument("--duration", type=float)
    return parser


COMMANDS = {"extract": cmd_extract, "train": cmd_train, "predict": cmd_predict,
            "stream": cmd_stream, "compare": cmd_compare, "metrics": cmd_metrics}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in STOCHASTIC and args.seed is None:
            raise UsageError(f"{args.command} is stochastic; pass --seed")
        settings = load_settings(args.config, args.set)
        return COMMANDS[args.command](args, settings)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except (ValueError, OSError, KeyError) as exc:
        print(f"backchannel {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"backchannel {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
