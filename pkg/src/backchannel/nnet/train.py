"""Windowed mini-batch training, participant-disjoint cross-validation and
hyperparameter ranking for the timing and type classifiers."""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..corpus import FoldSplit, LabeledSequence, TYPE_CLASSES
from ..dsp import N_STATE, apply_norm, fit_norm
from ..errors import ConfigurationError, InsufficientDataError
from ..metrics import EpisodeResult, MetricsReport, Scores, build_report, macro_metrics
from .augment import augment as augment_sequence
from .losses import data_loss, l2_penalty
from .model import RecurrentModel, backward, forward, init_model, predict_proba
from .optim import make_optimizer, optimize_step

log = logging.getLogger(__name__)

TASKS = ("timing", "type")
GRID = {
    "cell_kind": ("gru", "lstm"),
    "lookback": (5, 10, 15),
    "activation": ("sigmoid", "relu", "softmax"),
    "batch_size": (8, 16, 32),
    "dropout": (0.0, 0.2, 0.4),
    "l2": (0.1, 0.01, 0.001, 0.0001),
    "loss": ("focal", "mse", "bce", "hinge"),
    "optimizer": ("sgd", "adam"),
    "augment": (False, True),
}


@dataclass(frozen=True)
class TrainConfig:
    cell_kind: str = "gru"
    lookback: int = 5
    activation: str = "sigmoid"
    batch_size: int = 16
    dropout: float = 0.0
    l2: float = 0.0001
    loss: str = "focal"
    optimizer: str = "adam"
    max_epochs: int = 100
    patience: int = 10
    augment: bool = True
    seed: int = 0
    hidden_dim: int = 64
    lr: Optional[float] = None
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    threshold: float = 0.5

    def __post_init__(self):
        for name, allowed in GRID.items():
            if getattr(self, name) not in allowed:
                raise ConfigurationError(f"{name}={getattr(self, name)!r} not in {allowed}")
        if not 1 <= self.max_epochs <= 100:
            raise ConfigurationError("max_epochs must be between 1 and 100")
        if self.patience < 0:
            raise ConfigurationError("patience must be non-negative")
        if self.hidden_dim < 1:
            raise ConfigurationError("hidden_dim must be positive")
        if self.activation == "relu" and self.loss in ("focal", "bce"):
            raise ConfigurationError(f"{self.loss} loss needs probabilities; relu head is unbounded")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# default configurations for the timing and type tasks
TIMING_CONFIG = TrainConfig(lookback=5, activation="sigmoid", batch_size=16, dropout=0.0,
                            loss="focal", optimizer="adam")
TYPE_CONFIG = TrainConfig(lookback=10, activation="sigmoid", batch_size=32, dropout=0.2,
                          loss="mse", optimizer="sgd")


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    stop_epoch: int = 0
    stop_reason: str = "max_epochs"
    best_epoch: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# windows

def out_dim(task: str) -> int:
    if task not in TASKS:
        raise ConfigurationError(f"task must be one of {TASKS}, got {task!r}")
    return 1 if task == "timing" else len(TYPE_CLASSES)


def windows(values: np.ndarray, lookback: int) -> np.ndarray:
    """Trailing windows ending at steps ``lookback - 1 .. n - 1``: ``(n - L + 1, L, d)``."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < lookback:
        return np.zeros((0, lookback, values.shape[1] if values.ndim == 2 else N_STATE))
    return np.ascontiguousarray(sliding_window_view(values, lookback, axis=0).transpose(0, 2, 1))


def make_examples(seqs: Sequence[LabeledSequence], lookback: int, task: str,
                  normalise=None) -> Tuple[np.ndarray, np.ndarray]:
    """Stack training windows and targets for a task.

    Timing targets are the per-step 0/1 label; type examples exist only at
    timing-positive steps and carry one-hot targets.
    """
    xs, ys = [], []
    for seq in seqs:
        values = normalise(seq.values) if normalise is not None else seq.values
        w = windows(values, lookback)
        if len(w) == 0:
            continue
        timing = seq.timing[lookback - 1:]
        if task == "timing":
            xs.append(w)
            ys.append(timing[:, None].astype(np.float64))
        else:
            pos = timing == 1
            if pos.any():
                xs.append(w[pos])
                ys.append(np.eye(len(TYPE_CLASSES))[seq.types[lookback - 1:][pos]])
    d = out_dim(task)
    if not xs:
        return np.zeros((0, lookback, N_STATE)), np.zeros((0, d))
    return np.concatenate(xs), np.concatenate(ys)


# ---------------------------------------------------------------------------
# gradients and training

def gradients(model: RecurrentModel, X: np.ndarray, Y: np.ndarray, loss_kind: str,
              l2: float = 0.0, rng: Optional[np.random.Generator] = None,
              mask: Optional[np.ndarray] = None, training: bool = True,
              alpha: float = 0.25, gamma: float = 2.0) -> Tuple[float, Dict[str, np.ndarray]]:
    """Total loss (data + L2) and exact gradients by backpropagation through time."""
    out, cache = forward(model, X, training=training, rng=rng, mask=mask)
    value, d_out = data_loss(out, Y, loss_kind, alpha, gamma)
    grads = backward(model, cache, d_out)
    if l2:
        kernels = model.kernels()
        for k in kernels:
            grads[k] += 2.0 * l2 * model.params[k]
        value += l2_penalty((model.params[k] for k in kernels), l2)
    return value, grads


def evaluate_loss(model: RecurrentModel, X: np.ndarray, Y: np.ndarray, config: TrainConfig) -> float:
    out = predict_proba(model, X)
    value, _ = data_loss(out, Y, config.loss, config.focal_alpha, config.focal_gamma)
    return value + l2_penalty((model.params[k] for k in model.kernels()), config.l2)


def normalised(seqs: Sequence[LabeledSequence], stats) -> List[LabeledSequence]:
    return [s.with_values(apply_norm(s.values, stats)) for s in seqs]


def train_model(task: str, train_seqs: Sequence[LabeledSequence],
                val_seqs: Sequence[LabeledSequence], config: TrainConfig,
                source: str = "") -> Tuple[RecurrentModel, TrainHistory]:
    """Fit one model on raw (unnormalised) sequences.

    Normalisation statistics come from ``train_seqs`` only and are stored on
    the model. Training stops at ``max_epochs`` or once the training or the
    validation loss has failed to improve for more than ``patience``
    consecutive epochs; the weights of the best validation epoch are kept.
    """
    rng = np.random.default_rng(config.seed)
    stats = fit_norm([s.values for s in train_seqs], source=source)
    train_n = normalised(train_seqs, stats)
    if config.augment:
        train_n = train_n + [augment_sequence(s, rng) for s in train_n]
    X, Y = make_examples(train_n, config.lookback, task)
    if len(X) == 0:
        raise InsufficientDataError(f"no {task} training examples (lookback {config.lookback})")
    if task == "type" and len(np.unique(Y.argmax(axis=1))) < 2:
        log.warning("type training data covers a single class")
    Xv, Yv = make_examples(normalised(val_seqs, stats), config.lookback, task)

    model = init_model(config.cell_kind, config.hidden_dim, out_dim(task), config.activation,
                       config.dropout, config.lookback, rng, norm_stats=stats,
                       threshold=config.threshold, config={"task": task, **config.to_dict()},
                       seed=config.seed)
    opt = make_optimizer(config.optimizer, config.lr)
    history = TrainHistory()
    best_val = best_train = np.inf
    wait_val = wait_train = 0
    best_params = {k: v.copy() for k, v in model.params.items()}

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(X))
        losses = []
        for lo in range(0, len(X), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            value, grads = gradients(model, X[idx], Y[idx], config.loss, config.l2, rng=rng,
                                     alpha=config.focal_alpha, gamma=config.focal_gamma)
            optimize_step(model.params, grads, opt)
            losses.append(value)
        train_loss = float(np.mean(losses))
        val_loss = evaluate_loss(model, Xv, Yv, config) if len(Xv) else train_loss
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.stop_epoch = epoch

        if val_loss < best_val:
            best_val, wait_val = val_loss, 0
            history.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            wait_val += 1
        if train_loss < best_train:
            best_train, wait_train = train_loss, 0
        else:
            wait_train += 1
        if wait_val > config.patience:
            history.stop_reason = "early_stop_val"
            break
        if wait_train > config.patience:
            history.stop_reason = "early_stop_loss"
            break

    model.params = best_params
    return model, history


# ---------------------------------------------------------------------------
# evaluation of trained models on labelled sequences

def timing_episodes(model: RecurrentModel, seqs: Sequence[LabeledSequence],
                    threshold: Optional[float] = None) -> List[EpisodeResult]:
    thr = model.threshold if threshold is None else threshold
    out = []
    for seq in seqs:
        preds: List[float] = []
        w = windows(apply_norm(seq.values, model.norm_stats), model.lookback)
        if len(w):
            prob = predict_proba(model, w)[:, 0]
            steps = np.flatnonzero(prob > thr) + model.lookback - 1
            preds = [float(seq.states.start[k]) for k in steps]
        out.append(EpisodeResult(seq.segment.listener_id, preds, list(map(float, seq.onsets)),
                                 seq.origin, len(seq)))
    return out


def evaluate_timing(model: RecurrentModel, seqs: Sequence[LabeledSequence]) -> MetricsReport:
    return build_report(timing_episodes(model, seqs))


def evaluate_type(model: RecurrentModel, seqs: Sequence[LabeledSequence]) -> Tuple[Scores, float, int]:
    """Macro scores, plain accuracy and example count on ground-truth positive steps."""
    X, Y = make_examples(seqs, model.lookback, "type",
                         normalise=lambda v: apply_norm(v, model.norm_stats))
    if len(X) == 0:
        return Scores(0.0, 0.0, 0.0, 0.0), 0.0, 0
    pred = predict_proba(model, X).argmax(axis=1)
    truth = Y.argmax(axis=1)
    return macro_metrics(pred, truth, n_classes=len(TYPE_CLASSES)), float(np.mean(pred == truth)), len(X)


# ---------------------------------------------------------------------------
# cross-validation

def by_listener(seqs: Sequence[LabeledSequence], ids: Sequence[str]) -> List[LabeledSequence]:
    keep = set(ids)
    return [s for s in seqs if s.segment.listener_id in keep]


@dataclass
class FoldResult:
    fold: int
    model: RecurrentModel
    history: TrainHistory
    val: dict
    test: dict


def fold_metrics(task: str, model: RecurrentModel, seqs: Sequence[LabeledSequence]) -> dict:
    if task == "timing":
        return evaluate_timing(model, seqs).to_dict()
    scores, acc, n = evaluate_type(model, seqs)
    return {"macro": scores._asdict(), "plain_accuracy": acc, "n_examples": n}


def cross_validate(task: str, seqs: Sequence[LabeledSequence], split: FoldSplit,
                   config: TrainConfig) -> List[FoldResult]:
    results = []
    for i, fold in enumerate(split.assignments):
        train = by_listener(seqs, fold.train_ids)
        val = by_listener(seqs, fold.val_ids)
        test = by_listener(seqs, fold.test_ids)
        model, history = train_model(task, train, val, replace(config, seed=config.seed + i),
                                     source=f"fold{i}")
        results.append(FoldResult(i, model, history, fold_metrics(task, model, val),
                                  fold_metrics(task, model, test)))
        log.info("fold %d: stop %s at epoch %d", i, history.stop_reason, history.stop_epoch)
    return results


def mean_metrics(dicts: Sequence[dict], section: str) -> dict:
    keys = dicts[0][section].keys()
    return {k: float(np.mean([d[section][k] for d in dicts])) for k in keys}


# ---------------------------------------------------------------------------
# grid search

def expand_grid(grid: Dict[str, Sequence], base: TrainConfig = TrainConfig()) -> List[TrainConfig]:
    """All combinations of ``grid`` over ``base``; incompatible ones are skipped."""
    names = list(grid)
    out = []
    for combo in itertools.product(*(grid[n] for n in names)):
        try:
            out.append(replace(base, **dict(zip(names, combo))))
        except ConfigurationError as exc:
            log.info("skipping config: %s", exc)
    return out


def top_k_counts(tables: Sequence[Sequence[Dict[str, float]]], metrics: Sequence[str],
                 top_k: int = 3) -> np.ndarray:
    n = len(tables)
    counts = np.zeros(n, dtype=int)
    for f in range(len(tables[0]) if n else 0):
        for m in metrics:
            for c in sorted(range(n), key=lambda c: (-tables[c][f][m], c))[:top_k]:
                counts[c] += 1
    return counts


def rank_configs(tables: Sequence[Sequence[Dict[str, float]]], metrics: Sequence[str],
                 top_k: int = 3) -> List[int]:
    """Order configs by how often they land in the top ``top_k`` per (fold, metric).

    ``tables[c][f][m]`` is metric ``m`` of config ``c`` on fold ``f``. Ties
    break on mean F1 (higher first), then on config order.
    """
    n = len(tables)
    if n == 0:
        return []
    counts = top_k_counts(tables, metrics, top_k)
    mean_f1 = [np.mean([row.get("f1", 0.0) for row in tables[c]]) for c in range(n)]
    return sorted(range(n), key=lambda c: (-counts[c], -mean_f1[c], c))


def validation_scores(task: str, model: RecurrentModel, seqs: Sequence[LabeledSequence]) -> Dict[str, float]:
    if task == "timing":
        r = evaluate_timing(model, seqs)
        return r.macro._asdict()
    return evaluate_type(model, seqs)[0]._asdict()


@dataclass
class RankedConfig:
    config: TrainConfig
    top_count: int
    mean_scores: Dict[str, float]


def grid_search(grid: Sequence[TrainConfig], task: str = "timing",
                seqs: Sequence[LabeledSequence] = (), split: Optional[FoldSplit] = None,
                metric_priorities: Sequence[str] = ("accuracy", "f1"),
                evaluate: Optional[Callable[[TrainConfig, int], Dict[str, float]]] = None,
                top_k: int = 3) -> List[RankedConfig]:
    """Rank configurations by validation-fold performance.

    ``evaluate(config, fold)`` returns a metric dict; by default each config
    is trained on the fold's training participants and scored on its
    validation participants.
    """
    grid = list(grid)
    if not grid:
        raise ConfigurationError("grid is empty")
    if evaluate is None:
        if split is None:
            raise ConfigurationError("grid_search needs folds or an evaluate callback")

        def evaluate(cfg, f):
            fold = split.assignments[f]
            model, _ = train_model(task, by_listener(seqs, fold.train_ids),
                                   by_listener(seqs, fold.val_ids), replace(cfg, seed=cfg.seed + f))
            return validation_scores(task, model, by_listener(seqs, fold.val_ids))
        n_folds = split.k
    else:
        n_folds = split.k if split is not None else 1

    tables = [[evaluate(cfg, f) for f in range(n_folds)] for cfg in grid]
    order = rank_configs(tables, metric_priorities, top_k)
    counts = top_k_counts(tables, metric_priorities, top_k)
    return [RankedConfig(grid[c], int(counts[c]),
                         {k: float(np.mean([row[k] for row in tables[c]])) for k in tables[c][0]})
            for c in order]
