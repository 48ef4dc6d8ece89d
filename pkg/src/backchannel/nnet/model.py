"""Single-layer GRU / LSTM classifiers with dropout and a dense head, in numpy.

Gate updates (row vectors, batch first)::

    GRU   z = sig(x Wz' + h Uz' + bz)      r = sig(x Wr' + h Ur' + br)
          n = tanh(x Wh' + (r*h) Uh' + bh)
          h' = (1 - z) * h + z * n

    LSTM  i, f, o = sig(x W*' + h U*' + b*)   g = tanh(x Wg' + h Ug' + bg)
          c' = f * c + i * g                  h' = o * tanh(c')

The final hidden state goes through inverted dropout (training only), a
dense layer and the output activation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..dsp import N_STATE, NormStats
from ..errors import ConfigurationError, DimensionError

GATES = {"gru": ("z", "r", "h"), "lstm": ("i", "f", "g", "o")}
ACTIVATIONS = ("sigmoid", "relu", "softmax")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class RecurrentModel:
    cell_kind: str
    hidden_dim: int
    out_dim: int
    activation: str
    params: Dict[str, np.ndarray]
    input_dim: int = N_STATE
    dropout: float = 0.0
    lookback: int = 5
    norm_stats: Optional[NormStats] = None
    threshold: float = 0.5
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.cell_kind not in GATES:
            raise ConfigurationError(f"unknown cell kind {self.cell_kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        expected = param_shapes(self.cell_kind, self.input_dim, self.hidden_dim, self.out_dim)
        for name, shape in expected.items():
            if name not in self.params:
                raise DimensionError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise DimensionError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    def kernels(self) -> List[str]:
        """Names of the weight matrices that carry L2 regularisation."""
        return [k for k in self.params if not k.startswith("b_")]

    def copy(self) -> "RecurrentModel":
        return RecurrentModel(
            self.cell_kind, self.hidden_dim, self.out_dim, self.activation,
            {k: v.copy() for k, v in self.params.items()}, self.input_dim, self.dropout,
            self.lookback, self.norm_stats, self.threshold, dict(self.config), self.seed)


def param_shapes(cell_kind: str, input_dim: int, hidden_dim: int, out_dim: int):
    shapes = {}
    for g in GATES[cell_kind]:
        shapes[f"W_{g}"] = (hidden_dim, input_dim)
        shapes[f"U_{g}"] = (hidden_dim, hidden_dim)
        shapes[f"b_{g}"] = (hidden_dim,)
    shapes["W_out"] = (out_dim, hidden_dim)
    shapes["b_out"] = (out_dim,)
    return shapes


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_model(cell_kind: str = "gru", hidden_dim: int = 64, out_dim: int = 1,
               activation: str = "sigmoid", dropout: float = 0.0, lookback: int = 5,
               rng: Optional[np.random.Generator] = None, input_dim: int = N_STATE,
               **extra) -> RecurrentModel:
    """Glorot-uniform kernels, orthogonal recurrent weights, zero biases
    (LSTM forget-gate bias 1)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if cell_kind not in GATES:
        raise ConfigurationError(f"unknown cell kind {cell_kind!r}")
    params = {}
    for g in GATES[cell_kind]:
        params[f"W_{g}"] = _glorot(rng, (hidden_dim, input_dim))
        params[f"U_{g}"] = _orthogonal(rng, hidden_dim)
        params[f"b_{g}"] = np.ones(hidden_dim) if g == "f" else np.zeros(hidden_dim)
    params["W_out"] = _glorot(rng, (out_dim, hidden_dim))
    params["b_out"] = np.zeros(out_dim)
    return RecurrentModel(cell_kind, hidden_dim, out_dim, activation, params,
                          input_dim, dropout, lookback, **extra)


# ---------------------------------------------------------------------------
# forward

def _gru_step(p, x, h):
    z = sigmoid(x @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
    r = sigmoid(x @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
    rh = r * h
    n = np.tanh(x @ p["W_h"].T + rh @ p["U_h"].T + p["b_h"])
    return (1.0 - z) * h + z * n, (x, h, z, r, rh, n)


def _lstm_step(p, x, h, c):
    i = sigmoid(x @ p["W_i"].T + h @ p["U_i"].T + p["b_i"])
    f = sigmoid(x @ p["W_f"].T + h @ p["U_f"].T + p["b_f"])
    g = np.tanh(x @ p["W_g"].T + h @ p["U_g"].T + p["b_g"])
    o = sigmoid(x @ p["W_o"].T + h @ p["U_o"].T + p["b_o"])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (x, h, c, i, f, g, o, tc)


def cell_forward(x: np.ndarray, h, model: RecurrentModel):
    """One recurrent step. For LSTM, ``h`` is an ``(h, c)`` pair and one is returned."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionError(f"input has {x.shape[-1]} features, model expects {model.input_dim}")
    if model.cell_kind == "gru":
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] != model.hidden_dim:
            raise DimensionError(f"hidden state has size {h.shape[-1]}, expected {model.hidden_dim}")
        return _gru_step(model.params, x, h)[0]
    hh, cc = (np.asarray(v, dtype=np.float64) for v in h)
    if hh.shape[-1] != model.hidden_dim or cc.shape[-1] != model.hidden_dim:
        raise DimensionError("LSTM state size does not match hidden_dim")
    h_new, c_new, _ = _lstm_step(model.params, x, hh, cc)
    return h_new, c_new


def dropout_mask(rate: float, shape, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class ForwardCache:
    steps: list
    h_last: np.ndarray
    mask: np.ndarray
    logits: np.ndarray
    out: np.ndarray


def forward(model: RecurrentModel, X: np.ndarray, training: bool = False,
            rng: Optional[np.random.Generator] = None,
            mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, ForwardCache]:
    """Run a batch of windows ``(batch, lookback, input_dim)`` from a zero state."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != model.input_dim:
        raise DimensionError(f"expected (batch, steps, {model.input_dim}) windows, got {X.shape}")
    p = model.params
    B, L, _ = X.shape
    h = np.zeros((B, model.hidden_dim))
    c = np.zeros((B, model.hidden_dim))
    steps = []
    for t in range(L):
        if model.cell_kind == "gru":
            h, cache = _gru_step(p, X[:, t], h)
        else:
            h, c, cache = _lstm_step(p, X[:, t], h, c)
        steps.append(cache)
    if mask is None:
        if training and model.dropout > 0:
            if rng is None:
                raise ConfigurationError("training-mode dropout needs an rng")
            mask = dropout_mask(model.dropout, h.shape, rng)
        else:
            mask = np.ones_like(h)
    hd = h * mask
    logits = hd @ p["W_out"].T + p["b_out"]
    if model.activation == "sigmoid":
        out = sigmoid(logits)
    elif model.activation == "relu":
        out = np.maximum(logits, 0.0)
    else:
        out = softmax(logits)
    return out, ForwardCache(steps, h, mask, logits, out)


def forward_window(window: np.ndarray, model: RecurrentModel, training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Output for one ``(lookback, input_dim)`` window."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] != model.lookback:
        raise DimensionError(
            f"window must be ({model.lookback}, {model.input_dim}), got {window.shape}")
    return forward(model, window[None], training, rng)[0][0]


def predict_proba(model: RecurrentModel, X: np.ndarray, batch: int = 1024) -> np.ndarray:
    """Inference-mode outputs for a stack of windows."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.zeros((0, model.out_dim))
    return np.concatenate([forward(model, X[i:i + batch])[0] for i in range(0, len(X), batch)])


# ---------------------------------------------------------------------------
# backward

def backward(model: RecurrentModel, cache: ForwardCache, d_out: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dOutput."""
    p = model.params
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    out = cache.out
    if model.activation == "sigmoid":
        d_logits = d_out * out * (1.0 - out)
    elif model.activation == "relu":
        d_logits = d_out * (cache.logits > 0)
    else:
        d_logits = out * (d_out - np.sum(d_out * out, axis=1, keepdims=True))
    hd = cache.h_last * cache.mask
    grads["W_out"] = d_logits.T @ hd
    grads["b_out"] = d_logits.sum(axis=0)
    dh = (d_logits @ p["W_out"]) * cache.mask

    if model.cell_kind == "gru":
        for x, h, z, r, rh, n in reversed(cache.steps):
            dz = dh * (n - h)
            da_n = dh * z * (1.0 - n * n)
            dh_prev = dh * (1.0 - z)
            grads["W_h"] += da_n.T @ x
            grads["U_h"] += da_n.T @ rh
            grads["b_h"] += da_n.sum(axis=0)
            d_rh = da_n @ p["U_h"]
            dh_prev += d_rh * r
            da_r = d_rh * h * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            for g, da in (("z", da_z), ("r", da_r)):
                grads[f"W_{g}"] += da.T @ x
                grads[f"U_{g}"] += da.T @ h
                grads[f"b_{g}"] += da.sum(axis=0)
                dh_prev += da @ p[f"U_{g}"]
            dh = dh_prev
    else:
        dc = np.zeros_like(dh)
        for x, h, c, i, f, g, o, tc in reversed(cache.steps):
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            pre = {
                "i": dc * g * i * (1.0 - i),
                "f": dc * c * f * (1.0 - f),
                "g": dc * i * (1.0 - g * g),
                "o": do * o * (1.0 - o),
            }
            dh_prev = np.zeros_like(dh)
            for name, da in pre.items():
                grads[f"W_{name}"] += da.T @ x
                grads[f"U_{name}"] += da.T @ h
                grads[f"b_{name}"] += da.sum(axis=0)
                dh_prev += da @ p[f"U_{name}"]
            dc = dc * f
            dh = dh_prev
    return grads


# ---------------------------------------------------------------------------
# persistence

def model_to_dict(model: RecurrentModel) -> dict:
    return {
        "cell_kind": model.cell_kind,
        "dims": {"input": model.input_dim, "hidden": model.hidden_dim, "output": model.out_dim},
        "lookback": model.lookback,
        "activation": model.activation,
        "dropout": model.dropout,
        "weights": {k: v.tolist() for k, v in model.params.items()},
        "norm_stats": model.norm_stats.to_dict() if model.norm_stats is not None else None,
        "threshold": model.threshold,
        "config": model.config,
        "seed": model.seed,
    }


def model_from_dict(d: dict) -> RecurrentModel:
    try:
        dims = d["dims"]
        return RecurrentModel(
            cell_kind=d["cell_kind"], hidden_dim=int(dims["hidden"]), out_dim=int(dims["output"]),
            activation=d["activation"],
            params={k: np.array(v, dtype=np.float64) for k, v in d["weights"].items()},
            input_dim=int(dims["input"]), dropout=float(d.get("dropout", 0.0)),
            lookback=int(d["lookback"]),
            norm_stats=NormStats.from_dict(d["norm_stats"]) if d.get("norm_stats") else None,
            threshold=float(d.get("threshold", 0.5)), config=d.get("config", {}),
            seed=d.get("seed"))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed model file: missing {exc}") from exc


def save_model(model: RecurrentModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> RecurrentModel:
    with open(path, encoding="utf-8") as fh:
        try:
            return model_from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"model file {path} is not valid JSON: {exc}") from exc
