"""Numpy models, backpropagation, Adam and the two training loops.

``linear`` computes ``W x + b``; ``mlp2`` is ``W3 relu(W2 relu(W1 x + b1) + b2) + b3``.
Weights are stored as ``(out, in)`` matrices and batches as rows, so a layer
maps ``X -> X @ W.T + b``.

Constrained losses see centered scores ``s - mean(s)``, which always sum
to zero; the gradient of that composition is the loss gradient projected
onto the zero-sum subspace.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import CardinalitySet, Dataset, doubling_schedule, ranks, stream
from .costsens import CostSpec, cost_rows, cs_kernel_grads, cs_kernel_values
from .losses import LossKind, kernel_grads, kernel_values, loss_kind

CHECKPOINT_FORMAT = "topk_lab.model"
CHECKPOINT_VERSION = 1
MODEL_KINDS = ("linear", "mlp2")


@dataclass
class Model:
    kind: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        depth = 1 if self.kind == "linear" else 3
        if len(self.weights) != depth or len(self.biases) != depth:
            raise ValueError(f"{self.kind} needs {depth} layers")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {i} has inconsistent shapes")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input does not match layer {i - 1} output")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def hidden_dim(self) -> int | None:
        return self.weights[0].shape[0] if self.kind == "mlp2" else None

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Model":
        return Model(self.kind, [W.copy() for W in self.weights],
                     [b.copy() for b in self.biases], dict(self.meta))


def init_model(kind: str, in_dim: int, out_dim: int, rng: np.random.Generator,
               hidden_dim: int = 64) -> Model:
    """Glorot-uniform weights, zero biases."""
    if kind == "linear":
        dims = [in_dim, out_dim]
    elif kind == "mlp2":
        dims = [in_dim, hidden_dim, hidden_dim, out_dim]
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    Ws, bs = [], []
    for fan_in, fan_out in zip(dims, dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Model(kind, Ws, bs)


def _as_batch(model: Model, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.in_dim:
        raise ValueError(f"feature dimension {X.shape[1]} != model input {model.in_dim}")
    return X, single


def _forward_cache(model: Model, X: np.ndarray):
    acts = [X]
    pre = []
    h = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward(model: Model, x) -> np.ndarray:
    X, single = _as_batch(model, x)
    out = _forward_cache(model, X)[0][-1]
    return out[0] if single else out


def backward_scores(model: Model, X: np.ndarray, dS: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients given ``dS``, the gradient w.r.t. output scores."""
    acts, pre = _forward_cache(model, X)
    grads_W = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    delta = dS
    for i in range(len(model.weights) - 1, -1, -1):
        grads_W[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0.0)
    out = []
    for gW, gb in zip(grads_W, grads_b):
        out += [gW, gb]
    return out


# --------------------------------------------------------------------------
# objectives: mean loss over a batch and its gradient w.r.t. scores

def _center(S: np.ndarray) -> np.ndarray:
    return S - S.mean(axis=1, keepdims=True)


@dataclass
class StandardObjective:
    kind: LossKind
    labels0: np.ndarray

    def values(self, S: np.ndarray, idx: np.ndarray) -> np.ndarray:
        if self.kind.is_constrained:
            S = _center(S)
        return kernel_values(self.kind, S, self.labels0[idx])

    def __call__(self, S: np.ndarray, idx: np.ndarray):
        if self.kind.is_constrained:
            v, g = kernel_grads(self.kind, _center(S), self.labels0[idx])
            g = _center(g)
        else:
            v, g = kernel_grads(self.kind, S, self.labels0[idx])
        return v, g


@dataclass
class CostSensitiveObjective:
    kind: LossKind
    costs: np.ndarray  # (m, |K|)

    def values(self, R: np.ndarray, idx: np.ndarray) -> np.ndarray:
        if self.kind.is_constrained:
            R = _center(R)
        return cs_kernel_values(self.kind, R, self.costs[idx])

    def __call__(self, R: np.ndarray, idx: np.ndarray):
        if self.kind.is_constrained:
            v, g = cs_kernel_grads(self.kind, _center(R), self.costs[idx])
            g = _center(g)
        else:
            v, g = cs_kernel_grads(self.kind, R, self.costs[idx])
        return v, g


def batch_loss_and_grads(model: Model, X: np.ndarray, objective: Callable, idx: np.ndarray):
    """Mean loss over the batch and its parameter gradients."""
    S = _forward_cache(model, X)[0][-1]
    v, dS = objective(S, idx)
    m = X.shape[0]
    return float(v.mean()), backward_scores(model, X, dS / m)


def backward(model: Model, x, y, kind) -> list[np.ndarray]:
    """Gradients of the mean standard loss for features ``x`` and 1-based ``y``."""
    X, _ = _as_batch(model, x)
    y0 = np.atleast_1d(np.asarray(y, dtype=np.int64)) - 1
    obj = StandardObjective(loss_kind(kind), y0)
    return batch_loss_and_grads(model, X, obj, np.arange(X.shape[0]))[1]


# --------------------------------------------------------------------------
# optimizer

@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 128
    weight_decay: float = 1e-5
    epochs: int = 100
    seed: int = 0
    loss: LossKind = field(default_factory=lambda: LossKind("comp_log"))
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    decoupled_decay: bool = True
    model: str = "linear"
    hidden_dim: int = 64

    def __post_init__(self):
        self.loss = loss_kind(self.loss)
        # lr == 0 is allowed so a frozen run can be expressed
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model!r}")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray],
              cfg: TrainConfig) -> None:
    """One in-place Adam update with weight decay."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and state lists differ in length")
    state.t += 1
    b1, b2, lr, wd = cfg.beta1, cfg.beta2, cfg.lr, cfg.weight_decay
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape does not match its parameter")
        if cfg.decoupled_decay:
            p *= 1.0 - lr * wd
        else:
            g = g + wd * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps_adam)


def _check_finite(model: Model, epoch: int, step: int):
    for i, p in enumerate(model.params()):
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(
                f"non-finite parameter in tensor {i} at epoch {epoch}, step {step}"
            )


def fit(model: Model, X: np.ndarray, objective, cfg: TrainConfig,
        on_epoch: Callable[[int, Model], bool | None] | None = None) -> Model:
    """Mini-batch Adam on ``objective``; batches are reshuffled every epoch.

    Training stops early when ``on_epoch`` returns a true value.
    """
    m = X.shape[0]
    state = AdamState.zeros_like(model.params())
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = stream(cfg.seed, "shuffle", epoch).permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grads = batch_loss_and_grads(model, X[idx], objective, idx)
            params = model.params()
            adam_step(state, params, grads, cfg)
            step += 1
        _check_finite(model, epoch, step)
        if on_epoch is not None and on_epoch(epoch, model):
            break
    return model


def topk_accuracies(S: np.ndarray, labels0: np.ndarray, ks: Sequence[int]) -> dict[int, float]:
    r = ranks(S)[np.arange(S.shape[0]), labels0]
    return {int(k): float(np.mean(r < k)) for k in ks}


def train_base(ds: Dataset, cfg: TrainConfig, ks: Sequence[int] = (1,),
               history: list | None = None) -> Model:
    """Train the base scorer; per-epoch loss and top-k accuracies go to ``history``."""
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    ks = [k for k in ks if k <= ds.n]
    model = init_model(cfg.model, ds.dim, ds.n, stream(cfg.seed, "init"), cfg.hidden_dim)
    obj = StandardObjective(cfg.loss, ds.labels0)
    all_idx = np.arange(len(ds))

    def log(epoch, mdl):
        if history is None:
            return
        S = forward(mdl, ds.features)
        row = {"epoch": epoch, "loss": float(obj.values(S, all_idx).mean())}
        for k, acc in topk_accuracies(S, ds.labels0, ks).items():
            row[f"top{k}_acc"] = acc
        history.append(row)

    fit(model, ds.features, obj, cfg, log)
    model.meta.update({"role": "base", "loss": str(cfg.loss), "n": ds.n})
    return model


def selector_costs(ds: Dataset, base: Model, spec: CostSpec) -> np.ndarray:
    return cost_rows(spec, forward(base, ds.features), ds.labels0)


def chosen_indices(R: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties going to the larger cardinality."""
    R = np.atleast_2d(R)
    return R.shape[1] - 1 - np.argmax(R[:, ::-1], axis=1)


def train_selector(ds: Dataset, base: Model, spec: CostSpec, cfg: TrainConfig,
                   history: list | None = None) -> Model:
    """Train an ``mlp2`` cardinality selector against a frozen base model."""
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    if spec.kset.max > ds.n:
        raise ValueError("cardinality set exceeds the number of classes")
    costs = selector_costs(ds, base, spec)
    obj = CostSensitiveObjective(cfg.loss, costs)
    model = init_model("mlp2", ds.dim, len(spec.kset), stream(cfg.seed, "init"), cfg.hidden_dim)
    all_idx = np.arange(len(ds))

    def log(epoch, mdl):
        if history is None:
            return
        R = forward(mdl, ds.features)
        acc, card = _metrics_from(costs_miss(ds, base, spec), spec, R)
        history.append({"epoch": epoch, "loss": float(obj.values(R, all_idx).mean()),
                        "accuracy": acc, "avg_cardinality": card})

    fit(model, ds.features, obj, cfg, log)
    model.meta.update({"role": "selector", "loss": str(cfg.loss), "kset": list(spec.kset.ks),
                       "lam": spec.lam, "penalty": spec.penalty})
    return model


def costs_miss(ds: Dataset, base: Model, spec: CostSpec) -> np.ndarray:
    """Top-k miss indicator for every example and candidate k, ``(m, |K|)``."""
    S = forward(base, ds.features)
    r = ranks(S)[np.arange(len(ds)), ds.labels0]
    return (r[:, None] >= np.asarray(spec.kset.ks)[None, :]).astype(np.float64)


def _metrics_from(miss: np.ndarray, spec: CostSpec, R: np.ndarray) -> tuple[float, float]:
    j = chosen_indices(R)
    rows = np.arange(miss.shape[0])
    acc = float(np.mean(1.0 - miss[rows, j]))
    card = float(np.mean(np.asarray(spec.kset.ks)[j]))
    return acc, card


def selector_metrics(ds: Dataset, base: Model, selector: Model, spec: CostSpec) -> tuple[float, float]:
    """(accuracy of the selected top-k set, mean selected k) over ``ds``."""
    if len(ds) == 0:
        raise ValueError("metrics need at least one example")
    return _metrics_from(costs_miss(ds, base, spec), spec, forward(selector, ds.features))


# --------------------------------------------------------------------------
# checkpoints

def model_to_dict(model: Model) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "in_dim": model.in_dim,
        "out_dim": model.out_dim,
        "hidden_dim": model.hidden_dim,
        "meta": model.meta,
        "layers": [
            {"shape": list(W.shape), "weight": W.ravel().tolist(), "bias": b.tolist()}
            for W, b in zip(model.weights, model.biases)
        ],
    }


def model_from_dict(d: dict) -> Model:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
    Ws, bs = [], []
    for layer in d["layers"]:
        shape = tuple(layer["shape"])
        Ws.append(np.array(layer["weight"], dtype=np.float64).reshape(shape))
        bs.append(np.array(layer["bias"], dtype=np.float64))
    return Model(d["kind"], Ws, bs, dict(d.get("meta", {})))


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(model: Model, path: str) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_checkpoint(path: str) -> Model:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def default_kset_schedule(n: int, k_max: int | None = None) -> list[CardinalitySet]:
    return doubling_schedule(min(n, k_max) if k_max else n)
