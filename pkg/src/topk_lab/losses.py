"""Top-k loss and the comp-sum / constrained surrogate kernels.

Every surrogate is written as a batched kernel over a score matrix ``S`` of
shape ``(m, n)`` and 0-based targets ``y0`` of shape ``(m,)``; the scalar
functions with 1-based labels are thin wrappers around those kernels.

Comp-sum losses are evaluated through ``L = logsumexp(s) - s_y`` (the
logistic loss), from which

* logistic      ``L``
* sum-exp       ``expm1(L)``
* MAE           ``-expm1(-L)``
* GCE           ``-expm1(-alpha L) / alpha``

and each gradient equals ``w * (softmax(s) - onehot(y))`` with the
per-family weight ``w`` in ``{1, exp(L), S_y, S_y ** alpha}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import _check_k, _check_label, as_scores, label_ranks

COMP_FAMILIES = ("comp_log", "comp_exp", "comp_mae", "comp_gce")
CSTND_FAMILIES = ("cstnd_exp", "cstnd_sq_hinge", "cstnd_hinge", "cstnd_rho")
FAMILIES = COMP_FAMILIES + CSTND_FAMILIES

DEFAULT_ALPHA = 0.7
DEFAULT_RHO = 1.0

#: Tolerance on ``sum(s) == 0`` when a constrained loss is evaluated.
CONSTRAINT_TOL = 1e-9


@dataclass(frozen=True)
class LossKind:
    family: str
    alpha: float = DEFAULT_ALPHA
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.family == "comp_gce" and not 0.0 < self.alpha < 1.0:
            raise ValueError("GCE needs alpha in (0, 1)")
        if self.family == "cstnd_rho" and not self.rho > 0.0:
            raise ValueError("rho-margin loss needs rho > 0")

    @property
    def is_comp(self) -> bool:
        return self.family in COMP_FAMILIES

    @property
    def is_constrained(self) -> bool:
        return self.family in CSTND_FAMILIES

    # scalar API, 1-based labels
    def value(self, s, y: int) -> float:
        if self.is_comp:
            return comp_sum_loss(self, s, y)
        return constrained_loss(self, s, y)

    def grad(self, s, y: int) -> np.ndarray:
        if self.is_comp:
            return comp_sum_grad(self, s, y)
        return constrained_grad(self, s, y)

    def all_values(self, s) -> np.ndarray:
        """Loss for every possible target label, as a length-n vector."""
        s = np.asarray(s, dtype=np.float64)
        n = s.size
        S = np.broadcast_to(s, (n, n))
        return kernel_values(self, S, np.arange(n))

    def __str__(self):
        if self.family == "comp_gce":
            return f"comp_gce(alpha={self.alpha:g})"
        if self.family == "cstnd_rho":
            return f"cstnd_rho(rho={self.rho:g})"
        return self.family


def loss_kind(spec) -> LossKind:
    """Accept a ``LossKind``, a family name, or a dict with family/alpha/rho."""
    if isinstance(spec, LossKind):
        return spec
    if isinstance(spec, str):
        return LossKind(spec)
    return LossKind(**spec)


@dataclass(frozen=True)
class TopKLoss:
    """The 0/1 top-k loss, shaped like a ``LossKind`` for the oracle."""

    k: int

    def value(self, s, y: int) -> float:
        return float(topk_loss(s, y, self.k))

    def all_values(self, s) -> np.ndarray:
        s = as_scores(s)
        _check_k(self.k, s.size)
        from .core import descending_order

        miss = np.ones(s.size)
        miss[descending_order(s)[: self.k]] = 0.0
        return miss

    def __str__(self):
        return f"top{self.k}"


def topk_loss(s, y: int, k: int) -> int:
    s = as_scores(s)
    y = _check_label(y, s.size)
    k = _check_k(k, s.size)
    return int(label_ranks(s[None, :], np.array([y - 1]))[0] >= k)


def topk_miss(S: np.ndarray, y0: np.ndarray, k) -> np.ndarray:
    """Batched top-k loss; ``k`` may be a scalar or a per-row array."""
    return (label_ranks(S, y0) >= np.asarray(k)).astype(np.float64)


# --------------------------------------------------------------------------
# comp-sum kernels

def _log_softmax_parts(S: np.ndarray, y0: np.ndarray):
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    rows = np.arange(S.shape[0])
    mx = S.max(axis=1, keepdims=True)
    e = np.exp(S - mx)
    Z = e.sum(axis=1, keepdims=True)
    soft = e / Z
    # L = logsumexp(s) - s_y, computed relative to the max for stability
    L = np.log(Z[:, 0]) + mx[:, 0] - S[rows, y0]
    return soft, np.maximum(L, 0.0), rows


def _comp_from_L(kind: LossKind, L: np.ndarray) -> np.ndarray:
    f = kind.family
    if f == "comp_log":
        return L
    if f == "comp_exp":
        return np.expm1(L)
    if f == "comp_mae":
        return -np.expm1(-L)
    return -np.expm1(-kind.alpha * L) / kind.alpha


def _comp_weight(kind: LossKind, L: np.ndarray) -> np.ndarray:
    f = kind.family
    if f == "comp_log":
        return np.ones_like(L)
    if f == "comp_exp":
        return np.exp(L)
    if f == "comp_mae":
        return np.exp(-L)
    return np.exp(-kind.alpha * L)


def comp_values(kind: LossKind, S, y0) -> np.ndarray:
    _, L, _ = _log_softmax_parts(S, np.asarray(y0))
    return _comp_from_L(kind, L)


def comp_grads(kind: LossKind, S, y0):
    """Values and gradients of a comp-sum loss for a batch."""
    y0 = np.asarray(y0)
    soft, L, rows = _log_softmax_parts(S, y0)
    g = soft.copy()
    g[rows, y0] -= 1.0
    g *= _comp_weight(kind, L)[:, None]
    return _comp_from_L(kind, L), g


# --------------------------------------------------------------------------
# constrained kernels: sum_{y' != y} Phi(-s_y')

def _phi_neg(kind: LossKind, S: np.ndarray) -> np.ndarray:
    f = kind.family
    if f == "cstnd_exp":
        return np.exp(S)
    if f == "cstnd_sq_hinge":
        return np.maximum(0.0, 1.0 + S) ** 2
    if f == "cstnd_hinge":
        return np.maximum(0.0, 1.0 + S)
    return np.clip(1.0 + S / kind.rho, 0.0, 1.0)


def _phi_neg_prime(kind: LossKind, S: np.ndarray) -> np.ndarray:
    """d/ds Phi(-s); inactive branch (0) exactly at kinks."""
    f = kind.family
    if f == "cstnd_exp":
        return np.exp(S)
    if f == "cstnd_sq_hinge":
        return 2.0 * np.maximum(0.0, 1.0 + S)
    if f == "cstnd_hinge":
        return (1.0 + S > 0.0).astype(np.float64)
    u = 1.0 + S / kind.rho
    return ((u > 0.0) & (u < 1.0)) / kind.rho


def constrained_values(kind: LossKind, S, y0) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    y0 = np.asarray(y0)
    phi = _phi_neg(kind, S)
    rows = np.arange(S.shape[0])
    return phi.sum(axis=1) - phi[rows, y0]


def constrained_grads(kind: LossKind, S, y0):
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    y0 = np.asarray(y0)
    rows = np.arange(S.shape[0])
    phi = _phi_neg(kind, S)
    g = _phi_neg_prime(kind, S)
    g[rows, y0] = 0.0
    return phi.sum(axis=1) - phi[rows, y0], g


def kernel_values(kind: LossKind, S, y0) -> np.ndarray:
    if kind.is_comp:
        return comp_values(kind, S, y0)
    return constrained_values(kind, S, y0)


def kernel_grads(kind: LossKind, S, y0):
    if kind.is_comp:
        return comp_grads(kind, S, y0)
    return constrained_grads(kind, S, y0)


# --------------------------------------------------------------------------
# scalar API

def _require_comp(kind: LossKind):
    if not kind.is_comp:
        raise ValueError(f"{kind.family} is not a comp-sum loss")


def _require_cstnd(kind: LossKind, s: np.ndarray):
    if not kind.is_constrained:
        raise ValueError(f"{kind.family} is not a constrained loss")
    if abs(s.sum()) > CONSTRAINT_TOL:
        raise ValueError(f"constrained loss needs sum(scores) == 0, got {s.sum():.3g}")


def comp_sum_loss(kind: LossKind, s, y: int) -> float:
    _require_comp(kind)
    s = as_scores(s)
    y = _check_label(y, s.size)
    return float(comp_values(kind, s[None, :], np.array([y - 1]))[0])


def comp_sum_grad(kind: LossKind, s, y: int) -> np.ndarray:
    _require_comp(kind)
    s = as_scores(s)
    y = _check_label(y, s.size)
    return comp_grads(kind, s[None, :], np.array([y - 1]))[1][0]


def constrained_loss(kind: LossKind, s, y: int) -> float:
    s = as_scores(s)
    _require_cstnd(kind, s)
    y = _check_label(y, s.size)
    return float(constrained_values(kind, s[None, :], np.array([y - 1]))[0])


def constrained_grad(kind: LossKind, s, y: int) -> np.ndarray:
    """Gradient of the unconstrained expression; the caller projects."""
    s = as_scores(s)
    _require_cstnd(kind, s)
    y = _check_label(y, s.size)
    return constrained_grads(kind, s[None, :], np.array([y - 1]))[1][0]


def near_kink(kind: LossKind, s, margin: float = 1e-3) -> bool:
    """True when any score sits within ``margin`` of a hinge breakpoint."""
    s = np.asarray(s, dtype=np.float64)
    if kind.family in ("cstnd_hinge", "cstnd_sq_hinge"):
        return bool(np.any(np.abs(1.0 + s) < margin))
    if kind.family == "cstnd_rho":
        return bool(np.any(np.abs(s + kind.rho) < margin) or np.any(np.abs(s) < margin))
    return False
