"""Instance-dependent costs and the cardinality-aware losses built on them.

The cost of answering with the top-k set is the top-k miss indicator plus a
cardinality penalty ``lambda * C(k)``.  Optionally the cost is divided by
``1 + lambda * C(k_max)``, the largest value it can take, so it lies in
[0, 1].

Given the cost rows ``c[k]`` of one example, with ``k`` ranging over the
candidate set:

* target loss           ``c[argmax r]``
* cost-sensitive comp   ``sum_k (1 - c[k]) * comp_loss(r, k)``
* cost-sensitive cstnd  ``sum_k c[k] * Phi(-r[k])``   (with ``sum r == 0``)

Costs are data here: they come from a frozen base model and carry no
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import CardinalitySet, _check_label, argmax_last, as_scores, label_ranks
from .losses import (
    CONSTRAINT_TOL,
    LossKind,
    _comp_from_L,
    _comp_weight,
    _log_softmax_parts,
    _phi_neg,
    _phi_neg_prime,
)

PENALTIES = ("log_k", "linear_k", "table")


@dataclass(frozen=True)
class CostSpec:
    lam: float
    kset: CardinalitySet
    penalty: str = "log_k"
    normalize: bool = True
    table: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.penalty == "table":
            if self.table is None or len(self.table) != len(self.kset):
                raise ValueError("a custom penalty table needs one entry per cardinality")
            object.__setattr__(self, "table", tuple(float(t) for t in self.table))
        pen = self.penalties
        if np.any(pen < 0) or np.any(np.diff(pen) < 0):
            raise ValueError("penalties must be non-negative and non-decreasing in k")

    @property
    def penalties(self) -> np.ndarray:
        """C(k) for every k in the candidate set, in order."""
        ks = np.asarray(self.kset.ks, dtype=np.float64)
        if self.penalty == "log_k":
            return np.log(ks)
        if self.penalty == "linear_k":
            return ks.copy()
        return np.asarray(self.table, dtype=np.float64)

    @property
    def scale(self) -> float:
        return 1.0 + self.lam * float(self.penalties[-1]) if self.normalize else 1.0

    def with_kset(self, kset: CardinalitySet) -> "CostSpec":
        if self.penalty == "table":
            raise ValueError("a custom table is tied to its candidate set")
        return CostSpec(self.lam, kset, self.penalty, self.normalize)


def cost_rows(spec: CostSpec, base_scores: np.ndarray, labels0: np.ndarray) -> np.ndarray:
    """Batched costs, shape ``(m, |K|)``, for base scores ``(m, n)``."""
    S = np.atleast_2d(np.asarray(base_scores, dtype=np.float64))
    rk = label_ranks(S, np.asarray(labels0))
    ks = np.asarray(spec.kset.ks)
    if ks[-1] > S.shape[1]:
        raise ValueError("cardinality exceeds the number of classes")
    miss = (rk[:, None] >= ks[None, :]).astype(np.float64)
    return (miss + spec.lam * spec.penalties[None, :]) / spec.scale


def cost(spec: CostSpec, base_scores, k: int, y: int) -> float:
    s = as_scores(base_scores)
    y = _check_label(y, s.size)
    j = spec.kset.index(k)
    return float(cost_rows(spec, s[None, :], np.array([y - 1]))[0, j])


def cost_matrix(spec: CostSpec, base_scores) -> np.ndarray:
    """Costs for every (k, y) pair of one instance, shape ``(|K|, n)``."""
    s = as_scores(base_scores)
    n = s.size
    return cost_rows(spec, np.broadcast_to(s, (n, n)), np.arange(n)).T


def selected_index(r_scores) -> int:
    """Position in the candidate set chosen by a selector's scores."""
    return argmax_last(as_scores(r_scores))


def target_cardinality_loss(spec: CostSpec, base_scores, r_scores, y: int) -> float:
    r = as_scores(r_scores, len(spec.kset))
    return cost(spec, base_scores, spec.kset.ks[selected_index(r)], y)


# --------------------------------------------------------------------------
# kernels over precomputed cost rows C (m, |K|) and selector scores R (m, |K|)

def cs_comp_values(kind: LossKind, R, C) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    m, K = R.shape
    total = np.zeros(m)
    for j in range(K):
        _, L, _ = _log_softmax_parts(R, np.full(m, j))
        total += (1.0 - C[:, j]) * _comp_from_L(kind, L)
    return total


def cs_comp_grads(kind: LossKind, R, C):
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    m, K = R.shape
    soft = None
    total = np.zeros(m)
    coef = np.zeros((m, K))
    for j in range(K):
        soft, L, _ = _log_softmax_parts(R, np.full(m, j))
        wj = 1.0 - C[:, j]
        total += wj * _comp_from_L(kind, L)
        coef[:, j] = wj * _comp_weight(kind, L)
    # sum_j coef_j * (softmax - e_j)
    g = coef.sum(axis=1, keepdims=True) * soft - coef
    return total, g


def cs_cstnd_values(kind: LossKind, R, C) -> np.ndarray:
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    return (np.atleast_2d(C) * _phi_neg(kind, R)).sum(axis=1)


def cs_cstnd_grads(kind: LossKind, R, C):
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    return (C * _phi_neg(kind, R)).sum(axis=1), C * _phi_neg_prime(kind, R)


def cs_kernel_values(kind: LossKind, R, C) -> np.ndarray:
    if kind.is_comp:
        return cs_comp_values(kind, R, C)
    return cs_cstnd_values(kind, R, C)


def cs_kernel_grads(kind: LossKind, R, C):
    if kind.is_comp:
        return cs_comp_grads(kind, R, C)
    return cs_cstnd_grads(kind, R, C)


# --------------------------------------------------------------------------
# scalar API

def _cost_row(spec: CostSpec, base_scores, y: int) -> np.ndarray:
    s = as_scores(base_scores)
    y = _check_label(y, s.size)
    return cost_rows(spec, s[None, :], np.array([y - 1]))[0]


def cs_comp_sum_loss(kind: LossKind, spec: CostSpec, base_scores, r_scores, y: int) -> float:
    if not kind.is_comp:
        raise ValueError(f"{kind.family} is not a comp-sum loss")
    r = as_scores(r_scores, len(spec.kset))
    return float(cs_comp_values(kind, r[None, :], _cost_row(spec, base_scores, y)[None, :])[0])


def cs_constrained_loss(kind: LossKind, spec: CostSpec, base_scores, r_scores, y: int) -> float:
    if not kind.is_constrained:
        raise ValueError(f"{kind.family} is not a constrained loss")
    r = as_scores(r_scores, len(spec.kset))
    if abs(r.sum()) > CONSTRAINT_TOL:
        raise ValueError(f"constrained loss needs sum(r) == 0, got {r.sum():.3g}")
    return float(cs_cstnd_values(kind, r[None, :], _cost_row(spec, base_scores, y)[None, :])[0])


def cs_loss(kind: LossKind, spec: CostSpec, base_scores, r_scores, y: int) -> float:
    if kind.is_comp:
        return cs_comp_sum_loss(kind, spec, base_scores, r_scores, y)
    return cs_constrained_loss(kind, spec, base_scores, r_scores, y)


def cs_grad(kind: LossKind, spec: CostSpec, base_scores, r_scores, y: int) -> np.ndarray:
    r = as_scores(r_scores, len(spec.kset))
    if kind.is_constrained and abs(r.sum()) > CONSTRAINT_TOL:
        raise ValueError(f"constrained loss needs sum(r) == 0, got {r.sum():.3g}")
    c = _cost_row(spec, base_scores, y)
    return cs_kernel_grads(kind, r[None, :], c[None, :])[1][0]


def expected_costs(costs: np.ndarray, p: Sequence[float]) -> np.ndarray:
    """``sum_y p(y) c(k, y)`` for every k; ``costs`` has shape ``(|K|, n)``."""
    return np.asarray(costs, dtype=np.float64) @ np.asarray(p, dtype=np.float64)
