"""Conditional errors, their infima, regrets and minimizability gaps.

Every surrogate conditional error reduces to a weighted objective over a
score vector ``s`` of length ``m``:

* comp-sum       ``sum_j w_j * f(logsumexp(s) - s_j)``
* constrained    ``sum_j w_j * Phi(-s_j)`` with ``sum(s) == 0``

For a standard loss the weights are ``p`` (comp) or ``1 - p`` (constrained);
for the cardinality-aware losses they are ``1 - E[c]`` and ``E[c]``.  The
infimum over all score vectors has a closed form for every family, and a
multi-start pattern search provides an independent numeric route.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import BoundKind, bound_rhs
from .core import (
    _check_k,
    argmax_last,
    as_probs,
    as_scores,
    descending_order,
    ranks,
    FiniteDistribution,
    top_k_probs,
)
from .losses import CONSTRAINT_TOL, LossKind, TopKLoss, _comp_from_L, _phi_neg, kernel_values

BOUND_SLACK = 1e-6
REGRET_FLOOR = -1e-9
OPT_BOX = 30.0


# --------------------------------------------------------------------------
# conditional errors

def _check_zero_sum(loss, S) -> None:
    if isinstance(loss, LossKind) and loss.is_constrained:
        if np.abs(np.sum(S, axis=-1)).max(initial=0.0) > CONSTRAINT_TOL:
            raise ValueError(f"{loss} needs score vectors that sum to zero")


def conditional_error(loss, s, p) -> float:
    """``sum_y p(y) loss(s, y)`` for a ``LossKind`` or ``TopKLoss``."""
    p = as_probs(p)
    s = as_scores(s, p.size)
    _check_zero_sum(loss, s)
    return float(p @ loss.all_values(s))


def topk_conditional_error(s, p, k: int) -> float:
    p = as_probs(p)
    s = as_scores(s, p.size)
    k = _check_k(k, p.size)
    return float(1.0 - p[descending_order(s)[:k]].sum())


def best_conditional_error_topk(p, k: int) -> float:
    p = as_probs(p)
    return max(0.0, 1.0 - top_k_probs(p, k))


def brute_force_best_topk(p, k: int) -> float:
    """Min over every ordered k-tuple of distinct labels of the missed mass."""
    p = np.asarray(p, dtype=np.float64)
    k = _check_k(k, p.size)
    best = np.inf
    for tup in itertools.permutations(range(p.size), k):
        best = min(best, 1.0 - sum(p[i] for i in tup))
    return max(0.0, float(best))


def topk_regret(s, p, k: int) -> float:
    """Sum of the k largest probabilities minus the mass of s's top-k set."""
    p = as_probs(p)
    s = as_scores(s, p.size)
    k = _check_k(k, p.size)
    gap = top_k_probs(p, k) - p[descending_order(s)[:k]].sum()
    return max(0.0, float(gap))


# --------------------------------------------------------------------------
# weighted objective and its infimum

def standard_weights(kind: LossKind, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return p.copy() if kind.is_comp else 1.0 - p


def weighted_objective(kind: LossKind, w, S) -> np.ndarray:
    """Objective for each row of ``S`` (shape ``(B, m)``)."""
    w = np.asarray(w, dtype=np.float64)
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if kind.is_comp:
        mx = S.max(axis=1, keepdims=True)
        lse = np.log(np.exp(S - mx).sum(axis=1, keepdims=True)) + mx
        L = np.maximum(lse - S, 0.0)
        return _comp_from_L(kind, L) @ w
    return _phi_neg(kind, S) @ w


def _xlogx(x: np.ndarray) -> np.ndarray:
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x * np.log(safe), 0.0)


def weighted_infimum(kind: LossKind, w) -> float:
    """Closed-form infimum of ``weighted_objective`` over all score vectors."""
    w = np.maximum(np.asarray(w, dtype=np.float64), 0.0)
    m = w.size
    W = w.sum()
    f = kind.family
    if f == "comp_log":
        return float(W * np.log(W) - _xlogx(w).sum()) if W > 0 else 0.0
    if f == "comp_exp":
        return float(np.sqrt(w).sum() ** 2 - W)
    if f == "comp_mae":
        return float(W - w.max())
    if f == "comp_gce":
        a = kind.alpha
        return float((W - (w ** (1.0 / (1.0 - a))).sum() ** (1.0 - a)) / a)
    if f == "cstnd_exp":
        if np.any(w == 0.0):
            return 0.0
        return float(m * np.exp(np.log(w).mean()))
    if f == "cstnd_sq_hinge":
        if np.any(w == 0.0):
            return 0.0
        return float(m * m / (1.0 / w).sum())
    if f == "cstnd_hinge":
        return float(m * w.min())
    return float(w.min())


@dataclass
class OptResult:
    value: float
    scores: np.ndarray
    converged: bool
    sweeps: int


def _directions(kind: LossKind, m: int) -> np.ndarray:
    if kind.is_comp:
        return np.eye(m)
    # pairwise moves keep sum(s) == 0 exactly
    pairs = list(itertools.combinations(range(m), 2))
    D = np.zeros((len(pairs), m))
    for r, (i, j) in enumerate(pairs):
        D[r, i], D[r, j] = 1.0, -1.0
    return D


def _starts(kind: LossKind, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    rows = [np.zeros(m)]
    for i in range(min(m, count // 2)):
        v = -2.0 * np.ones(m)
        v[i] = 2.0 * (m - 1)
        rows.append(v)
    while len(rows) < count:
        rows.append(rng.normal(0.0, 2.0, m))
    X = np.array(rows)
    if kind.is_constrained:
        X -= X.mean(axis=1, keepdims=True)
    return np.clip(X, -OPT_BOX / 2, OPT_BOX / 2)


def minimize_weighted(
    kind: LossKind,
    w,
    rng: np.random.Generator | None = None,
    starts: int = 16,
    max_sweeps: int = 500,
    step_tol: float = 1e-9,
    improve_tol: float = 1e-11,
    box: float = OPT_BOX,
) -> OptResult:
    """Multi-start pattern search over the score box ``[-box, box]^m``.

    Each start keeps its own step; a sweep that improves by more than
    ``improve_tol`` doubles it, otherwise it is halved.
    """
    w = np.asarray(w, dtype=np.float64)
    m = w.size
    rng = rng if rng is not None else np.random.default_rng(0)
    D = _directions(kind, m)
    X = _starts(kind, m, starts, rng)
    f = weighted_objective(kind, w, X)
    step = np.ones(X.shape[0])
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        f_before = f.copy()
        for d in D:
            for sign in (1.0, -1.0):
                Y = X + (sign * step)[:, None] * d
                fy = weighted_objective(kind, w, Y)
                better = (fy < f) & np.all(np.abs(Y) <= box, axis=1)
                X[better] = Y[better]
                f[better] = fy[better]
        gain = f_before - f
        step = np.where(gain > improve_tol, np.minimum(2.0 * step, box), 0.5 * step)
        if np.all(step < step_tol):
            break
    best = int(np.argmin(f))
    return OptResult(float(f[best]), X[best].copy(), bool(step[best] < step_tol), sweeps)


def best_conditional_error_surrogate(
    kind: LossKind, p, method: str = "numeric", rng: np.random.Generator | None = None
) -> OptResult:
    """Infimum of the conditional error over all score vectors."""
    p = as_probs(p)
    w = standard_weights(kind, p)
    if method == "closed":
        return OptResult(weighted_infimum(kind, w), np.full(p.size, np.nan), True, 0)
    if method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    return minimize_weighted(kind, w, rng)


def conditional_regret(loss, s, p, method: str = "closed") -> float:
    """Conditional error minus its infimum over all score vectors, floored at 0."""
    if isinstance(loss, TopKLoss):
        return topk_regret(s, p, loss.k)
    best = best_conditional_error_surrogate(loss, p, method).value
    return max(0.0, conditional_error(loss, s, p) - best)


# --------------------------------------------------------------------------
# cardinality-aware conditional quantities

def cs_weights(kind: LossKind, costs, p) -> np.ndarray:
    q = np.asarray(costs, dtype=np.float64) @ np.asarray(p, dtype=np.float64)
    return 1.0 - q if kind.is_comp else q


def cs_target_regret(costs, p, r) -> float:
    """Expected cost of the selected cardinality minus the best expected cost."""
    q = np.asarray(costs, dtype=np.float64) @ np.asarray(p, dtype=np.float64)
    return max(0.0, float(q[argmax_last(r)] - q.min()))


def cs_target_regret_enum(costs, p, r) -> float:
    """Same quantity by direct summation over labels and cardinalities."""
    C = np.asarray(costs, dtype=np.float64)
    K, n = C.shape
    chosen = argmax_last(r)
    picked = sum(p[y] * C[chosen, y] for y in range(n))
    best = min(sum(p[y] * C[k, y] for y in range(n)) for k in range(K))
    return max(0.0, float(picked - best))


def cs_surrogate_regret(kind: LossKind, costs, p, r, method: str = "closed") -> float:
    w = cs_weights(kind, costs, p)
    value = float(weighted_objective(kind, w, np.asarray(r, dtype=np.float64)[None, :])[0])
    if method == "closed":
        best = weighted_infimum(kind, w)
    else:
        best = minimize_weighted(kind, w).value
    return max(0.0, value - best)


# --------------------------------------------------------------------------
# bound reports

@dataclass
class BoundReport:
    theorem: str
    lhs: float
    rhs: float
    satisfied: bool
    optimizer_converged: bool = True
    n: int = 0
    k: int = 0
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_json(self) -> str:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return json.dumps(d, sort_keys=True)


def check_bound_conditional(
    theorem: BoundKind, s, p, costs=None, method: str = "closed"
) -> BoundReport:
    """Both sides of the pointwise regret inequality at one instance.

    Standard theorems take base scores ``s``; cost-sensitive theorems take
    selector scores ``s`` and a ``(|K|, n)`` cost matrix.
    """
    p = as_probs(p)
    kind = theorem.surrogate
    converged = True
    if theorem.cost_sensitive:
        if costs is None:
            raise ValueError("cost-sensitive check needs a cost matrix")
        r = as_scores(s)
        _check_zero_sum(kind, r)
        lhs = cs_target_regret(costs, p, r)
        w = cs_weights(kind, costs, p)
        val = float(weighted_objective(kind, w, r[None, :])[0])
        if method == "closed":
            best = weighted_infimum(kind, w)
        else:
            res = minimize_weighted(kind, w)
            best, converged = res.value, res.converged
        sur = max(0.0, val - best)
    else:
        s = as_scores(s, p.size)
        lhs = topk_regret(s, p, theorem.k)
        if method == "closed":
            best = weighted_infimum(kind, standard_weights(kind, p))
        else:
            res = best_conditional_error_surrogate(kind, p, "numeric")
            best, converged = res.value, res.converged
        sur = max(0.0, conditional_error(kind, s, p) - best)
    rhs = bound_rhs(theorem, sur)
    return BoundReport(
        str(theorem), lhs, rhs, lhs <= rhs + BOUND_SLACK, converged, theorem.n, theorem.k,
        extra={"surrogate_regret": sur},
    )


# --------------------------------------------------------------------------
# expectation level

def generalization_error(loss, scorer, dist: FiniteDistribution) -> float:
    S = np.atleast_2d(np.asarray(scorer, dtype=np.float64))
    if S.shape != dist.cond_probs.shape:
        raise ValueError("scorer must give one score vector per instance")
    errs = [conditional_error(loss, S[i], dist.cond_probs[i]) for i in range(len(dist))]
    return float(dist.weights @ np.array(errs))


MODES = ("all_measurable", "shared_grid")


@dataclass
class HypothesisGrid:
    """Finite hypothesis set on a finite instance space.

    ``score_vectors`` has shape ``(H, n)`` (each hypothesis scores every
    instance the same way) or ``(H, I, n)``.  In ``all_measurable`` mode the
    candidates are ignored and each instance is optimized on its own.
    """

    score_vectors: np.ndarray | None = None
    mode: str = "shared_grid"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.mode == "shared_grid":
            if self.score_vectors is None:
                raise ValueError("a shared grid needs candidate score vectors")
            self.score_vectors = np.asarray(self.score_vectors, dtype=np.float64)
            if self.score_vectors.ndim not in (2, 3):
                raise ValueError("score_vectors must have shape (H, n) or (H, I, n)")

    def hypotheses(self, instances: int) -> np.ndarray:
        """All candidates as an ``(H, I, n)`` array."""
        V = self.score_vectors
        if V.ndim == 2:
            return np.broadcast_to(V[:, None, :], (V.shape[0], instances, V.shape[1]))
        if V.shape[1] != instances:
            raise ValueError("grid instance count disagrees with the distribution")
        return V

    def __len__(self):
        return 0 if self.score_vectors is None else self.score_vectors.shape[0]


def _loss_k(loss):
    return loss if isinstance(loss, (LossKind, TopKLoss)) else LossKind(loss)


def best_conditional_errors(loss, dist: FiniteDistribution, method: str = "closed") -> np.ndarray:
    """Per-instance infimum over all score vectors."""
    if isinstance(loss, TopKLoss):
        return np.array([best_conditional_error_topk(p, loss.k) for p in dist.cond_probs])
    return np.array(
        [best_conditional_error_surrogate(loss, p, method).value for p in dist.cond_probs]
    )


def grid_errors(loss, grid: HypothesisGrid, dist: FiniteDistribution) -> np.ndarray:
    """Conditional error of every hypothesis at every instance, ``(H, I)``."""
    V = grid.hypotheses(len(dist))
    _check_zero_sum(loss, V)
    H, _, n = V.shape
    out = np.empty((H, len(dist)))
    for i, p in enumerate(dist.cond_probs):
        Vi = np.ascontiguousarray(V[:, i, :])
        if isinstance(loss, TopKLoss):
            per_label = (ranks(Vi) >= loss.k).astype(np.float64)
        else:
            per_label = np.stack(
                [kernel_values(loss, Vi, np.full(H, y)) for y in range(n)], axis=1
            )
        out[:, i] = per_label @ p
    return out


def best_in_class_error(loss, grid: HypothesisGrid, dist: FiniteDistribution) -> float:
    if grid.mode == "all_measurable":
        return float(dist.weights @ best_conditional_errors(loss, dist))
    return float((grid_errors(loss, grid, dist) @ dist.weights).min())


def minimizability_gap(
    loss, grid: HypothesisGrid, dist: FiniteDistribution, pointwise: str = "complete"
) -> float:
    """Best-in-class error minus the mean best conditional error.

    ``pointwise="complete"`` takes the conditional infimum over all score
    vectors; ``pointwise="grid"`` takes it over the grid's candidates at
    each instance.
    """
    if grid.mode == "all_measurable":
        return 0.0
    E = grid_errors(loss, grid, dist)
    best = float((E @ dist.weights).min())
    if pointwise == "complete":
        cond = best_conditional_errors(loss, dist)
    elif pointwise == "grid":
        cond = E.min(axis=0)
    else:
        raise ValueError(f"unknown pointwise mode {pointwise!r}")
    return max(0.0, best - float(dist.weights @ cond))


def approximation_error(loss, grid: HypothesisGrid, dist: FiniteDistribution) -> float:
    """Best-in-class error minus the error of the best measurable scorer."""
    if grid.mode == "all_measurable":
        return 0.0
    bayes = float(dist.weights @ best_conditional_errors(loss, dist))
    return max(0.0, best_in_class_error(loss, grid, dist) - bayes)


@dataclass
class ExpectationReport:
    theorem: str
    lhs: float
    rhs: float
    satisfied: bool
    target_gap: float
    surrogate_gap: float
    target_excess: float
    surrogate_excess: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def expectation_reports(
    theorem: BoundKind, grid: HypothesisGrid, dist: FiniteDistribution
) -> list[ExpectationReport]:
    """Expectation-level check for every hypothesis of a shared grid."""
    if theorem.cost_sensitive:
        raise ValueError("expectation checks cover the standard theorems")
    if grid.mode != "shared_grid":
        raise ValueError("pass an explicit scorer in all_measurable mode")
    kind, target = theorem.surrogate, TopKLoss(theorem.k)
    w = dist.weights
    Et, Es = grid_errors(target, grid, dist) @ w, grid_errors(kind, grid, dist) @ w
    ct = float(w @ best_conditional_errors(target, dist))
    cs = float(w @ best_conditional_errors(kind, dist))
    m_t, m_s = max(0.0, Et.min() - ct), max(0.0, Es.min() - cs)
    out = []
    for e_t, e_s in zip(Et, Es):
        ex_t, ex_s = e_t - Et.min(), e_s - Es.min()
        lhs = ex_t + m_t
        rhs = bound_rhs(theorem, max(0.0, ex_s + m_s))
        out.append(ExpectationReport(str(theorem), float(lhs), rhs, lhs <= rhs + BOUND_SLACK,
                                     m_t, m_s, float(ex_t), float(ex_s)))
    return out


def check_bound_expectation(
    theorem: BoundKind, grid: HypothesisGrid, dist: FiniteDistribution, h: int | None = None,
    scorer=None,
) -> ExpectationReport:
    """Excess error plus gap, target side against the surrogate side.

    The hypothesis is grid entry ``h`` or an explicit per-instance ``scorer``
    (required in ``all_measurable`` mode).
    """
    if theorem.cost_sensitive:
        raise ValueError("expectation checks cover the standard theorems")
    kind = theorem.surrogate
    target = TopKLoss(theorem.k)
    if scorer is None:
        if h is None or grid.mode != "shared_grid":
            raise ValueError("pass a grid index or an explicit scorer")
        scorer = grid.hypotheses(len(dist))[h]
    scorer = np.asarray(scorer, dtype=np.float64)
    e_t = generalization_error(target, scorer, dist)
    e_s = generalization_error(kind, scorer, dist)
    m_t = minimizability_gap(target, grid, dist)
    m_s = minimizability_gap(kind, grid, dist)
    ex_t = e_t - best_in_class_error(target, grid, dist)
    ex_s = e_s - best_in_class_error(kind, grid, dist)
    lhs = ex_t + m_t
    rhs = bound_rhs(theorem, max(0.0, ex_s + m_s))
    return ExpectationReport(str(theorem), lhs, rhs, lhs <= rhs + BOUND_SLACK, m_t, m_s, ex_t, ex_s)
