"""Seeded Monte Carlo campaigns over the regret bounds.

Trial ``i`` of theorem ``t`` draws from ``stream(seed, "montecarlo", t, i)``,
so a record never depends on how trials are split across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import BoundKind
from .core import CardinalitySet, FiniteDistribution, stream
from .costsens import CostSpec, cost_matrix
from .losses import FAMILIES, LossKind
from .oracle import (
    BoundReport,
    HypothesisGrid,
    check_bound_conditional,
    expectation_reports,
)

STANDARD_THEOREMS = FAMILIES
CS_THEOREMS = tuple("cs_" + f for f in FAMILIES)
ALL_THEOREMS = STANDARD_THEOREMS + CS_THEOREMS

MAX_N = 8
EXP_SCORE_CAP = 350.0  # keeps sum-exp values finite


def theorem_index(name: str) -> int:
    if name not in ALL_THEOREMS:
        raise ValueError(f"unknown theorem {name!r}; choose from {', '.join(ALL_THEOREMS)}")
    return ALL_THEOREMS.index(name)


def _random_probs(rng: np.random.Generator, n: int) -> np.ndarray:
    conc = rng.choice([0.1, 0.5, 1.0, 5.0])
    p = rng.dirichlet(np.full(n, conc))
    if rng.random() < 0.1:
        # exact zeros and ties
        p[rng.integers(n)] = 0.0
        p /= p.sum()
    return p


def _random_scores(rng: np.random.Generator, n: int, p: np.ndarray | None = None) -> np.ndarray:
    mode = rng.integers(4)
    if mode == 0 and p is not None:
        s = np.log(np.maximum(p, 1e-12)) + rng.normal(0.0, 0.3, n)
    elif mode == 1:
        s = rng.integers(-2, 3, n).astype(np.float64)  # many ties
    else:
        s = rng.normal(0.0, rng.choice([0.1, 1.0, 3.0, 10.0]), n)
    return np.clip(s, -EXP_SCORE_CAP, EXP_SCORE_CAP)


@dataclass(frozen=True)
class TrialSpec:
    theorem: str
    trial: int
    seed: int


def run_trial(spec: TrialSpec) -> BoundReport:
    name = spec.theorem
    rng = stream(spec.seed, "montecarlo", theorem_index(name), spec.trial)
    n = int(rng.integers(2, MAX_N + 1))
    p = _random_probs(rng, n)
    if name in STANDARD_THEOREMS:
        kind = LossKind(name)
        k = int(rng.integers(1, n + 1))
        s = _random_scores(rng, n, p)
        if kind.is_constrained:
            s = s - s.mean()
        rep = check_bound_conditional(BoundKind(kind, n, k), s, p)
    else:
        kind = LossKind(name[3:])
        size = int(rng.integers(2, min(n, 5) + 1))
        ks = CardinalitySet(sorted(rng.choice(np.arange(1, n + 1), size, replace=False)))
        cspec = CostSpec(float(rng.choice([0.0, 0.05, 0.2, 1.0])), ks)
        C = cost_matrix(cspec, _random_scores(rng, n))
        r = _random_scores(rng, len(ks))
        if kind.is_constrained:
            r = r - r.mean()
        rep = check_bound_conditional(BoundKind(kind, len(ks), 1, cost_sensitive=True), r, p, C)
        k = len(ks)
    rep.theorem = name
    rep.seed = spec.seed
    rep.k = k
    rep.extra["trial"] = spec.trial
    return rep


def _chunk(specs: list[TrialSpec]) -> list[BoundReport]:
    return [run_trial(s) for s in specs]


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("TOPK_LAB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


def run_campaign(theorems, trials: int, seed: int, threads: int | None = None) -> list[BoundReport]:
    """All trials for every theorem, in (theorem, trial) order."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    for t in theorems:
        theorem_index(t)
    specs = [TrialSpec(t, i, seed) for t in theorems for i in range(trials)]
    threads = resolve_threads(threads)
    if threads == 1 or len(specs) < 2:
        return _chunk(specs)
    size = math.ceil(len(specs) / (threads * 4))
    chunks = [specs[i:i + size] for i in range(0, len(specs), size)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map preserves submission order, so the merge is deterministic
        return [rep for part in pool.map(_chunk, chunks) for rep in part]


def summarize(reports: list[BoundReport]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for rep in reports:
        d = out.setdefault(rep.theorem, {"trials": 0, "violations": 0, "min_slack": math.inf})
        d["trials"] += 1
        d["violations"] += int(not rep.satisfied)
        d["min_slack"] = min(d["min_slack"], rep.slack)
    return out


# --------------------------------------------------------------------------
# expectation-level configurations on shared grids

@dataclass
class GridTrial:
    theorem: str
    trial: int
    n: int
    k: int
    hypotheses: int
    instances: int
    target_gap: float
    surrogate_gap: float
    worst_slack: float
    satisfied: bool


def random_grid_problem(rng: np.random.Generator, kind: LossKind, max_h: int = 64,
                        max_i: int = 6, max_n: int = 5):
    n = int(rng.integers(2, max_n + 1))
    inst = int(rng.integers(1, max_i + 1))
    H = int(rng.integers(1, max_h + 1))
    P = np.array([_random_probs(rng, n) for _ in range(inst)])
    w = rng.dirichlet(np.ones(inst))
    dist = FiniteDistribution(w, P)
    V = rng.normal(0.0, rng.choice([0.5, 2.0]), size=(H, inst, n))
    if kind.is_constrained:
        V -= V.mean(axis=2, keepdims=True)
    k = int(rng.integers(1, n + 1))
    return dist, HypothesisGrid(V, "shared_grid"), n, k


def run_grid_trial(theorem: str, trial: int, seed: int) -> GridTrial:
    kind = LossKind(theorem)
    rng = stream(seed, "montecarlo", 100 + theorem_index(theorem), trial)
    dist, grid, n, k = random_grid_problem(rng, kind)
    bk = BoundKind(kind, n, k)
    reps = expectation_reports(bk, grid, dist)
    worst = min(r.slack for r in reps)
    return GridTrial(theorem, trial, n, k, len(grid), len(dist), reps[0].target_gap,
                     reps[0].surrogate_gap, worst, all(r.satisfied for r in reps))


def run_grid_campaign(theorem: str, trials: int, seed: int) -> list[GridTrial]:
    return [run_grid_trial(theorem, i, seed) for i in range(trials)]

