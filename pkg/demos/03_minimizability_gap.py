"""
Minimizability gaps on a restricted hypothesis set
==================================================

With only a few score vectors available, the best hypothesis can be worse
than the pointwise optimum at every instance.  The bound charges that gap
on both sides.
"""

import numpy as np

from topk_lab.bounds import BoundKind
from topk_lab.core import FiniteDistribution, stream
from topk_lab.losses import LossKind, TopKLoss
from topk_lab.oracle import (
    HypothesisGrid,
    approximation_error,
    expectation_reports,
    minimizability_gap,
)

# two one-hot instances; each hypothesis is right on exactly one of them
dist = FiniteDistribution([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]])
grid = HypothesisGrid(np.array([[1.0, 0.0], [0.0, 1.0]]))
for loss in (TopKLoss(1), LossKind("comp_log"), LossKind("comp_exp")):
    print(f"{str(loss):12s} gap {minimizability_gap(loss, grid, dist):.4f}, "
          f"approximation error {approximation_error(loss, grid, dist):.4f}")

rep = expectation_reports(BoundKind(LossKind("comp_log"), 2, 1), grid, dist)[0]
print(f"\nexcess + gap: target {rep.lhs:.4f} <= {rep.rhs:.4f}")

# %%
# A random shared grid: 32 hypotheses over 4 instances with 4 labels.
rng = stream(0, "montecarlo", 999)
dist = FiniteDistribution(rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4), 4))
V = rng.normal(0, 1.5, (32, 4, 4))
for fam in ("comp_log", "cstnd_exp"):
    kind = LossKind(fam)
    # constrained losses only accept score vectors that sum to zero
    grid = HypothesisGrid(V - V.mean(axis=2, keepdims=True) if kind.is_constrained else V)
    reps = expectation_reports(BoundKind(kind, 4, 2), grid, dist)
    worst = min(reps, key=lambda r: r.slack)
    print(f"\n{fam}: gaps target {worst.target_gap:.4f} surrogate {worst.surrogate_gap:.4f}; "
          f"worst hypothesis {worst.lhs:.4f} <= {worst.rhs:.4f}")
