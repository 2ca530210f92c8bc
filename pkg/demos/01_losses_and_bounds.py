"""
Top-k losses and their regret bounds at a single instance
=========================================================

One conditional distribution, one score vector, and every surrogate.
"""

import numpy as np

from topk_lab.bounds import BoundKind, bound_rhs
from topk_lab.core import top_k_set
from topk_lab.losses import FAMILIES, LossKind, TopKLoss
from topk_lab.oracle import check_bound_conditional, conditional_error, conditional_regret

p = np.array([0.45, 0.25, 0.2, 0.1])
s = np.array([0.3, 1.1, -0.2, 0.5])

# the score vector ranks label 2 first and label 4 second, missing label 1
print("top-2 set of s:", sorted(top_k_set(s, 2)))
for k in (1, 2, 3):
    print(f"top-{k} conditional error {conditional_error(TopKLoss(k), s, p):.3f}, "
          f"regret {conditional_regret(TopKLoss(k), s, p):.3f}")

# %%
# Each surrogate gives a regret that the bound turns into a cap on the
# top-k regret.  Constrained losses see centered scores.
k = 2
print(f"\n{'surrogate':16s} {'sur. regret':>12s} {'top-k regret':>13s} {'bound':>8s}")
for fam in FAMILIES:
    kind = LossKind(fam)
    v = s - s.mean() if kind.is_constrained else s
    rep = check_bound_conditional(BoundKind(kind, p.size, k), v, p)
    sur = rep.extra["surrogate_regret"]
    print(f"{fam:16s} {sur:12.4f} {rep.lhs:13.4f} {rep.rhs:8.4f}  "
          f"{'ok' if rep.satisfied else 'VIOLATED'}")

# %%
# The transform grows with k.  At small regret the logistic bound is about
# k * sqrt(2 v).
for v in (1e-4, 1e-2):
    vals = [bound_rhs(BoundKind(LossKind("comp_log"), 4, k), v) for k in (1, 2, 3)]
    print(f"\nlogistic rhs at v={v:g}:", ", ".join(f"k={k}: {x:.4f}" for k, x in zip((1, 2, 3), vals)),
          f"(k sqrt(2v) at k=1: {np.sqrt(2 * v):.4f})")

# %%
# Counterexamples at k = 2.  These instances make the linear-transform
# bounds fail; they are the violations reported by the Monte Carlo runs.
p = np.array([0.5, 0.4, 0.1])
cases = [
    ("comp_mae", np.array([10.0, 0.0, 0.01])),
    ("cstnd_rho", np.array([5.0, -2.6, -2.4])),
    ("cstnd_hinge", np.array([2.0, -1.01, -0.99])),
]
print("\np =", p)
for fam, v in cases:
    rep = check_bound_conditional(BoundKind(LossKind(fam), 3, 2), v, p)
    print(f"{fam:12s} s={v}: top-2 regret {rep.lhs:.3f} > bound {rep.rhs:.3f}")
