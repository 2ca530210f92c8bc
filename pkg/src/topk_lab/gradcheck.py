"""Central finite-difference checks for every loss kernel and both models.

Relative error is ``|a - b| / max(1, |a|, |b|)`` over whole gradient
vectors.  Points within ``1e-3`` of a hinge breakpoint or a ReLU switch
are redrawn, since there the two one-sided derivatives disagree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import CardinalitySet, stream
from .costsens import CostSpec, cost_rows, cs_kernel_grads, cs_kernel_values
from .losses import FAMILIES, LossKind, kernel_grads, kernel_values, near_kink
from .train import (
    CostSensitiveObjective,
    StandardObjective,
    _forward_cache,
    batch_loss_and_grads,
    init_model,
)

KERNEL_TOL = 1e-5
MODEL_TOL = 1e-4
FD_STEP = 1e-6
KINK_MARGIN = 1e-3


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a), np.linalg.norm(b)))


def central_diff(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


@dataclass
class CheckRow:
    name: str
    worst: float
    tol: float
    points: int

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def _draw_scores(rng, kind: LossKind, m: int) -> np.ndarray:
    while True:
        s = rng.normal(0.0, 1.5, m)
        if kind.is_constrained:
            s -= s.mean()
        if not near_kink(kind, s, KINK_MARGIN):
            return s


def check_kernel(kind: LossKind, seed: int, points: int = 100, grad_fn=None) -> CheckRow:
    """Standard kernel gradient against finite differences."""
    grad_fn = grad_fn or kernel_grads
    rng = stream(seed, "montecarlo", 7001, FAMILIES.index(kind.family))
    worst = 0.0
    for _ in range(points):
        n = int(rng.integers(2, 9))
        y0 = np.array([rng.integers(n)])
        s = _draw_scores(rng, kind, n)
        g = grad_fn(kind, s[None, :], y0)[1][0]
        fd = central_diff(lambda v: float(kernel_values(kind, v[None, :], y0)[0]), s.copy())
        worst = max(worst, rel_err(g, fd))
    return CheckRow(str(kind), worst, KERNEL_TOL, points)


def check_cs_kernel(kind: LossKind, seed: int, points: int = 100, grad_fn=None) -> CheckRow:
    grad_fn = grad_fn or cs_kernel_grads
    rng = stream(seed, "montecarlo", 7002, FAMILIES.index(kind.family))
    worst = 0.0
    for _ in range(points):
        n = int(rng.integers(2, 9))
        # a single cardinality centers to exactly 0, which sits on a kink
        size = int(rng.integers(2, min(n, 4) + 1))
        ks = CardinalitySet(sorted(rng.choice(np.arange(1, n + 1), size, replace=False)))
        spec = CostSpec(float(rng.uniform(0, 0.5)), ks)
        C = cost_rows(spec, rng.normal(size=(1, n)), np.array([rng.integers(n)]))
        r = _draw_scores(rng, kind, size)
        g = grad_fn(kind, r[None, :], C)[1][0]
        fd = central_diff(lambda v: float(cs_kernel_values(kind, v[None, :], C)[0]), r.copy())
        worst = max(worst, rel_err(g, fd))
    return CheckRow("cs_" + str(kind), worst, KERNEL_TOL, points)


def _relu_safe(model, X) -> bool:
    _, pre = _forward_cache(model, X)
    return all(np.all(np.abs(z) > KINK_MARGIN) for z in pre[:-1])


def check_model(arch: str, kind: LossKind, seed: int, points: int = 100,
                cost_sensitive: bool = False, hidden: int = 8) -> CheckRow:
    """End-to-end parameter gradients of the mean batch loss."""
    rng = stream(seed, "montecarlo", 7003 + int(cost_sensitive), FAMILIES.index(kind.family))
    worst = 0.0
    done = 0
    while done < points:
        d, n, m = int(rng.integers(2, 5)), int(rng.integers(2, 6)), int(rng.integers(1, 5))
        X = rng.normal(size=(m, d))
        y0 = rng.integers(n, size=m)
        if cost_sensitive:
            ks = CardinalitySet(range(1, n + 1))
            C = cost_rows(CostSpec(0.1, ks), rng.normal(size=(m, n)), y0)
            obj = CostSensitiveObjective(kind, C)
        else:
            obj = StandardObjective(kind, y0)
        model = init_model(arch, d, n, rng, hidden)
        for b in model.biases:
            b += rng.normal(0.0, 0.1, b.shape)
        if arch == "mlp2" and not _relu_safe(model, X):
            continue
        idx = np.arange(m)
        if kind.is_constrained:
            S = _forward_cache(model, X)[0][-1]
            S = S - S.mean(axis=1, keepdims=True)
            if any(near_kink(kind, row, KINK_MARGIN) for row in S):
                continue
        _, grads = batch_loss_and_grads(model, X, obj, idx)
        params = model.params()
        ana = np.concatenate([g.ravel() for g in grads])
        num = []
        for p in params:
            num.append(central_diff(lambda _: batch_loss_and_grads(model, X, obj, idx)[0], p).ravel())
        worst = max(worst, rel_err(ana, np.concatenate(num)))
        done += 1
    tag = ("cs_" if cost_sensitive else "") + str(kind)
    return CheckRow(f"{arch}/{tag}", worst, MODEL_TOL, points)


def run_all(seed: int, points: int = 100, model_points: int | None = None) -> list[CheckRow]:
    model_points = points if model_points is None else model_points
    rows = []
    for fam in FAMILIES:
        rows.append(check_kernel(LossKind(fam), seed, points))
    for fam in FAMILIES:
        rows.append(check_cs_kernel(LossKind(fam), seed, points))
    for arch, fam, cs in [
        ("linear", "comp_log", False),
        ("linear", "cstnd_sq_hinge", False),
        ("mlp2", "comp_log", False),
        ("mlp2", "comp_log", True),
        ("mlp2", "cstnd_exp", True),
    ]:
        rows.append(check_model(arch, LossKind(fam), seed, model_points, cs))
    return rows
