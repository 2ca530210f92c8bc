"""Transform functions turning surrogate regret into a top-k regret bound.

Standard bounds have the shape ``top-k regret <= rhs(surrogate regret)``:

=================  ==========================
logistic, sum-exp  ``k * psi^{-1}(v)``
GCE                ``k * psi^{-1}(v)``
MAE                ``k * n * v``
cstnd exp, sq      ``2 * k * sqrt(v)``
cstnd hinge, rho   ``k * v``
=================  ==========================

Cost-sensitive bounds apply ``gamma(v)`` with ``2 sqrt(v)``,
``2 sqrt(n^alpha v)``, ``n v`` or ``v``, where ``n`` counts the candidate
cardinalities unless overridden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import LossKind, loss_kind

PSI_FAMILIES = ("comp_log", "comp_exp", "comp_gce")


@dataclass(frozen=True)
class BoundKind:
    surrogate: LossKind
    n: int
    k: int = 1
    cost_sensitive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "surrogate", loss_kind(self.surrogate))
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.cost_sensitive and not 1 <= self.k <= self.n:
            raise ValueError(f"k={self.k} outside [1, {self.n}]")

    @property
    def family(self) -> str:
        return self.surrogate.family

    @property
    def alpha(self) -> float:
        return self.surrogate.alpha

    def __str__(self):
        tag = "cs_" if self.cost_sensitive else ""
        return f"{tag}{self.surrogate}[n={self.n},k={self.k}]"


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"psi is defined on [0, 1], got {t}")
    return t


def _xlogx(x: float) -> float:
    return x * math.log(x) if x > 0.0 else 0.0


def psi(kind: BoundKind, t: float) -> float:
    t = _check_t(t)
    f = kind.family
    if f == "comp_log":
        return 0.5 * (_xlogx(1.0 - t) + _xlogx(1.0 + t))
    if f == "comp_exp":
        return 1.0 - math.sqrt(max(0.0, 1.0 - t * t))
    if f == "comp_gce":
        a, n = kind.alpha, kind.n
        e = 1.0 / (1.0 - a)
        mean = 0.5 * ((1.0 + t) ** e + (1.0 - t) ** e)
        return (mean ** (1.0 - a) - 1.0) / (a * n**a)
    raise ValueError(f"{f} has no psi transform")


def psi_inv(kind: BoundKind, v: float) -> float:
    """Root of ``psi(t) = v`` on [0, 1] by bisection; clamps to 1 above psi(1).

    Bisection runs until the bracket holds two adjacent floats.  A fixed
    tolerance on ``t`` is not enough because the sum-exp psi has unbounded
    slope at ``t = 1``.
    """
    v = float(v)
    if v < 0.0 or math.isnan(v):
        raise ValueError(f"psi_inv needs v >= 0, got {v}")
    if v == 0.0:
        return 0.0
    if v >= psi(kind, 1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if psi(kind, mid) < v:
            lo = mid
        else:
            hi = mid
    return lo if v - psi(kind, lo) <= psi(kind, hi) - v else hi


def exp_psi_inv_closed(v: float) -> float:
    """Closed-form inverse of the sum-exp psi, kept as a cross-check."""
    v = min(float(v), 1.0)
    return math.sqrt(max(0.0, 2.0 * v - v * v))


def bound_rhs(kind: BoundKind, v: float) -> float:
    if kind.cost_sensitive:
        return cs_bound_rhs(kind, v)
    v = max(float(v), 0.0)
    f, k = kind.family, kind.k
    if f in PSI_FAMILIES:
        return k * psi_inv(kind, v)
    if f == "comp_mae":
        return k * kind.n * v
    if f in ("cstnd_exp", "cstnd_sq_hinge"):
        return 2.0 * k * math.sqrt(v)
    return k * v


def cs_bound_rhs(kind: BoundKind, v: float) -> float:
    v = max(float(v), 0.0)
    f = kind.family
    if f in ("comp_log", "comp_exp", "cstnd_exp", "cstnd_sq_hinge"):
        return 2.0 * math.sqrt(v)
    if f == "comp_gce":
        return 2.0 * math.sqrt(kind.n**kind.alpha * v)
    if f == "comp_mae":
        return kind.n * v
    return v


def psi_grid(kind: BoundKind, num: int = 1001) -> np.ndarray:
    return np.array([psi(kind, t) for t in np.linspace(0.0, 1.0, num)])
