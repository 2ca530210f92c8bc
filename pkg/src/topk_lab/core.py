"""Shared domain types and the ordering conventions used everywhere.

Labels are 1-based (``1..n``) at every public surface.  Internally arrays are
indexed from 0, so label ``y`` lives at position ``y - 1``.

Ties are resolved by the higher label index: among equal scores the label with
the larger index is ranked first.  The same rule picks the cardinality when
several entries of a selector's score vector tie for the maximum.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: ``True`` means higher label index wins ties.  Tests pin this constant.
TIES_PREFER_HIGHER_INDEX = True

#: Absolute tolerance for sums of probability vectors and weights.
PROB_TOL = 1e-12


def as_scores(values, n: int | None = None) -> np.ndarray:
    """Validate a score vector and return it as a float64 array."""
    s = np.asarray(values, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("score vector must be one-dimensional and non-empty")
    if n is not None and s.size != n:
        raise ValueError(f"score vector has length {s.size}, expected {n}")
    if not np.all(np.isfinite(s)):
        raise ValueError("score vector contains NaN or Inf")
    return s


def as_probs(values, n: int | None = None) -> np.ndarray:
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("probability vector must be one-dimensional")
    if n is not None and p.size != n:
        raise ValueError(f"probability vector has length {p.size}, expected {n}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def _check_label(y: int, n: int) -> int:
    if not 1 <= int(y) <= n:
        raise ValueError(f"label {y} outside [1, {n}]")
    return int(y)


def _check_k(k: int, n: int) -> int:
    if not 1 <= int(k) <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    return int(k)


@dataclass(frozen=True)
class LabelSpace:
    n: int

    def __post_init__(self):
        if int(self.n) < 2:
            raise ValueError("a label space needs at least two classes")

    @property
    def labels(self) -> range:
        return range(1, self.n + 1)


def descending_order(values) -> np.ndarray:
    """0-based positions of ``values`` sorted by (value desc, index desc)."""
    v = np.asarray(values, dtype=np.float64)
    idx = np.arange(v.size)
    # lexsort keys are applied last-to-first
    if TIES_PREFER_HIGHER_INDEX:
        return np.lexsort((-idx, -v))
    return np.lexsort((idx, -v))


def sorted_labels_desc(s) -> tuple[int, ...]:
    """Labels ordered by decreasing score, ties to the higher label."""
    s = as_scores(s)
    return tuple(int(i) + 1 for i in descending_order(s))


def top_k_set(s, k: int) -> frozenset[int]:
    s = as_scores(s)
    k = _check_k(k, s.size)
    return frozenset(sorted_labels_desc(s)[:k])


def top_k_probs(p, k: int) -> float:
    """Sum of the ``k`` largest conditional probabilities."""
    p = np.asarray(p, dtype=np.float64)
    k = _check_k(k, p.size)
    order = descending_order(p)
    return float(p[order[:k]].sum())


def argmax_last(values) -> int:
    """0-based argmax with ties going to the highest index."""
    return int(descending_order(values)[0])


def ranks(scores: np.ndarray) -> np.ndarray:
    """Row-wise 0-based rank of every column under the tie rule.

    ``ranks(S)[i, j] < k`` iff label ``j + 1`` is in the top-k set of row i.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    m, n = S.shape
    r = np.empty((m, n), dtype=np.int64)
    rows = np.arange(m)[:, None]
    order = np.lexsort((-np.broadcast_to(np.arange(n), (m, n)), -S), axis=1)
    r[rows, order] = np.arange(n)
    return r


def label_ranks(scores: np.ndarray, labels0: np.ndarray) -> np.ndarray:
    """Rank of each row's (0-based) label within that row."""
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels0 = np.asarray(labels0, dtype=np.int64)
    sy = S[np.arange(S.shape[0]), labels0][:, None]
    cols = np.arange(S.shape[1])[None, :]
    above = (S > sy) | ((S == sy) & (cols > labels0[:, None]))
    return above.sum(axis=1)


def brute_force_top_k_probs(p, k: int) -> float:
    """Max over all k-subsets of the probability mass they cover."""
    p = np.asarray(p, dtype=np.float64)
    return max(float(p[list(c)].sum()) for c in itertools.combinations(range(p.size), k))


@dataclass(frozen=True)
class CardinalitySet:
    ks: tuple[int, ...]

    def __init__(self, ks: Sequence[int], n: int | None = None):
        ks = tuple(int(k) for k in ks)
        if not ks:
            raise ValueError("cardinality set is empty")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("cardinalities must be strictly increasing")
        if ks[0] < 1 or (n is not None and ks[-1] > n):
            raise ValueError(f"cardinalities must lie in [1, {n}]")
        object.__setattr__(self, "ks", ks)

    def __len__(self):
        return len(self.ks)

    def __iter__(self):
        return iter(self.ks)

    def __contains__(self, k):
        return k in self.ks

    def index(self, k: int) -> int:
        try:
            return self.ks.index(int(k))
        except ValueError:
            raise ValueError(f"k={k} not in cardinality set {self.ks}") from None

    @property
    def max(self) -> int:
        return self.ks[-1]

    @classmethod
    def doubling(cls, k_max: int) -> "CardinalitySet":
        ks, k = [], 1
        while k <= k_max:
            ks.append(k)
            k *= 2
        return cls(ks)


def doubling_schedule(k_max: int) -> list[CardinalitySet]:
    """{1}, {1,2}, {1,2,4}, ... up to the largest power of two <= k_max."""
    full = CardinalitySet.doubling(k_max).ks
    return [CardinalitySet(full[: i + 1]) for i in range(len(full))]


@dataclass(frozen=True)
class FiniteDistribution:
    """Joint distribution over a finite set of instances and ``n`` labels."""

    weights: np.ndarray
    cond_probs: np.ndarray  # (instances, n)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        P = np.atleast_2d(np.asarray(self.cond_probs, dtype=np.float64))
        if w.ndim != 1 or w.size != P.shape[0]:
            raise ValueError("one weight per instance is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL:
            raise ValueError("instance weights must be non-negative and sum to 1")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_TOL):
            raise ValueError("each conditional probability row must sum to 1")
        if P.shape[1] < 2:
            raise ValueError("need at least two labels")
        w.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cond_probs", P)

    @property
    def n(self) -> int:
        return self.cond_probs.shape[1]

    def __len__(self):
        return self.weights.size

    @classmethod
    def single(cls, p) -> "FiniteDistribution":
        return cls(np.ones(1), np.asarray(p, dtype=np.float64)[None, :])


@dataclass
class Dataset:
    features: np.ndarray  # (m, d)
    labels: np.ndarray  # (m,), values in 1..n
    n: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1) if self.features.size else self.features.reshape(0, 0)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.shape[0] != self.labels.size:
            raise ValueError("features and labels disagree on the sample count")
        if self.n < 2:
            raise ValueError("need at least two classes")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.n):
            raise ValueError(f"labels must lie in [1, {self.n}]")

    def __len__(self):
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labels0(self) -> np.ndarray:
        return self.labels - 1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.n)


STREAMS = ("data", "init", "shuffle", "montecarlo")


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named purpose derived from one master seed.

    Stream identity depends only on ``(seed, name, *extra)`` so results do
    not change with worker count or call order.
    """
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag, *[int(e) for e in extra]])
    return np.random.default_rng(ss)
