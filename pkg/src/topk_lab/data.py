"""Synthetic Gaussian-cluster datasets and feature-file input/output.

Classes are arranged in groups.  Group centers sit far apart and the
classes of one group sit close together, so a sample can be easy (its group
is obvious and its cluster tight) or hard (it lands between confusable
classes).  Each sample draws ``u ~ U(0, 1)`` and uses noise scale
``spread * (1 + overlap_factor * u**2)``, which grades difficulty per
instance.  With ``overlap_factor == 0`` the noise is truncated to less than
half the smallest center distance, so the classes are linearly separable.

Feature files are either CSV with header ``f0,...,f{d-1},label`` or a raw
little-endian float32 matrix (label as last column) with a JSON sidecar.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .core import Dataset, stream

RAW_DTYPE = "<f4"
SIDECAR_SUFFIX = ".json"


@dataclass(frozen=True)
class SyntheticRecipe:
    n_classes: int
    dim: int
    samples: int
    cluster_spread: float = 0.3
    overlap_factor: float = 0.0
    seed: int = 0
    kind: str = "gaussian_clusters"
    group_size: int = 1
    group_radius: float = 4.0
    class_radius: float = 1.0

    def __post_init__(self):
        if self.kind != "gaussian_clusters":
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.n_classes < 2 or self.dim < 1 or self.samples < 0:
            raise ValueError("need n_classes >= 2, dim >= 1 and samples >= 0")
        if self.cluster_spread < 0 or self.overlap_factor < 0:
            raise ValueError("spread and overlap must be non-negative")
        if self.group_size < 1:
            raise ValueError("group_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _directions(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors; evenly spaced on the circle in 2-d, on a segment in 1-d."""
    if dim == 1:
        return np.linspace(-1.0, 1.0, count)[:, None]
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(count) / count + rng.uniform(0, 2.0 * np.pi)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    v = rng.normal(size=(count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def class_centers(recipe: SyntheticRecipe, rng: np.random.Generator) -> np.ndarray:
    n, d, g = recipe.n_classes, recipe.dim, recipe.group_size
    groups = -(-n // g)
    if groups == 1:
        return recipe.class_radius * _directions(n, d, rng)[:n]
    base = recipe.group_radius * _directions(groups, d, rng)
    out = []
    for c in range(n):
        gi, j = divmod(c, g)
        size = min(g, n - gi * g)
        offs = _directions(size, d, stream(recipe.seed, "data", 1000 + gi))
        out.append(base[gi] + recipe.class_radius * offs[j])
    return np.array(out)


def min_center_distance(centers: np.ndarray) -> float:
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    return float(dist[~np.eye(len(centers), dtype=bool)].min())


def gaussian_clusters(recipe: SyntheticRecipe) -> Dataset:
    rng = stream(recipe.seed, "data")
    centers = class_centers(recipe, rng)
    m, d = recipe.samples, recipe.dim
    labels0 = rng.integers(0, recipe.n_classes, size=m)
    u = rng.uniform(size=m)
    scale = recipe.cluster_spread * (1.0 + recipe.overlap_factor * u**2)
    noise = rng.normal(size=(m, d)) * scale[:, None]
    if recipe.overlap_factor == 0.0 and m:
        # keep every point strictly inside its own Voronoi cell
        limit = 0.45 * min_center_distance(centers)
        norms = np.linalg.norm(noise, axis=1)
        far = norms > limit
        noise[far] *= (limit * rng.uniform(size=far.sum()) / norms[far])[:, None]
    X = centers[labels0] + noise
    return Dataset(X.reshape(m, d), labels0 + 1, recipe.n_classes)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    order = stream(seed, "data", 1).permutation(len(ds))
    cut = int(round(len(ds) * (1.0 - test_fraction)))
    return ds.subset(np.sort(order[:cut])), ds.subset(np.sort(order[cut:]))


# --------------------------------------------------------------------------
# feature files

def write_csv(ds: Dataset, path: str) -> None:
    header = ",".join([f"f{i}" for i in range(ds.dim)] + ["label"])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for x, y in zip(ds.features, ds.labels):
            fh.write(",".join([repr(float(v)) for v in x] + [str(int(y))]) + "\n")


def read_csv(path: str, n: int | None = None) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[-1] != "label":
            raise ValueError("CSV header must end with a 'label' column")
        d = len(header) - 1
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if any(len(r) != d + 1 for r in rows):
        raise ValueError("CSV row width disagrees with the header")
    X = np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64).reshape(len(rows), d)
    y = np.array([int(r[d]) for r in rows], dtype=np.int64)
    if n is None:
        n = max(2, int(y.max())) if y.size else 2
    return Dataset(X, y, n)


def write_raw(ds: Dataset, path: str) -> None:
    """Float32 matrix ``[features | label]`` plus a sidecar with its shape."""
    M = np.hstack([ds.features, ds.labels[:, None].astype(np.float64)]).astype(RAW_DTYPE)
    with open(path, "wb") as fh:
        fh.write(M.tobytes(order="C"))
    side = {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "dtype": RAW_DTYPE,
            "label_column": "last", "n_classes": int(ds.n)}
    with open(path + SIDECAR_SUFFIX, "w", encoding="utf-8") as fh:
        json.dump(side, fh, sort_keys=True)


def read_raw(path: str, n: int | None = None) -> Dataset:
    with open(path + SIDECAR_SUFFIX, encoding="utf-8") as fh:
        side = json.load(fh)
    if side.get("dtype", RAW_DTYPE) != RAW_DTYPE:
        raise ValueError("raw feature files must be little-endian float32")
    rows, cols = int(side["rows"]), int(side["cols"])
    M = np.fromfile(path, dtype=RAW_DTYPE)
    if M.size != rows * cols:
        raise ValueError("raw file size disagrees with its sidecar")
    M = M.reshape(rows, cols).astype(np.float64)
    y = M[:, -1].astype(np.int64)
    n = n or int(side.get("n_classes") or (y.max() if y.size else 2))
    return Dataset(M[:, :-1], y, n)


def load_features(path: str, n: int | None = None) -> Dataset:
    if path.lower().endswith(".csv"):
        return read_csv(path, n)
    if os.path.exists(path + SIDECAR_SUFFIX):
        return read_raw(path, n)
    raise ValueError(f"{path}: expected a .csv file or a raw file with a JSON sidecar")
