"""Isolation Forest built from scratch on flat node arrays."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..dataset import SeriesFile, SplitView
from .base import DetectorError, ErrorSeries

EULER_GAMMA = 0.5772156649015329


def harmonic(i: int) -> float:
    """The ``i``-th harmonic number (exact sum up to 10**5, asymptotic beyond)."""
    if i <= 0:
        return 0.0
    if i <= 100_000:
        return float(math.fsum(1.0 / k for k in range(1, i + 1)))
    return math.log(i) + EULER_GAMMA + 1.0 / (2 * i) - 1.0 / (12 * i * i)


def average_path_length(n: int) -> float:
    """Mean unsuccessful-search path length in a BST of ``n`` items, c(n)."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass(frozen=True)
class IsolationForestModel:
    # flat node arrays shared by all trees; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    leaf_value: np.ndarray
    roots: np.ndarray
    subsample_size: int
    tree_count: int
    rng_seed: int
    dimension: int

    def tree_slice(self, i: int) -> slice:
        end = self.roots[i + 1] if i + 1 < len(self.roots) else len(self.feature)
        return slice(int(self.roots[i]), int(end))

    @property
    def trees(self) -> list[dict]:
        out = []
        for i in range(self.tree_count):
            s = self.tree_slice(i)
            out.append({k: getattr(self, k)[s] for k in
                        ("feature", "threshold", "left", "right", "size", "depth")})
        return out

    @property
    def max_depth(self) -> int:
        return max(0, math.ceil(math.log2(self.subsample_size))) if self.subsample_size > 1 else 0

    def equals(self, other: "IsolationForestModel") -> bool:
        """Bit-wise equality of every node array and setting."""
        arrays = ("feature", "threshold", "left", "right", "size", "depth", "leaf_value", "roots")
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays) and (
            self.subsample_size, self.tree_count, self.rng_seed, self.dimension
        ) == (other.subsample_size, other.tree_count, other.rng_seed, other.dimension)


class _TreeBuilder:
    def __init__(self, X: np.ndarray, rng: np.random.Generator, max_depth: int):
        self.X = X
        self.rng = rng
        self.max_depth = max_depth
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.size: list[int] = []
        self.depth: list[int] = []

    def _new(self, size: int, depth: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(size)
        self.depth.append(depth)
        return len(self.feature) - 1

    def build(self, rows: np.ndarray, depth: int, offset: int) -> int:
        node = self._new(len(rows), depth)
        if depth >= self.max_depth or len(rows) <= 1:
            return node
        sub = self.X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if len(candidates) == 0:
            return node
        q = int(candidates[self.rng.integers(len(candidates))])
        while True:
            p = lo[q] + self.rng.random() * (hi[q] - lo[q])
            if lo[q] < p <= hi[q]:
                break
        go_left = sub[:, q] < p
        self.feature[node] = q
        self.threshold[node] = float(p)
        self.left[node] = offset + self.build(rows[go_left], depth + 1, offset)
        self.right[node] = offset + self.build(rows[~go_left], depth + 1, offset)
        return node


def fit_isolation_forest(
    file: SeriesFile,
    view: SplitView,
    tree_count: int = 100,
    subsample_size: int = 256,
    seed: int = 0,
) -> IsolationForestModel:
    """Fit on training-period rows only.

    Each tree sees an independent uniform subsample (without replacement) of
    ``min(subsample_size, n_train)`` rows and is grown to depth
    ``ceil(log2(subsample))``. Splits pick a feature uniformly among those
    that are not constant in the node.
    """
    a, b = view.training_period
    X = np.ascontiguousarray(file.values[a:b])
    if len(X) == 0:
        raise DetectorError("empty training period")
    if tree_count < 1 or subsample_size < 1:
        raise DetectorError("tree_count and subsample_size must be positive")
    psi = min(subsample_size, len(X))
    max_depth = math.ceil(math.log2(psi)) if psi > 1 else 0
    rng = np.random.default_rng(seed)

    cols = {k: [] for k in ("feature", "threshold", "left", "right", "size", "depth")}
    roots = []
    offset = 0
    for _ in range(tree_count):
        rows = np.sort(rng.choice(len(X), size=psi, replace=False))
        tb = _TreeBuilder(X, rng, max_depth)
        tb.build(rows, 0, offset)
        roots.append(offset)
        for k in cols:
            cols[k].extend(getattr(tb, k))
        offset += len(tb.feature)

    size = np.asarray(cols["size"], dtype=np.int64)
    depth = np.asarray(cols["depth"], dtype=np.int64)
    correction = np.array([average_path_length(int(s)) for s in size])
    return IsolationForestModel(
        feature=np.asarray(cols["feature"], dtype=np.int64),
        threshold=np.asarray(cols["threshold"], dtype=np.float64),
        left=np.asarray(cols["left"], dtype=np.int64),
        right=np.asarray(cols["right"], dtype=np.int64),
        size=size,
        depth=depth,
        leaf_value=depth + correction,
        roots=np.asarray(roots, dtype=np.int64),
        subsample_size=psi,
        tree_count=tree_count,
        rng_seed=seed,
        dimension=file.dimension,
    )


def path_lengths(model: IsolationForestModel, X: np.ndarray) -> np.ndarray:
    """Mean path length E[h(x)] over the forest, leaf corrections included."""
    return kernels.iforest_path_lengths(
        X, model.feature, model.threshold, model.left, model.right, model.leaf_value, model.roots
    )


def score_isolation_forest(
    model: IsolationForestModel, file: SeriesFile, detector_id: str = "isolation_forest"
) -> ErrorSeries:
    """Anomaly score ``2 ** (-E[h(x)] / c(psi))`` in (0, 1]; larger is more anomalous."""
    if file.dimension != model.dimension:
        raise DetectorError(f"model expects {model.dimension} features, got {file.dimension}")
    h = path_lengths(model, file.values)
    cn = average_path_length(model.subsample_size)
    if cn == 0:
        return ErrorSeries(file.id, detector_id, np.ones_like(h))
    # libm pow rounds correctly far more often than numpy's vectorized pow
    scores = np.fromiter((math.pow(2.0, -v / cn) for v in h.tolist()), np.float64, len(h))
    return ErrorSeries(file.id, detector_id, scores)
