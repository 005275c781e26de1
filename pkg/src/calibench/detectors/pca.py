from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import SeriesFile, SplitView
from .base import DetectorError, ErrorSeries

EXACT_MAX_DIM = 4096
# relative slack when comparing cumulative explained variance to the target
_RATIO_TOL = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    retained_variance_ratio: float
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        Xc = np.asarray(X, dtype=np.float64) - self.mean
        return self.mean + (Xc @ self.components.T) @ self.components

    def equals(self, other: "PcaModel") -> bool:
        return (
            np.array_equal(self.mean, other.mean)
            and np.array_equal(self.components, other.components)
            and self.retained_variance_ratio == other.retained_variance_ratio
        )


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # deterministic orientation: largest-magnitude entry of each row positive
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _exact_spectrum(Xc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, d = Xc.shape
    if d <= EXACT_MAX_DIM:
        cov = Xc.T @ Xc / (n - 1)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1]
        return np.clip(vals[order], 0.0, None), vecs[:, order].T
    # wide data with few rows: eigenvectors of the Gram matrix
    gram = Xc @ Xc.T / (n - 1)
    vals, u = np.linalg.eigh(gram)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    u = u[:, order]
    keep = vals > vals[0] * 1e-14 if vals[0] > 0 else np.zeros(len(vals), dtype=bool)
    vecs = (Xc.T @ u[:, keep]) / np.sqrt(vals[keep] * (n - 1))
    return vals[keep], vecs.T


def _randomized_spectrum(Xc, target, total, seed):
    """Leading components by seeded randomized subspace iteration.

    The rank is doubled until the captured variance reaches ``target``.
    """
    n, d = Xc.shape
    rng = np.random.default_rng(seed)
    k = 64
    while True:
        ell = min(k + 16, n, d)
        Q = np.linalg.qr(Xc @ rng.standard_normal((d, ell)))[0]
        for _ in range(4):
            Q = np.linalg.qr(Xc.T @ Q)[0]
            Q = np.linalg.qr(Xc @ Q)[0]
        _, s, vt = np.linalg.svd(Q.T @ Xc, full_matrices=False)
        vals = s * s / (n - 1)
        if vals.sum() >= target * total * (1 - _RATIO_TOL) or ell >= min(n, d):
            return vals, vt
        k *= 2


def fit_pca(file: SeriesFile, view: SplitView, retained_variance: float = 0.70,
            seed: int = 0) -> PcaModel:
    """Principal directions of training-period rows covering ``retained_variance``.

    Exact symmetric eigendecomposition for d <= 4096 (or few rows);
    seeded randomized iteration otherwise.
    """
    if not 0.0 < retained_variance <= 1.0:
        raise DetectorError("retained_variance must lie in (0, 1]")
    a, b = view.training_period
    X = file.values[a:b]
    if len(X) < 2:
        raise DetectorError("PCA needs at least 2 training rows")
    mean = X.mean(axis=0)
    Xc = X - mean
    n, d = Xc.shape
    total = float(np.einsum("ij,ij->", Xc, Xc) / (n - 1))
    if total <= 0.0:
        return PcaModel(mean, np.zeros((0, d)), 1.0, np.zeros(0))

    if d <= EXACT_MAX_DIM or n <= EXACT_MAX_DIM:
        vals, vecs = _exact_spectrum(Xc)
    else:
        vals, vecs = _randomized_spectrum(Xc, retained_variance, total, seed)

    cum = np.cumsum(vals) / total
    hit = np.flatnonzero(cum >= retained_variance * (1 - _RATIO_TOL))
    k = int(hit[0]) + 1 if len(hit) else len(vals)
    components = _fix_signs(vecs[:k])
    return PcaModel(mean, components, float(min(cum[k - 1], 1.0)), vals[:k])


def pca_error(model: PcaModel, file: SeriesFile, detector_id: str = "pca") -> ErrorSeries:
    """Mean squared reconstruction residual per timestamp."""
    if file.dimension != len(model.mean):
        raise DetectorError(f"model expects {len(model.mean)} features, got {file.dimension}")
    Xc = file.values - model.mean
    resid = Xc - (Xc @ model.components.T) @ model.components
    return ErrorSeries(file.id, detector_id, np.mean(resid * resid, axis=1))
