"""Deterministic synthetic telemetry used by the tests and the bundled mini corpus."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import AnomalyWindowSet, SeriesFile, format_timestamp

ISO_START = 1_400_000_000 * 1_000_000  # 2014-05-13, in microseconds
MINUTE = 60 * 1_000_000


def _stamps(n: int, fmt: str, step: int) -> np.ndarray:
    if fmt == "epoch":
        return np.arange(n, dtype=np.int64) * step
    return ISO_START + np.arange(n, dtype=np.int64) * step * 1_000_000


def blob_with_outliers(seed: int, n_inliers: int = 250, n_outliers: int = 5,
                       radius: float = 12.0) -> tuple[SeriesFile, np.ndarray]:
    """2-D standard Gaussian blob plus far outliers on a ring; returns (file, outlier rows)."""
    rng = np.random.default_rng(seed)
    inl = rng.normal(size=(n_inliers, 2))
    ang = rng.uniform(0, 2 * np.pi, n_outliers)
    out = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    X = np.vstack([inl, out])
    perm = rng.permutation(len(X))
    X = X[perm]
    outlier_rows = np.flatnonzero(perm >= n_inliers)
    return SeriesFile("blob", np.arange(len(X)), X, timestamp_format="epoch"), outlier_rows


def latent_telemetry(
    seed: int,
    n: int = 3000,
    dim: int = 20,
    rank: int = 3,
    windows: tuple[tuple[int, int], ...] = ((300, 325), (900, 925), (1500, 1525),
                                             (1950, 1975), (2300, 2325), (2700, 2725)),
    drift_step: float = 0.0,
    drift_every: int = 60,
    drift_from: int | None = None,
    magnitude: float = 4.0,
    fmt: str = "epoch",
    file_id: str = "latent",
) -> SeriesFile:
    """Low-rank multivariate telemetry with off-subspace anomaly bursts.

    With ``drift_step > 0`` every coordinate from ``drift_from`` (default:
    the 70% mark) onward is offset by a staircase that rises by
    ``drift_step`` every ``drift_every`` rows, a global geometric shift.
    """
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(dim, rank))
    X = rng.normal(size=(n, rank)) @ A.T + 0.3 * rng.normal(size=(n, dim))
    for a, b in windows:
        v = rng.normal(size=dim)
        v -= A @ np.linalg.lstsq(A, v, rcond=None)[0]
        X[a : b + 1] += magnitude * v / np.linalg.norm(v)
    if drift_step:
        start = int(0.7 * n) if drift_from is None else drift_from
        steps = (np.arange(n - start) // drift_every + 1).astype(float)
        X[start:] += drift_step * steps[:, None]
    ts = _stamps(n, fmt, 60)
    labels = AnomalyWindowSet(tuple((int(ts[a]), int(ts[b])) for a, b in windows))
    return SeriesFile(file_id, ts, X, labels, fmt)


def app5_style(seed: int) -> SeriesFile:
    """Stable geometry across the split."""
    return latent_telemetry(seed, file_id="app5_like")


def app9_style(seed: int) -> SeriesFile:
    """Test segment drifts away from the training centroid."""
    return latent_telemetry(seed, drift_step=0.7, file_id="app9_like")


def level_shift_series(seed: int, n: int = 1500, at: tuple[int, int] = (1000, 1020),
                       shift: float = 6.0, fmt: str = "epoch") -> SeriesFile:
    """Univariate noise with one level-shift anomaly window."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x[at[0] : at[1] + 1] += shift
    ts = _stamps(n, fmt, 300)
    labels = AnomalyWindowSet(((int(ts[at[0]]), int(ts[at[1]])),))
    return SeriesFile("level_shift", ts, x, labels, fmt)


# ---------------------------------------------------------------------------
# mini corpus

MINI_SUBGROUPS = {
    # name: (file seeds, windows per file, drift)
    "steady": ((11, 12), ((200, 215), (560, 575), (960, 975), (1300, 1315)), 0.0),
    "drifting": ((21,), ((250, 265), (700, 715), (970, 985), (1250, 1265)), 0.5),
    "quiet": ((31, 32), ((300, 315), (800, 815)), 0.0),
}


def write_mini_corpus(root) -> Path:
    """Write ``root/<subgroup>/*.csv`` plus ``root/labels.json``.

    Three subgroups of 4-feature, 1500-row ISO-timestamped files. ``quiet``
    has no anomaly windows in its test range.
    """
    root = Path(root)
    labels: dict[str, list[list[str]]] = {}
    for sub, (seeds, windows, drift) in MINI_SUBGROUPS.items():
        (root / sub).mkdir(parents=True, exist_ok=True)
        for seed in seeds:
            f = latent_telemetry(seed, n=1500, dim=4, rank=2, windows=windows,
                                 drift_step=drift, drift_every=50, fmt="iso",
                                 file_id=f"{sub}/series_{seed}.csv")
            path = root / sub / f"series_{seed}.csv"
            with open(path, "w") as fh:
                fh.write("timestamp," + ",".join(f"m{j}" for j in range(f.dimension)) + "\n")
                for t, row in zip(f.timestamps, f.values):
                    fh.write(format_timestamp(t) + "," + ",".join(f"{v:.6f}" for v in row) + "\n")
            labels[f.id] = [[format_timestamp(a), format_timestamp(b)] for a, b in f.labels.windows]
    (root / "labels.json").write_text(json.dumps(labels, indent=2, sort_keys=True) + "\n")
    return root
