from __future__ import annotations

import numpy as np

from ..dataset import SeriesFile
from .base import DetectorError, ErrorSeries


def rolling_predictor_error(
    file: SeriesFile, window: int, detector_id: str = "rolling_predictor"
) -> ErrorSeries:
    """Squared deviation of x_t from the mean of the previous ``window`` rows.

    Averaged over features; the first ``window`` positions are warm-up.
    """
    n = len(file)
    if window < 1:
        raise DetectorError("window must be >= 1")
    if window >= n:
        raise DetectorError(f"window {window} >= series length {n}")
    X = file.values
    cs = np.vstack([np.zeros((1, X.shape[1])), np.cumsum(X, axis=0)])
    prev_mean = (cs[window:n] - cs[: n - window]) / window
    diff = X[window:] - prev_mean
    out = np.full(n, np.nan)
    out[window:] = np.mean(diff * diff, axis=1)
    return ErrorSeries(file.id, detector_id, out)
