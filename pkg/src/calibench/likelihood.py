"""Rolling-window anomaly likelihood and thresholded detection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import EPS, format_timestamp
from .detectors.base import ErrorSeries


class LikelihoodError(ValueError):
    pass


@dataclass(frozen=True)
class LikelihoodParams:
    long_window: int
    short_window: int
    threshold: float

    def __post_init__(self):
        if self.long_window < 2:
            raise LikelihoodError("long window must be >= 2")
        if not 1 <= self.short_window < self.long_window:
            raise LikelihoodError("short window must satisfy 1 <= W' < W")
        if not 0.0 < self.threshold < 1.0:
            raise LikelihoodError("threshold must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "long_window": int(self.long_window),
            "short_window": int(self.short_window),
            "threshold": float(self.threshold),
        }


@dataclass(frozen=True)
class RollingStats:
    """Per-timestamp long mean, long std (floored) and short mean; NaN in warm-up."""

    mu: np.ndarray
    sigma: np.ndarray
    mu_short: np.ndarray


def _as_array(errors) -> np.ndarray:
    if isinstance(errors, ErrorSeries):
        return errors.values
    return np.asarray(errors, dtype=np.float64)


def rolling_stats(errors, params: LikelihoodParams, eps: float = EPS) -> RollingStats:
    e = _as_array(errors)
    if np.count_nonzero(~np.isnan(e)) < params.long_window:
        raise LikelihoodError(
            f"need at least {params.long_window} defined errors, got {np.count_nonzero(~np.isnan(e))}"
        )
    mu, sigma, mu_short = kernels.rolling_stats(e, params.long_window, params.short_window, eps)
    return RollingStats(mu, sigma, mu_short)


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def likelihood(mu: float, sigma: float, mu_short: float) -> float:
    """One minus the Gaussian tail probability of the standardized gap."""
    if not sigma >= EPS:
        raise LikelihoodError("sigma must be floored at eps")
    return normal_cdf((mu_short - mu) / sigma)


def likelihood_series(errors, params: LikelihoodParams, eps: float = EPS) -> np.ndarray:
    """L_t for every position; NaN until a full long window of defined errors."""
    e = _as_array(errors)
    return kernels.rolling_likelihood(e, params.long_window, params.short_window, eps)


def detect(likelihoods, threshold: float) -> np.ndarray:
    """Flags where L_t is defined and strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise LikelihoodError("threshold must lie in (0, 1)")
    L = np.asarray(likelihoods, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return L > threshold


def dump_likelihood_csv(path, timestamps, errors, params: LikelihoodParams,
                        timestamp_format: str = "iso") -> None:
    """Debug dump of ``t, mu, sigma, mu_short, L`` for defined positions."""
    e = _as_array(errors)
    st = kernels.rolling_stats(e, params.long_window, params.short_window, EPS)
    L = kernels.rolling_likelihood(e, params.long_window, params.short_window, EPS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "mu", "sigma", "mu_short", "likelihood"])
        for i in np.flatnonzero(~np.isnan(L)):
            w.writerow([format_timestamp(timestamps[i], timestamp_format),
                        repr(float(st[0][i])), repr(float(st[1][i])),
                        repr(float(st[2][i])), repr(float(L[i]))])
