"""Training-only search over likelihood parameters and single-shot test evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .dataset import EPS, AnomalyWindowSet, SplitView
from .detectors.base import ErrorSeries
from .likelihood import LikelihoodParams
from .nab import NabReport, ScoringProfile, normalize, raw_from_bounds, score_raw, score_subgroup

SELECTION_RULE = (
    "max validation score; ties -> higher threshold, larger long window, "
    "smaller short window, lower trial index"
)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    long_window_range: tuple[int, int] = (64, 512)
    short_window_range: tuple[int, int] = (3, 32)
    threshold_range: tuple[float, float] = (0.90, 0.9995)
    trial_budget: int = 100
    seed: int = 0

    def __post_init__(self):
        (wl, wh), (sl, sh), (tl, th) = (
            self.long_window_range, self.short_window_range, self.threshold_range)
        if not (2 <= wl <= wh and 1 <= sl <= sh):
            raise CalibrationError("window ranges must be non-empty with W >= 2, W' >= 1")
        if not 0.0 < tl <= th < 1.0:
            raise CalibrationError("threshold range must lie within (0, 1)")
        if self.trial_budget < 1:
            raise CalibrationError("trial budget must be positive")
        if sl >= wh:
            raise CalibrationError("no (W, W') pair in the space satisfies W' < W")

    def sample(self) -> list[LikelihoodParams]:
        """``trial_budget`` seeded draws with W' < W enforced per draw."""
        rng = np.random.default_rng(self.seed)
        (wl, wh), (sl, sh), (tl, th) = (
            self.long_window_range, self.short_window_range, self.threshold_range)
        out = []
        while len(out) < self.trial_budget:
            w = int(rng.integers(wl, wh + 1))
            smax = min(sh, w - 1)
            if smax < sl:
                continue
            ws = int(rng.integers(sl, smax + 1))
            thr = float(rng.uniform(tl, th))
            out.append(LikelihoodParams(w, ws, thr))
        return out


@dataclass(frozen=True)
class CalibrationTrial:
    params: LikelihoodParams
    validation_score: float
    trial_index: int

    def to_dict(self) -> dict:
        return {"trial_index": self.trial_index, "validation_score": self.validation_score,
                **self.params.to_dict()}


@dataclass(frozen=True)
class CalibrationResult:
    best: LikelihoodParams
    best_score: float
    trials: tuple[CalibrationTrial, ...]
    selection_rule: str = SELECTION_RULE

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict(),
            "best_validation_score": self.best_score,
            "selection_rule": self.selection_rule,
            "trials": [t.to_dict() for t in self.trials],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        def params(p):
            return LikelihoodParams(p["long_window"], p["short_window"], p["threshold"])
        trials = tuple(CalibrationTrial(params(t), t["validation_score"], t["trial_index"])
                       for t in d["trials"])
        return cls(params(d["best"]), d["best_validation_score"], trials, d["selection_rule"])


@dataclass(frozen=True)
class CalibrationItem:
    """One file's error stream, ground truth and split, as seen by calibration."""

    errors: np.ndarray
    truth: AnomalyWindowSet
    timestamps: np.ndarray
    view: SplitView

    @classmethod
    def of(cls, errors, truth, timestamps, view) -> "CalibrationItem":
        e = errors.values if isinstance(errors, ErrorSeries) else np.asarray(errors, float)
        if len(e) != len(timestamps):
            raise CalibrationError("errors and timestamps differ in length")
        return cls(e, truth, np.asarray(timestamps), view)


class _ValidationSlice:
    """Training-period data of one item; nothing past the training period is kept."""

    def __init__(self, item: CalibrationItem):
        v0, v1 = item.view.validation_range
        self.v0, self.v1 = v0, v1
        self.history = np.array(item.errors[:v1], dtype=np.float64)
        ts = item.timestamps[v0:v1]
        truth = item.truth.restrict(int(ts[0]), int(ts[-1]))
        self.starts, self.ends = truth.index_bounds(ts)
        self.defined = int(np.count_nonzero(~np.isnan(self.history)))

    def flags(self, w: int, ws: int, thr: float, cache: dict) -> np.ndarray:
        key = (w, ws)
        L = cache.get(key)
        if L is None:
            lo = max(0, self.v0 - w + 1)
            L = kernels.rolling_likelihood(self.history[lo:], w, ws, EPS)[self.v0 - lo:]
            cache[key] = L
        with np.errstate(invalid="ignore"):
            return L > thr


def _pooled_score(slices, caches, params: LikelihoodParams, profile: ScoringProfile) -> float:
    raws, nws = [], 0
    for sl, cache in zip(slices, caches):
        flags = sl.flags(params.long_window, params.short_window, params.threshold, cache)
        raws.append(raw_from_bounds(flags, sl.starts, sl.ends, profile))
        nws += len(sl.starts)
    return normalize(math.fsum(raws), nws, profile)


def _selection_key(t: CalibrationTrial):
    p = t.params
    return (t.validation_score, p.threshold, p.long_window, -p.short_window, -t.trial_index)


def calibrate_items(
    items: Sequence[CalibrationItem],
    space: SearchSpace = SearchSpace(),
    profile: ScoringProfile = ScoringProfile(),
) -> CalibrationResult:
    """Pick (W, W', threshold) maximizing the pooled validation NAB score.

    Every trial is scored on the validation slices only, with truth clipped
    to validation timestamps and warm-up history taken from the train core.
    Test-range values and labels are never read.
    """
    if not items:
        raise CalibrationError("nothing to calibrate")
    slices = [_ValidationSlice(it) for it in items]
    w_min = space.long_window_range[0]
    if all(s.defined < w_min for s in slices):
        raise CalibrationError(
            f"training-period history shorter than the smallest long window ({w_min})"
        )
    caches = [dict() for _ in slices]
    trials = tuple(
        CalibrationTrial(p, _pooled_score(slices, caches, p, profile), i)
        for i, p in enumerate(space.sample())
    )
    best = max(trials, key=_selection_key)
    return CalibrationResult(best.params, best.validation_score, trials)


def calibrate(errors, truth: AnomalyWindowSet, timestamps, view: SplitView,
              space: SearchSpace = SearchSpace(),
              profile: ScoringProfile = ScoringProfile()) -> CalibrationResult:
    """Single-file calibration; see :func:`calibrate_items`."""
    return calibrate_items([CalibrationItem.of(errors, truth, timestamps, view)], space, profile)


def flag_test_range(errors, view: SplitView, params: LikelihoodParams) -> np.ndarray:
    """Detections over the test range, warm-up taken from the last W-1 training errors."""
    e = errors.values if isinstance(errors, ErrorSeries) else np.asarray(errors, float)
    t0, t1 = view.test_range
    if t1 <= t0:
        raise CalibrationError("empty test slice")
    lo = max(0, t0 - params.long_window + 1)
    L = kernels.rolling_likelihood(e[lo:t1], params.long_window, params.short_window, EPS)
    with np.errstate(invalid="ignore"):
        return L[t0 - lo:] > params.threshold


def evaluate_test(errors, truth: AnomalyWindowSet, timestamps, view: SplitView,
                  params: LikelihoodParams, profile: ScoringProfile = ScoringProfile(),
                  timestamp_format: str = "iso") -> NabReport:
    """Run the calibrated detector once over the test range and score it."""
    flags = flag_test_range(errors, view, params)
    t0, t1 = view.test_range
    ts = np.asarray(timestamps)[t0:t1]
    test_truth = truth.restrict(int(ts[0]), int(ts[-1]))
    return score_raw(flags, test_truth, ts, profile, timestamp_format)


def evaluate_subgroup(reports: Sequence[NabReport], profile: ScoringProfile = ScoringProfile()) -> float:
    return score_subgroup(reports, profile)
