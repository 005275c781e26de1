"""NAB-style window scoring: earliest-detection credit, distance-scaled FP
penalties and a per-window FN charge, plus 0/100 normalization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import AnomalyWindowSet, format_timestamp


@dataclass(frozen=True)
class ScoringProfile:
    """Weights of the NAB "standard" application profile by default."""

    tp_weight: float = 1.0
    fp_weight: float = 0.11
    fn_weight: float = 1.0
    sigmoid_steepness: float = 5.0

    def __post_init__(self):
        if min(self.tp_weight, self.fp_weight, self.fn_weight) < 0:
            raise ValueError("profile weights must be >= 0")
        if self.tp_weight * self.max_credit() + self.fn_weight <= 0:
            raise ValueError("tp_weight and fn_weight cannot both be zero")

    def max_credit(self) -> float:
        return scaled_sigmoid(-1.0, self.sigmoid_steepness)

    def to_dict(self) -> dict:
        return {
            "tp_weight": self.tp_weight,
            "fp_weight": self.fp_weight,
            "fn_weight": self.fn_weight,
            "sigmoid_steepness": self.sigmoid_steepness,
        }


def scaled_sigmoid(y: float, steepness: float = 5.0) -> float:
    """2 / (1 + e^(k y)) - 1: +max at y=-1, 0 at y=0, negative for y>0."""
    return 2.0 / (1.0 + math.exp(steepness * y)) - 1.0


@dataclass(frozen=True)
class NabReport:
    raw_score: float
    normalized_score: float
    null_score: float
    perfect_score: float
    window_count: int
    detection_count: int
    fn_count: int
    per_window: tuple = ()
    fp_events: tuple = ()
    notes: tuple = field(default=())

    @property
    def tp_count(self) -> int:
        return self.window_count - self.fn_count

    def to_dict(self) -> dict:
        return {
            "raw_score": self.raw_score,
            "normalized_score": self.normalized_score,
            "null_score": self.null_score,
            "perfect_score": self.perfect_score,
            "window_count": self.window_count,
            "detection_count": self.detection_count,
            "tp_count": self.tp_count,
            "fn_count": self.fn_count,
            "fp_count": len(self.fp_events),
            "per_window": list(self.per_window),
            "fp_events": list(self.fp_events),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def null_and_perfect(window_count: int, profile: ScoringProfile) -> tuple[float, float]:
    return (-profile.fn_weight * window_count,
            profile.tp_weight * profile.max_credit() * window_count)


def normalize(raw: float, window_count: int, profile: ScoringProfile = ScoringProfile()) -> float:
    """Scale so the null detector scores 0 and the perfect detector 100.

    With no windows the denominator is that of a single window and the null
    score is 0, so false positives give a bounded negative score.
    """
    null, perfect = null_and_perfect(window_count, profile)
    if window_count == 0:
        null, perfect = 0.0, profile.tp_weight * profile.max_credit() + profile.fn_weight
    return 100.0 * (raw - null) / (perfect - null)


def _window_raw(flags, starts, ends, profile):
    earliest, credits, fp_index, fp_pen = kernels.nab_window_scores(
        flags, starts, ends, profile.tp_weight, profile.fp_weight, profile.sigmoid_steepness
    )
    missed = int(np.count_nonzero(earliest < 0))
    raw = float(credits.sum()) - profile.fn_weight * missed + float(fp_pen.sum())
    return raw, earliest, credits, fp_index, fp_pen, missed


def raw_from_bounds(flags, starts, ends, profile: ScoringProfile) -> float:
    """Raw score only; the fast path used inside calibration sweeps."""
    return _window_raw(flags, starts, ends, profile)[0]


def score_raw(
    detections,
    truth: AnomalyWindowSet,
    timestamps,
    profile: ScoringProfile = ScoringProfile(),
    timestamp_format: str = "iso",
) -> NabReport:
    """Score boolean detections aligned to ``timestamps`` against ``truth``.

    Windows that contain no timestamp are ignored.
    """
    flags = np.asarray(detections, dtype=bool)
    ts = np.asarray(timestamps)
    if len(flags) != len(ts):
        raise ValueError("detections and timestamps differ in length")
    starts, ends = truth.index_bounds(ts)
    raw, earliest, credits, fp_index, fp_pen, missed = _window_raw(flags, starts, ends, profile)
    nw = len(starts)
    null, perfect = null_and_perfect(nw, profile)

    def fmt(i):
        return format_timestamp(ts[i], timestamp_format)

    per_window = tuple(
        {
            "start": fmt(a),
            "end": fmt(b),
            "earliest_detection": fmt(e) if e >= 0 else None,
            "credit": float(c),
        }
        for a, b, e, c in zip(starts, ends, earliest, credits)
    )
    fp_events = tuple({"timestamp": fmt(i), "penalty": float(p)} for i, p in zip(fp_index, fp_pen))
    n_det = int(flags.sum())
    notes = ("correct non-detection",) if nw == 0 and n_det == 0 else ()
    return NabReport(
        raw_score=raw,
        normalized_score=normalize(raw, nw, profile),
        null_score=null,
        perfect_score=perfect,
        window_count=nw,
        detection_count=n_det,
        fn_count=missed,
        per_window=per_window,
        fp_events=fp_events,
        notes=notes,
    )


def score_subgroup(reports, profile: ScoringProfile = ScoringProfile()) -> float:
    """Normalized score from summed raw, null and perfect scores of the files."""
    reports = list(reports)
    if not reports:
        raise ValueError("score_subgroup needs at least one report")
    raw = math.fsum(r.raw_score for r in reports)
    null = math.fsum(r.null_score for r in reports)
    perfect = math.fsum(r.perfect_score for r in reports)
    if sum(r.window_count for r in reports) == 0:
        return normalize(raw, 0, profile)
    return 100.0 * (raw - null) / (perfect - null)


def write_window_csv(path, report: NabReport) -> None:
    """Per-window attribution table for audits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start", "end", "earliest_detection", "credit"])
        for row in report.per_window:
            w.writerow([row["start"], row["end"], row["earliest_detection"] or "", row["credit"]])
