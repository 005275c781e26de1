"""Ranking boards, score stability and centroid-distance drift diagnostics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import EPS, SeriesFile, SplitView, format_timestamp

ALL_TIE = "all_tie_rank1"
NO_DETECTION = "no_detection"
RANKED = "ranks"


# ---------------------------------------------------------------------------
# score matrix


@dataclass(frozen=True)
class SubgroupScores:
    dataset: str
    subgroup: str
    scores: Mapping[str, float | None]  # None marks an absent cell
    gt: int | None  # test windows; None = positive but not reported


@dataclass
class ScoreMatrix:
    detectors: list[str]
    rows: list[SubgroupScores] = field(default_factory=list)

    def datasets(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.dataset not in seen:
                seen.append(r.dataset)
        return seen

    def restrict(self, dataset: str) -> "ScoreMatrix":
        return ScoreMatrix(self.detectors, [r for r in self.rows if r.dataset == dataset])

    def drop_detector(self, detector: str) -> "ScoreMatrix":
        keep = [d for d in self.detectors if d != detector]
        rows = [SubgroupScores(r.dataset, r.subgroup, {d: r.scores[d] for d in keep}, r.gt)
                for r in self.rows]
        return ScoreMatrix(keep, rows)

    def cells(self) -> list[float]:
        return [r.scores[d] for r in self.rows for d in self.detectors
                if r.scores.get(d) is not None]

    @classmethod
    def from_csv(cls, path) -> "ScoreMatrix":
        """Columns ``dataset,subgroup,gt,<detector>...``; empty ``gt`` = positive, unreported."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            detectors = [c for c in reader.fieldnames if c not in ("dataset", "subgroup", "gt")]
            rows = []
            for rec in reader:
                gt = rec["gt"].strip()
                scores = {d: (float(rec[d]) if rec[d].strip() else None) for d in detectors}
                rows.append(SubgroupScores(rec["dataset"], rec["subgroup"], scores,
                                           int(gt) if gt else None))
        return cls(detectors, rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "subgroup", "gt", *self.detectors])
            for r in self.rows:
                w.writerow([r.dataset, r.subgroup, "" if r.gt is None else r.gt,
                            *["" if r.scores[d] is None else f"{r.scores[d]:.2f}"
                              for d in self.detectors]])


# ---------------------------------------------------------------------------
# ranking


def _r2(x: float) -> float:
    return round(float(x), 2) + 0.0


def dense_ranks(scores: Sequence[float]) -> list[int]:
    """Dense ranks by descending score after rounding to 2 decimals."""
    rounded = [_r2(s) for s in scores]
    distinct = sorted(set(rounded), reverse=True)
    pos = {v: i + 1 for i, v in enumerate(distinct)}
    return [pos[v] for v in rounded]


@dataclass(frozen=True)
class SubgroupOutcome:
    kind: str  # RANKED, ALL_TIE or NO_DETECTION
    ranks: Mapping[str, int] = field(default_factory=dict)


def rank_subgroup(scores: Mapping[str, float], gt: int | None) -> SubgroupOutcome:
    """Classify one subgroup: correct non-detection tie, no-detection, or dense ranks.

    ``gt`` is the test window count; ``None`` means positive but unreported.
    """
    if len(scores) < 2:
        raise ValueError("ranking needs at least 2 detectors")
    if all(_r2(s) == 0.0 for s in scores.values()):
        if gt == 0:
            return SubgroupOutcome(ALL_TIE, {d: 1 for d in scores})
        return SubgroupOutcome(NO_DETECTION)
    names = list(scores)
    ranks = dense_ranks([scores[d] for d in names])
    return SubgroupOutcome(RANKED, dict(zip(names, ranks)))


@dataclass
class RankBoard:
    detectors: list[str]
    outcomes: dict[str, SubgroupOutcome]  # keyed "<dataset>/<subgroup>"
    counts: dict[str, dict[int, int]]
    tie_count: int
    no_detection_count: int
    max_rank: int

    def to_dict(self) -> dict:
        return {
            "detectors": self.detectors,
            "tie_count": self.tie_count,
            "no_detection_count": self.no_detection_count,
            "max_rank": self.max_rank,
            "counts": {d: {str(k): v for k, v in sorted(c.items())}
                       for d, c in self.counts.items()},
            "subgroups": {k: {"outcome": o.kind, "ranks": dict(o.ranks)}
                          for k, o in self.outcomes.items()},
        }

    def rows(self) -> list[dict]:
        """One row per detector: rank counts plus tie and no-detection columns."""
        out = []
        for d in self.detectors:
            row = {"detector": d}
            for r in range(1, self.max_rank + 1):
                row[f"rank_{r}"] = self.counts[d].get(r, 0)
            row["tie"] = self.tie_count
            row["no_detection"] = self.no_detection_count
            out.append(row)
        return out


def build_board(matrix: ScoreMatrix) -> RankBoard:
    """Aggregate subgroup outcomes into per-detector rank counts.

    Every detector/subgroup pair lands in exactly one of: a rank, the tie
    column, or the no-detection column.
    """
    outcomes: dict[str, SubgroupOutcome] = {}
    counts = {d: {} for d in matrix.detectors}
    tie = nodet = 0
    max_rank = len(matrix.detectors)
    for row in matrix.rows:
        if any(row.scores.get(d) is None for d in matrix.detectors):
            raise ValueError(f"incomplete score row {row.dataset}/{row.subgroup}")
        out = rank_subgroup({d: row.scores[d] for d in matrix.detectors}, row.gt)
        outcomes[f"{row.dataset}/{row.subgroup}"] = out
        if out.kind == ALL_TIE:
            tie += 1
        elif out.kind == NO_DETECTION:
            nodet += 1
        else:
            for d, r in out.ranks.items():
                counts[d][r] = counts[d].get(r, 0) + 1
    return RankBoard(list(matrix.detectors), outcomes, counts, tie, nodet, max_rank)


def build_boards(matrix: ScoreMatrix) -> dict[str, RankBoard]:
    """Overall board under ``"overall"`` plus one board per dataset."""
    boards = {"overall": build_board(matrix)}
    for ds in matrix.datasets():
        boards[ds] = build_board(matrix.restrict(ds))
    return boards


def write_board_csv(path, boards: Mapping[str, RankBoard]) -> None:
    max_rank = max(b.max_rank for b in boards.values())
    cols = ["board", "detector"] + [f"rank_{r}" for r in range(1, max_rank + 1)] + ["tie", "no_detection"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for name, board in boards.items():
            for row in board.rows():
                w.writerow({"board": name, **{c: row.get(c, 0) for c in cols[1:]}})


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityStats:
    score_min: float
    score_max: float
    std_dev: float
    negative_count: int
    total_count: int

    def to_dict(self) -> dict:
        return {
            "score_min": self.score_min,
            "score_max": self.score_max,
            "std_dev": self.std_dev,
            "negative_count": self.negative_count,
            "total_count": self.total_count,
        }


def stability(matrix: ScoreMatrix) -> StabilityStats:
    """Range, sample std and negative count over every score cell."""
    cells = np.asarray([_r2(c) for c in matrix.cells()], dtype=np.float64)
    if len(cells) < 2:
        raise ValueError("stability needs at least 2 cells")
    return StabilityStats(
        score_min=float(cells.min()),
        score_max=float(cells.max()),
        std_dev=float(cells.std(ddof=1)),
        negative_count=int((cells < 0).sum()),
        total_count=len(cells),
    )


# ---------------------------------------------------------------------------
# centroid drift


@dataclass(frozen=True)
class CentroidDiagnostics:
    centroid: np.ndarray
    distances: np.ndarray
    split_index: int
    log_scaled: bool
    in_window: np.ndarray
    timestamps: np.ndarray
    timestamp_format: str = "iso"

    def raw_distances(self) -> np.ndarray:
        return np.expm1(self.distances) if self.log_scaled else self.distances


def training_centroid(values: np.ndarray) -> np.ndarray:
    # pairwise summation along contiguous rows keeps wide, long sums accurate
    cols = np.ascontiguousarray(np.asarray(values, dtype=np.float64).T)
    return cols.sum(axis=1) / values.shape[0]


def centroid_diagnostics(file: SeriesFile, view: SplitView, log_scale: bool = False) -> CentroidDiagnostics:
    """L2 distance of every row to the training-period centroid."""
    a, b = view.training_period
    if b <= a:
        raise ValueError("empty training period")
    mu = training_centroid(file.values[a:b])
    d = np.sqrt(np.einsum("ij,ij->i", file.values - mu, file.values - mu))
    if log_scale:
        d = np.log1p(d)
    return CentroidDiagnostics(mu, d, b, log_scale, file.labels.mask(file.timestamps),
                               file.timestamps, file.timestamp_format)


def drift_summary(diag: CentroidDiagnostics) -> dict:
    """Mean training/test distances and their ratio (computed on unscaled distances)."""
    d = diag.raw_distances()
    train, test = d[: diag.split_index], d[diag.split_index:]
    if len(train) == 0 or len(test) == 0:
        raise ValueError("both segments must be non-empty")
    tr, te = float(train.mean()), float(test.mean())
    return {"train_mean_D": tr, "test_mean_D": te, "shift_ratio": te / max(tr, EPS)}


def write_diagnostics_csv(path, diag: CentroidDiagnostics) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "distance", "segment", "in_anomaly_window"])
        for i, (t, dist) in enumerate(zip(diag.timestamps, diag.distances)):
            w.writerow([format_timestamp(t, diag.timestamp_format), repr(float(dist)),
                        "train" if i < diag.split_index else "test", int(diag.in_window[i])])


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
