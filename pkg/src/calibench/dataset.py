"""Telemetry ingestion, label alignment, chronological splits and normalization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EPS = 1e-8

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class DatasetError(ValueError):
    """Raised for unreadable, empty or inconsistent telemetry input."""


# ---------------------------------------------------------------------------
# timestamps


def parse_timestamp(raw, fmt: str = "iso") -> int:
    """Parse one timestamp cell to an integer instant.

    ``iso`` timestamps become microseconds since the Unix epoch (naive values
    are taken as UTC); ``epoch`` timestamps must be integral and are kept in
    their own unit. Integers are taken as already-parsed instants in either
    format. Raises ``ValueError`` on malformed input.
    """
    if isinstance(raw, (int, np.integer)) and not isinstance(raw, bool):
        return int(raw)
    if fmt == "epoch":
        value = float(str(raw).strip())
        if not math.isfinite(value) or value != int(value):
            raise ValueError(f"non-integral epoch timestamp {raw!r}")
        return int(value)
    if fmt != "iso":
        raise ValueError(f"unknown timestamp format {fmt!r}")
    text = str(raw).strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - _EPOCH
    return (delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds


def format_timestamp(value: int, fmt: str = "iso") -> str:
    if fmt == "epoch":
        return str(int(value))
    dt = _EPOCH + timedelta(microseconds=int(value))
    if dt.microsecond:
        return dt.strftime("%Y-%m-%d %H:%M:%S.%f")
    return dt.strftime("%Y-%m-%d %H:%M:%S")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class AnomalyWindowSet:
    """Sorted, non-overlapping inclusive ``(start, end)`` instants."""

    windows: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        prev_end = None
        for start, end in self.windows:
            if start > end:
                raise DatasetError(f"window start {start} after end {end}")
            if prev_end is not None and start <= prev_end:
                raise DatasetError("windows must be sorted and non-overlapping")
            prev_end = end

    @classmethod
    def merged(cls, windows: Iterable[tuple[int, int]]) -> "AnomalyWindowSet":
        """Build from arbitrary windows, merging any that overlap."""
        out: list[list[int]] = []
        for start, end in sorted((int(a), int(b)) for a, b in windows):
            if start > end:
                raise DatasetError(f"window start {start} after end {end}")
            if out and start <= out[-1][1]:
                out[-1][1] = max(out[-1][1], end)
            else:
                out.append([start, end])
        return cls(tuple((a, b) for a, b in out))

    def __len__(self) -> int:
        return len(self.windows)

    def restrict(self, lo: int, hi: int) -> "AnomalyWindowSet":
        """Windows clipped to the instant range ``[lo, hi]``."""
        kept = []
        for start, end in self.windows:
            if end < lo or start > hi:
                continue
            kept.append((max(start, lo), min(end, hi)))
        return AnomalyWindowSet(tuple(kept))

    def index_bounds(self, timestamps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive index bounds of each window over ``timestamps``.

        Windows that cover no timestamp are omitted.
        """
        ts = np.asarray(timestamps)
        starts, ends = [], []
        for start, end in self.windows:
            a = int(np.searchsorted(ts, start, side="left"))
            b = int(np.searchsorted(ts, end, side="right")) - 1
            if a <= b:
                starts.append(a)
                ends.append(b)
        return np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64)

    def mask(self, timestamps: np.ndarray) -> np.ndarray:
        out = np.zeros(len(timestamps), dtype=bool)
        for a, b in zip(*self.index_bounds(timestamps)):
            out[a : b + 1] = True
        return out


@dataclass(frozen=True)
class IngestionReport:
    rows_read: int = 0
    rows_dropped: int = 0
    duplicates: int = 0
    label_dropped: int = 0

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
            "duplicates": self.duplicates,
            "label_dropped": self.label_dropped,
        }


@dataclass(frozen=True)
class SeriesFile:
    id: str
    timestamps: np.ndarray
    values: np.ndarray
    labels: AnomalyWindowSet = field(default_factory=AnomalyWindowSet)
    timestamp_format: str = "iso"
    ingestion: IngestionReport = field(default_factory=IngestionReport, compare=False)

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        vals = np.ascontiguousarray(vals)
        if vals.ndim != 2 or vals.shape[1] < 1:
            raise DatasetError("values must be an (n, d) matrix with d >= 1")
        if len(ts) != vals.shape[0]:
            raise DatasetError("timestamp count does not match value rows")
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise DatasetError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise DatasetError("values must be finite")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def median_interval(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.median(np.diff(self.timestamps)))


@dataclass(frozen=True)
class Subgroup:
    name: str
    files: tuple[SeriesFile, ...]

    def __post_init__(self):
        ids = [f.id for f in self.files]
        if len(set(ids)) != len(ids):
            raise DatasetError(f"duplicate file ids in subgroup {self.name!r}")


@dataclass(frozen=True)
class TimeSeriesDataset:
    name: str
    subgroups: tuple[Subgroup, ...]

    def __post_init__(self):
        names = [s.name for s in self.subgroups]
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate subgroup names in dataset {self.name!r}")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for telemetry CSVs.

    ``value_columns=None`` takes every column except the timestamp and label
    columns. ``label_column`` optionally names a 0/1 point-label column.
    """

    timestamp_column: str = "timestamp"
    value_columns: tuple[str, ...] | None = None
    timestamp_format: str = "iso"
    label_column: str | None = None


# ---------------------------------------------------------------------------
# ingestion


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise DatasetError(f"{path} is empty")
    return [h.strip() for h in header], rows


def ingest_csv(path, schema: CsvSchema = CsvSchema(), file_id: str | None = None) -> SeriesFile:
    """Read a telemetry CSV into a :class:`SeriesFile`.

    Rows with malformed timestamps or non-numeric / non-finite values are
    dropped. Duplicate timestamps keep the row with the lexicographically
    smallest value vector, so the result does not depend on row order.
    Rows are sorted by timestamp.
    """
    path = Path(path)
    header, rows = _read_rows(path)
    if schema.timestamp_column not in header:
        raise DatasetError(f"{path}: missing timestamp column {schema.timestamp_column!r}")
    ts_col = header.index(schema.timestamp_column)
    skip = {schema.timestamp_column, schema.label_column}
    names = schema.value_columns or tuple(h for h in header if h not in skip)
    missing = [c for c in names if c not in header]
    if missing or not names:
        raise DatasetError(f"{path}: value columns not found: {missing or 'none'}")
    val_cols = [header.index(c) for c in names]
    lab_col = header.index(schema.label_column) if schema.label_column in header else None

    stamps, values, point_labels = [], [], []
    dropped = 0
    for row in rows:
        try:
            t = parse_timestamp(row[ts_col], schema.timestamp_format)
            vec = [float(row[c]) for c in val_cols]
            lab = float(row[lab_col]) if lab_col is not None else 0.0
        except (ValueError, IndexError, OverflowError):
            dropped += 1
            continue
        if not all(math.isfinite(v) for v in vec):
            dropped += 1
            continue
        stamps.append(t)
        values.append(vec)
        point_labels.append(lab)

    if not stamps:
        raise DatasetError(f"{path}: no valid rows")

    ts = np.asarray(stamps, dtype=np.int64)
    vals = np.asarray(values, dtype=np.float64)
    labs = np.asarray(point_labels)
    keys = [vals[:, j] for j in range(vals.shape[1] - 1, -1, -1)] + [ts]
    order = np.lexsort(keys)
    ts, vals, labs = ts[order], vals[order], labs[order]
    first = np.concatenate(([True], np.diff(ts) != 0))
    duplicates = int((~first).sum())
    ts, vals, labs = ts[first], vals[first], labs[first]

    report = IngestionReport(
        rows_read=len(rows), rows_dropped=dropped + duplicates, duplicates=duplicates
    )
    out = SeriesFile(
        id=file_id or path.name,
        timestamps=ts,
        values=vals,
        timestamp_format=schema.timestamp_format,
        ingestion=report,
    )
    if lab_col is not None and (labs > 0).any():
        out = attach_labels(out, [int(t) for t in ts[labs > 0]])
    return out


def _merge_report(file: SeriesFile, label_dropped: int) -> IngestionReport:
    rep = file.ingestion
    return replace(rep, label_dropped=rep.label_dropped + label_dropped)


def attach_labels(file: SeriesFile, raw_labels: Sequence, expansion: int = 0) -> SeriesFile:
    """Attach ground truth given as ``[start, end]`` pairs or point timestamps.

    Point labels become windows ``[t - expansion*delta, t + expansion*delta]``
    where ``delta`` is the median sampling interval, clipped to the series
    range; overlapping windows are merged. Labels that fall entirely outside
    the series are dropped and counted in the ingestion report.
    """
    if expansion < 0:
        raise DatasetError("expansion must be non-negative")
    fmt = file.timestamp_format
    lo, hi = int(file.timestamps[0]), int(file.timestamps[-1])
    windows: list[tuple[int, int]] = []
    dropped = 0
    for item in raw_labels:
        if isinstance(item, (list, tuple)):
            if len(item) != 2:
                raise DatasetError(f"window label must be a pair, got {item!r}")
            start, end = parse_timestamp(item[0], fmt), parse_timestamp(item[1], fmt)
            if end < lo or start > hi:
                dropped += 1
                continue
            windows.append((start, end))
        else:
            t = parse_timestamp(item, fmt)
            if t < lo or t > hi:
                dropped += 1
                continue
            half = int(round(expansion * file.median_interval()))
            windows.append((max(lo, t - half), min(hi, t + half)))
    labels = AnomalyWindowSet.merged(windows + list(file.labels.windows))
    return replace(file, labels=labels, ingestion=_merge_report(file, dropped))


def load_label_document(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read label document {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError("label document must map file id -> labels")
    return doc


def load_dataset(
    name: str,
    root,
    schema: CsvSchema = CsvSchema(),
    labels: dict | None = None,
    expansion: int = 0,
) -> TimeSeriesDataset:
    """Load ``root/<subgroup>/<file>.csv`` into a dataset.

    File ids are ``"<subgroup>/<file>.csv"``, the keys used by ``labels``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    labels = labels or {}
    subgroups = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = []
        for csv_path in sorted(sub.glob("*.csv")):
            fid = f"{sub.name}/{csv_path.name}"
            f = ingest_csv(csv_path, schema, file_id=fid)
            if fid in labels:
                f = attach_labels(f, labels[fid], expansion)
            files.append(f)
        if files:
            subgroups.append(Subgroup(sub.name, tuple(files)))
    return TimeSeriesDataset(name, tuple(subgroups))


# ---------------------------------------------------------------------------
# splitting and normalization


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    validation_fraction_of_train: float = 0.10

    def __post_init__(self):
        for v in (self.train_fraction, self.validation_fraction_of_train):
            if not 0.0 < v < 1.0:
                raise DatasetError(f"split fractions must lie in (0, 1), got {v}")


@dataclass(frozen=True)
class SplitView:
    """Half-open index ranges; validation is the tail of the training period."""

    train_range: tuple[int, int]
    validation_range: tuple[int, int]
    test_range: tuple[int, int]

    @property
    def training_period(self) -> tuple[int, int]:
        return (self.train_range[0], self.validation_range[1])

    @property
    def n(self) -> int:
        return self.test_range[1]


def chronological_split(file_or_n, spec: SplitSpec = SplitSpec()) -> SplitView:
    """Split a series into train-core, validation and test index ranges.

    The training period has ``floor(train_fraction * n)`` rows; validation
    is the trailing ``round(validation_fraction * period)`` rows of it.
    """
    n = file_or_n if isinstance(file_or_n, int) else len(file_or_n)
    period = int(math.floor(spec.train_fraction * n + 1e-9))
    val = int(math.floor(spec.validation_fraction_of_train * period + 0.5 + 1e-9))
    core = period - val
    if core < 1 or val < 1 or n - period < 1:
        raise DatasetError(
            f"series of {n} rows too short for non-empty train/validation/test ranges"
        )
    return SplitView((0, core), (core, period), (period, n))


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray


def fit_normalizer(file: SeriesFile, view: SplitView) -> NormalizationStats:
    """Per-feature mean and sample std over the training period only."""
    a, b = view.training_period
    rows = file.values[a:b]
    if len(rows) == 0:
        raise DatasetError("empty training period")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(rows.shape[1])
    std = np.where(std < EPS, EPS, std)
    return NormalizationStats(mean=mean, std=std)


def apply_normalizer(file: SeriesFile, stats: NormalizationStats) -> SeriesFile:
    if len(stats.mean) != file.dimension:
        raise DatasetError(
            f"normalizer has {len(stats.mean)} features, series has {file.dimension}"
        )
    return replace(file, values=(file.values - stats.mean) / stats.std)
