from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import SeriesFile, format_timestamp, parse_timestamp


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorSeries:
    """Raw anomaly signal aligned to a series; NaN marks warm-up positions."""

    file_id: str
    detector_id: str
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        defined = ~np.isnan(v)
        if defined.any():
            first = int(np.argmax(defined))
            if not defined[first:].all():
                raise DetectorError("undefined entries may only form a leading warm-up run")
            d = v[first:]
            if not np.all(np.isfinite(d)) or (d < 0).any():
                raise DetectorError("defined errors must be finite and non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def warmup(self) -> int:
        defined = ~np.isnan(self.values)
        return int(np.argmax(defined)) if defined.any() else len(self.values)


def write_error_csv(path, series: ErrorSeries, file: SeriesFile) -> None:
    """Write ``timestamp,error`` rows; warm-up positions are omitted."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "error"])
        for t, e in zip(file.timestamps, series.values):
            if not np.isnan(e):
                w.writerow([format_timestamp(t, file.timestamp_format), repr(float(e))])


def import_error_series(path, file: SeriesFile, detector_id: str = "import") -> ErrorSeries:
    """Align an external ``timestamp,error`` CSV to ``file``.

    Timestamps missing at the start become warm-up; any other missing
    timestamp, an unknown timestamp or a negative error is rejected.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"timestamp", "error"} <= set(reader.fieldnames):
                raise DetectorError(f"{path}: header must contain timestamp,error")
            rows = list(reader)
    except OSError as exc:
        raise DetectorError(f"cannot read {path}: {exc}") from exc

    ts = file.timestamps
    n = len(ts)
    values = np.full(n, np.nan)
    seen = np.zeros(n, dtype=bool)
    for lineno, row in enumerate(rows, start=2):
        try:
            t = parse_timestamp(row["timestamp"], file.timestamp_format)
            e = float(row["error"])
        except ValueError as exc:
            raise DetectorError(f"{path}:{lineno}: {exc}") from exc
        i = int(np.searchsorted(ts, t))
        if i >= n or ts[i] != t:
            raise DetectorError(f"{path}:{lineno}: unknown timestamp {row['timestamp']}")
        if not np.isfinite(e) or e < 0:
            raise DetectorError(f"{path}:{lineno}: error value must be finite and >= 0")
        values[i] = e
        seen[i] = True

    if not seen.any():
        raise DetectorError(f"{path}: no rows")
    first = int(np.argmax(seen))
    holes = np.flatnonzero(~seen[first:])
    if len(holes):
        at = first + int(holes[0])
        raise DetectorError(
            f"{path}: gap at index {at} (timestamp "
            f"{format_timestamp(ts[at], file.timestamp_format)})"
        )
    return ErrorSeries(file.id, detector_id, values)
