"""Run configuration: a YAML file validated strictly before any work starts."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .calibration import CalibrationError, SearchSpace
from .dataset import CsvSchema, DatasetError, SplitSpec
from .nab import ScoringProfile

DETECTOR_TYPES = {
    "isolation_forest": {"tree_count": 100, "subsample_size": 256},
    "pca": {"retained_variance": 0.70},
    "rolling_predictor": {"window": 10},
    "import": {"path": None},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    root: Path
    labels: Path | None
    schema: CsvSchema
    label_expansion: int = 0


@dataclass(frozen=True)
class DetectorConfig:
    id: str
    type: str
    options: dict


@dataclass(frozen=True)
class RunConfig:
    datasets: tuple[DatasetConfig, ...]
    detectors: tuple[DetectorConfig, ...]
    search: SearchSpace
    profile: ScoringProfile
    split: SplitSpec
    output_dir: Path
    seed: int = 0
    workers: int = 1
    include: tuple[str, ...] | None = None
    exclude: tuple[str, ...] = ()
    drift_log_scale: bool = False
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical config content (output location excluded)."""
        content = {k: v for k, v in self.raw.items() if k not in ("output_dir", "workers")}
        return hashlib.sha256(json.dumps(content, sort_keys=True).encode()).hexdigest()


def _take(d: dict, allowed: set[str], where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return d


def _pair(v, where, cast):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{where}: expected [low, high]")
    try:
        return (cast(v[0]), cast(v[1]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    """Validate a parsed config mapping; relative paths resolve against ``base_dir``."""
    top = _take(doc, {"seed", "output_dir", "workers", "split", "scoring", "search",
                      "datasets", "detectors", "filters", "drift"}, "config")
    try:
        split = SplitSpec(**_take(top.get("split", {}), {"train_fraction",
                                  "validation_fraction_of_train"}, "split"))
        profile = ScoringProfile(**_take(top.get("scoring", {}), {"tp_weight", "fp_weight",
                                         "fn_weight", "sigmoid_steepness"}, "scoring"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    s = _take(top.get("search", {}), {"long_window", "short_window", "threshold", "trials"}, "search")
    seed = top.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    try:
        search = SearchSpace(
            long_window_range=_pair(s.get("long_window", [64, 512]), "search.long_window", int),
            short_window_range=_pair(s.get("short_window", [3, 32]), "search.short_window", int),
            threshold_range=_pair(s.get("threshold", [0.90, 0.9995]), "search.threshold", float),
            trial_budget=int(s.get("trials", 100)),
            seed=seed,
        )
    except CalibrationError as exc:
        raise ConfigError(str(exc)) from exc

    datasets = []
    raw_ds = top.get("datasets")
    if not raw_ds or not isinstance(raw_ds, list):
        raise ConfigError("datasets: at least one dataset is required")
    for i, d in enumerate(raw_ds):
        d = _take(d, {"name", "root", "labels", "timestamp_column", "timestamp_format",
                      "value_columns", "label_column", "label_expansion"}, f"datasets[{i}]")
        if "name" not in d or "root" not in d:
            raise ConfigError(f"datasets[{i}]: name and root are required")
        fmt = d.get("timestamp_format", "iso")
        if fmt not in ("iso", "epoch"):
            raise ConfigError(f"datasets[{i}]: timestamp_format must be iso or epoch")
        vc = d.get("value_columns")
        schema = CsvSchema(d.get("timestamp_column", "timestamp"),
                           tuple(vc) if vc else None, fmt, d.get("label_column"))
        expansion = d.get("label_expansion", 0)
        if not isinstance(expansion, int) or expansion < 0:
            raise ConfigError(f"datasets[{i}]: label_expansion must be a non-negative integer")
        labels = base_dir / d["labels"] if d.get("labels") else None
        datasets.append(DatasetConfig(str(d["name"]), base_dir / d["root"], labels, schema, expansion))
    if len({d.name for d in datasets}) != len(datasets):
        raise ConfigError("dataset names must be unique")

    detectors = []
    raw_det = top.get("detectors")
    if not raw_det or not isinstance(raw_det, list):
        raise ConfigError("detectors: at least one detector is required")
    for i, d in enumerate(raw_det):
        if not isinstance(d, dict) or d.get("type") not in DETECTOR_TYPES:
            raise ConfigError(f"detectors[{i}]: type must be one of {sorted(DETECTOR_TYPES)}")
        defaults = DETECTOR_TYPES[d["type"]]
        d = _take(d, {"id", "type", *defaults}, f"detectors[{i}]")
        opts = {**defaults, **{k: v for k, v in d.items() if k not in ("id", "type")}}
        if d["type"] == "import":
            if not opts["path"]:
                raise ConfigError(f"detectors[{i}]: import needs a path template")
            opts["path"] = str(base_dir / opts["path"])
        detectors.append(DetectorConfig(str(d.get("id", d["type"])), d["type"], opts))
    if len({d.id for d in detectors}) != len(detectors):
        raise ConfigError("detector ids must be unique")

    f = _take(top.get("filters", {}), {"include", "exclude"}, "filters")
    include = f.get("include")
    if include is not None:
        if not isinstance(include, list) or not include:
            raise ConfigError("filters.include must be a non-empty list when given")
        include = tuple(str(x) for x in include)
    exclude = tuple(str(x) for x in f.get("exclude", []))

    drift = _take(top.get("drift", {}), {"log_scale"}, "drift")
    workers = top.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")

    return RunConfig(
        datasets=tuple(datasets),
        detectors=tuple(detectors),
        search=search,
        profile=profile,
        split=split,
        output_dir=base_dir / top.get("output_dir", "out"),
        seed=seed,
        workers=workers,
        include=include,
        exclude=exclude,
        drift_log_scale=bool(drift.get("log_scale", False)),
        raw=doc,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(doc or {}, path.parent)
    except (DatasetError, CalibrationError) as exc:
        raise ConfigError(str(exc)) from exc


def derive_seed(global_seed: int, *keys: str) -> int:
    """Keyed-hash fan-out of the global seed, stable across processes."""
    h = hashlib.blake2b(digest_size=8, key=str(global_seed).encode()[:64] or b"0")
    h.update("\x1f".join(keys).encode())
    return int.from_bytes(h.digest(), "big") >> 1
