"""Detectors that turn normalized telemetry into raw anomaly signals."""

from .base import DetectorError, ErrorSeries, import_error_series, write_error_csv
from .baselines import rolling_predictor_error
from .iforest import (
    IsolationForestModel,
    average_path_length,
    fit_isolation_forest,
    score_isolation_forest,
)
from .pca import PcaModel, fit_pca, pca_error

__all__ = [
    "DetectorError",
    "ErrorSeries",
    "IsolationForestModel",
    "PcaModel",
    "average_path_length",
    "fit_isolation_forest",
    "fit_pca",
    "import_error_series",
    "pca_error",
    "rolling_predictor_error",
    "score_isolation_forest",
    "write_error_csv",
]
