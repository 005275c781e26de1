"""Anomaly detection benchmarking under training-only likelihood calibration."""

__version__ = "0.1.0"
