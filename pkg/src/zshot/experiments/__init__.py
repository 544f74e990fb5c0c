"""Metrics, experiment runs and the command-line interface."""

from .config import ExperimentConfig, load_config
from .metrics import MetricsReport, den_accuracy, evaluate, seq_accuracy, tok_accuracy

__all__ = ["ExperimentConfig", "MetricsReport", "den_accuracy", "evaluate", "load_config", "seq_accuracy", "tok_accuracy"]
