"""Reinforcement learning and adaptive control from scratch, checked against exact LQ oracles."""

from .errors import (ConfigurationError, ConvergenceError, DimensionError, DomainError,
                     NumericError, SingularityError)
from .harness import ExperimentConfig, RunRecord, check_solved, gain_gap, load_config, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConvergenceError", "DimensionError", "DomainError", "NumericError",
    "SingularityError", "ExperimentConfig", "RunRecord", "check_solved", "gain_gap",
    "load_config", "run_experiment",
]
