"""Experiment harness: synthetic generators, file I/O, experiments, CLI."""

from .synthetic import random_spd, random_wg_params
from .io import (
    load_dataset,
    save_dataset,
    load_params,
    save_params,
    load_model,
    save_model,
)
from .config import ExperimentConfig
from .experiments import cov_from_series, run_cv, run_mle_curve

__all__ = [
    "random_spd",
    "random_wg_params",
    "load_dataset",
    "save_dataset",
    "load_params",
    "save_params",
    "load_model",
    "save_model",
    "ExperimentConfig",
    "cov_from_series",
    "run_cv",
    "run_mle_curve",
]
