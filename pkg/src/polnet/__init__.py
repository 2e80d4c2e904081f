"""Discrete-event simulation of polarization-entangled photon networks."""

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import ExperimentResult, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentResult", "load_config", "run_experiment"]
__version__ = "0.1.0"
