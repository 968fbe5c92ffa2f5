"""Simulation and analysis of quantum bit commitment with a reverse quantum channel."""

from .experiments import ExperimentConfig, run_experiment
from .protocol import ProtocolParams, Transcript, run_round
from .report import ExperimentReport, write_report

__all__ = ["ExperimentConfig", "ExperimentReport", "ProtocolParams", "Transcript", "run_experiment",
           "run_round", "write_report"]
__version__ = "0.1.0"
