"""Simulation workbench for ISAC multi-object tracking.

Scenario generation, ideal and OFDM-level sensing, clutter removal,
TDD-aware detection, a GM-PHD tracker and label-free tracking metrics.
"""

from .evaluation import MetricsReport, associate_frame, evaluate, hungarian
from .pipeline import ExperimentConfig, load_config, run_experiment
from .scenario import Scenario, ground_truth_at, scenario_preset
from .sensors import CsiFrame, IdealSensorConfig, OfdmGridConfig, ideal_observe, synthesize_frame
from .tracker import GMPHDTracker
from .types import Detection

__version__ = "0.1.0"

__all__ = [
    "CsiFrame",
    "Detection",
    "ExperimentConfig",
    "GMPHDTracker",
    "IdealSensorConfig",
    "MetricsReport",
    "OfdmGridConfig",
    "Scenario",
    "associate_frame",
    "evaluate",
    "ground_truth_at",
    "hungarian",
    "ideal_observe",
    "load_config",
    "run_experiment",
    "scenario_preset",
    "synthesize_frame",
]
