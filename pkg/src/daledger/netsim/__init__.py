"""Deterministic round-based network simulator."""

from .checks import (
    agreement_violations, check_agreement, check_soundness, seed_sweep, soundness_violations, violated,
)
from .config import ConfigError, NodeSpec, ScenarioConfig, load_scenario, parse_scenario
from .engine import Simulation, Trace, run_scenario

__all__ = [
    "ConfigError", "NodeSpec", "ScenarioConfig", "Simulation", "Trace", "agreement_violations",
    "check_agreement", "check_soundness", "load_scenario", "parse_scenario", "run_scenario",
    "seed_sweep", "soundness_violations", "violated",
]
