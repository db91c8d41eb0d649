"""Deterministic simulator and mission planner for multi-vehicle brick-wall construction."""

from .engine import ConfigError, Metrics, SimConfig, Simulation, run
from .scenario import Scenario, ScenarioError, default_scenario, load_scenario, parse_scenario
from .world import BrickKind, Dashboard, WallSpec, wall_slots

__version__ = "0.1.0"

__all__ = [
    "BrickKind",
    "ConfigError",
    "Dashboard",
    "Metrics",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "Simulation",
    "WallSpec",
    "default_scenario",
    "load_scenario",
    "parse_scenario",
    "run",
    "wall_slots",
]
