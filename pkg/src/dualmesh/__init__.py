"""Discrete-event simulator for a dual-band (2.4 + 5.8 GHz) self-organizing WiFi mesh."""

from .core import Band, Channel
from .scenario import Scenario, ScenarioError, derive_single_band, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = ["Band", "Channel", "Scenario", "ScenarioError", "derive_single_band", "load_scenario",
           "parse_scenario", "__version__"]
