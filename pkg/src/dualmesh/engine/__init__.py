"""Event loop, rate solver, brute-force oracle and throughput accounting."""

from .report import DeliverySegment, ThroughputReport, WindowError, average_throughput, throughput
from .sim import InvariantViolation, SimResult, Simulator, run
from .solver import FlowDemand, Link, RateAssignment, RateProblem, solve_problem, solve_rates

__all__ = [
    "DeliverySegment", "FlowDemand", "InvariantViolation", "Link", "RateAssignment", "RateProblem",
    "SimResult", "Simulator", "ThroughputReport", "WindowError", "average_throughput", "run",
    "solve_problem", "solve_rates", "throughput",
]
