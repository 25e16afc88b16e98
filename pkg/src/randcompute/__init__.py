"""Simulation and analysis of random-walk in-network function computation.

Sources emit operands of a binary computation schema in rounds; packets
random-walk over a graph and are combined in-network until the root value
reaches the sink.
"""

from .analytics import bound_report, hitting_time_worst, min_mincut, mixing_time, spectrum
from .config import ConfigError, RunConfig, parse_config
from .engine import ArrivalModel, Metrics, SimState, init, run, step
from .experiments import estimate_beta_star, measure_latency, stability_probe
from .schema import SchemaTree, build_complete, build_from_expression, reference_evaluate
from .topology import Graph, build_topology, transition_matrix

__version__ = "0.1.0"

__all__ = [
    "ArrivalModel",
    "ConfigError",
    "Graph",
    "Metrics",
    "RunConfig",
    "SchemaTree",
    "SimState",
    "bound_report",
    "build_complete",
    "build_from_expression",
    "build_topology",
    "estimate_beta_star",
    "hitting_time_worst",
    "init",
    "measure_latency",
    "min_mincut",
    "mixing_time",
    "parse_config",
    "reference_evaluate",
    "run",
    "spectrum",
    "stability_probe",
    "step",
    "transition_matrix",
]
