"""Deterministic simulator and policy engine for zero-trust micro-segmented networks."""

from .engine import (
    DEFAULT_NOW,
    ConnectionRequest,
    Decision,
    Evaluator,
    PolicySet,
    ReachabilityMatrix,
    TraceEvent,
    Verdict,
    connection_matrix,
    evaluate_connection,
    explain,
)
from .errors import NoMeshIdentity, ResolutionError, ScenarioError, Violation, ZtsimError
from .lint import Finding, Severity, lint
from .scenario import Scenario, dump_scenario, load_scenario, load_scenario_paths, read_scenario_paths
from .topology import Topology, load_topology, resolve_service, validate_topology

__all__ = [
    "DEFAULT_NOW",
    "ConnectionRequest",
    "Decision",
    "Evaluator",
    "Finding",
    "NoMeshIdentity",
    "PolicySet",
    "ReachabilityMatrix",
    "ResolutionError",
    "Scenario",
    "ScenarioError",
    "Severity",
    "Topology",
    "TraceEvent",
    "Verdict",
    "Violation",
    "ZtsimError",
    "connection_matrix",
    "dump_scenario",
    "evaluate_connection",
    "explain",
    "lint",
    "load_scenario",
    "load_scenario_paths",
    "load_topology",
    "read_scenario_paths",
    "resolve_service",
    "validate_topology",
]
