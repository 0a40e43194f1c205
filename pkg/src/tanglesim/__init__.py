"""Discrete-event simulator of buses publishing MAM bundles to a Tangle through full nodes."""

from .config import ConfigError, EstimatorConfig, ScenarioConfig, parse_config
from .engine import EventKind, RngStreams, SchedulingError, SimEvent, Simulator
from .harness import RttEstimator, SelectionPolicy, TraceError
from .nodes import ClassParams, PoolConfig
from .runner import calibrate, run_matrix, run_replications
from .scenario import RunResult, run_scenario
from .stats import TxRecord, aggregate_replications, export
from .tangle import Tangle, new_tangle

__all__ = [
    "ClassParams", "ConfigError", "EstimatorConfig", "EventKind", "PoolConfig", "RngStreams",
    "RttEstimator", "RunResult", "ScenarioConfig", "SchedulingError", "SelectionPolicy", "SimEvent",
    "Simulator", "Tangle", "TraceError", "TxRecord", "aggregate_replications", "calibrate", "export",
    "new_tangle", "parse_config", "run_matrix", "run_replications", "run_scenario",
]
