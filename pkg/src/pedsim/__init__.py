"""Floor-field pedestrian simulator with heterogeneous speeds and groups."""

from .engine import ConsistencyError, World, resolve_conflict
from .runner import RunResult, run_scenario
from .scenario import (
    CalibrationParams,
    ScenarioError,
    ScenarioSpec,
    ScenarioSyntaxError,
    ScenarioValidationError,
    load_scenario,
    parse_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationParams",
    "ConsistencyError",
    "RunResult",
    "ScenarioError",
    "ScenarioSpec",
    "ScenarioSyntaxError",
    "ScenarioValidationError",
    "World",
    "load_scenario",
    "parse_scenario",
    "resolve_conflict",
    "run_scenario",
]
