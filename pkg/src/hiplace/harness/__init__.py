from .dynamics import DynamicsEvent, ScenarioDynamics, apply_dynamics
from .experiment import (
    METRICS,
    ExperimentError,
    PolicySource,
    RunReport,
    TrainingRun,
    compare,
    load_report,
    run_experiment,
    train_scenario,
    write_report,
)
from .scenario import Scenario, ScenarioError, build_scenario, fixture_path, load_scenario

__all__ = [
    "METRICS",
    "DynamicsEvent",
    "ExperimentError",
    "PolicySource",
    "RunReport",
    "Scenario",
    "ScenarioDynamics",
    "ScenarioError",
    "TrainingRun",
    "apply_dynamics",
    "build_scenario",
    "compare",
    "fixture_path",
    "load_report",
    "load_scenario",
    "run_experiment",
    "train_scenario",
    "write_report",
]
