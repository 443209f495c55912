"""Nested projected online gradient descent for online learning with
constraints revealed after each action."""

from .algorithm import RoundRecord, RunTrace, StepSchedule, npogd_round, run, step_size
from .analysis import (
    MetricsReport,
    ccv,
    check_self_contracted,
    compute_metrics,
    lift,
    movement,
    movement_ratio,
    regret,
    regret_bound_lemma,
    regret_bound_theorem,
    scaling_fit,
)
from .errors import (
    ConfigError,
    GenerationError,
    InvalidBodyError,
    NPOGDError,
    OracleError,
    ProjectionError,
    RunError,
)
from .geometry import Ball, Box, FeasibleRegion, Halfspace, LiftedPoint, oplus_norm, project_region
from .harness import ExperimentConfig, SweepResult, run_experiment, verify_suite
from .oracle import grid_search_optimum, offline_optimum
from .problem import GeneratorSpec, Instance, gen_instance, with_ball_kind

__version__ = "0.1.0"

__all__ = [
    "Ball", "Box", "Halfspace", "FeasibleRegion", "LiftedPoint", "oplus_norm", "project_region",
    "GeneratorSpec", "Instance", "gen_instance", "with_ball_kind",
    "StepSchedule", "RoundRecord", "RunTrace", "npogd_round", "run", "step_size",
    "MetricsReport", "ccv", "check_self_contracted", "compute_metrics", "lift", "movement",
    "movement_ratio", "regret", "regret_bound_lemma", "regret_bound_theorem", "scaling_fit",
    "offline_optimum", "grid_search_optimum",
    "ExperimentConfig", "SweepResult", "run_experiment", "verify_suite",
    "NPOGDError", "InvalidBodyError", "ProjectionError", "GenerationError", "RunError",
    "OracleError", "ConfigError",
]
