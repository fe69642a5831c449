"""Sample transfer between MDPs with linear fitted Q-iteration (AST, BAT, BTT)."""

__version__ = "0.1.0"

from .fqi import FqiConfig, TrainingSet, bellman_targets, evaluate_policy, fqi_iterate, run_fqi
from .linear import FeatureMap, LinearQ, OneHotFeatures, least_squares_fit
from .mdp import ChainParams, TaskModel, collect_episode, task_catalog
from .transfer import (
    bat_minimize,
    btt_objective,
    btt_optimize,
    build_auxiliary_set,
    estimated_transfer_error,
    run_ast,
    run_bat,
    run_btt,
    sample_random_tasks_design,
)

__all__ = [
    "ChainParams", "FeatureMap", "FqiConfig", "LinearQ", "OneHotFeatures", "TaskModel",
    "TrainingSet", "bat_minimize", "bellman_targets", "btt_objective", "btt_optimize",
    "build_auxiliary_set", "collect_episode", "estimated_transfer_error", "evaluate_policy",
    "fqi_iterate", "least_squares_fit", "run_ast", "run_bat", "run_btt", "run_fqi",
    "sample_random_tasks_design", "task_catalog",
]
