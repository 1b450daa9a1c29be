"""Implicit grasp evaluation and gradient-based 6-DoF grasp pose optimization.

A differentiable grasp-value field over SE(3) is trained by behavior cloning
from single demonstrations and maximized by a staged first-order optimizer,
verified against an analytic oracle on procedural prismatic scenes.
"""

from .se3 import Pose6, PoseSet5, Workspace
from .scene import (
    GraspOutcome,
    PrismObject,
    Scene,
    demonstrate_grasp,
    generate_scene,
    negative_grasp_error,
    nearest_valid_grasp,
    simulate_grasp,
)
from .field import EvaluatorWeights, LearnedField, OracleField
from .optimizer import OptimizeConfig, StageConfig, optimize, slice_values
from .train import TrainConfig, build_dataset, evaluate_classifier, train_evaluator
from .bench import RunConfig, TaskReport, run_clutter, run_heldout, run_simple

__all__ = [
    "Pose6",
    "PoseSet5",
    "Workspace",
    "PrismObject",
    "Scene",
    "GraspOutcome",
    "generate_scene",
    "demonstrate_grasp",
    "simulate_grasp",
    "nearest_valid_grasp",
    "negative_grasp_error",
    "EvaluatorWeights",
    "OracleField",
    "LearnedField",
    "OptimizeConfig",
    "StageConfig",
    "optimize",
    "slice_values",
    "TrainConfig",
    "build_dataset",
    "train_evaluator",
    "evaluate_classifier",
    "RunConfig",
    "TaskReport",
    "run_simple",
    "run_clutter",
    "run_heldout",
]

__version__ = "0.1.0"
