"""Rule-based action model learning over binary latent states.

Transitions are labeled by effect signature, per-action random forests learn
effect conditions and preconditions, and the forests are compiled into
grounded PDDL with conditional effects.
"""

from .formula import (FALSE, TRUE, And, NegVar, Or, Var, conj, disj, evaluate, flatten_to_dnf,
                      negate, simplify)
from .dataset import (LightsOut, PlanningInstance, SlidingPuzzle, TransitionDataset,
                      make_domain, make_instances, sample_transitions, split)
from .labeler import label_by_signature, label_capacity_bounded, tune_label_count
from .forest import ForestParams, RandomForest, predict_average, predict_vote, train_forest
from .model import ActionModel, evaluate_effects, evaluate_preconditions, learn
from .compile import emit_domain, emit_problem, flatten_domain, forest_to_formula, majority_gate
from .planner import parse, search, successor, validate

__all__ = [
    "FALSE", "TRUE", "And", "NegVar", "Or", "Var", "conj", "disj", "evaluate", "flatten_to_dnf",
    "negate", "simplify",
    "LightsOut", "PlanningInstance", "SlidingPuzzle", "TransitionDataset", "make_domain",
    "make_instances", "sample_transitions", "split",
    "label_by_signature", "label_capacity_bounded", "tune_label_count",
    "ForestParams", "RandomForest", "predict_average", "predict_vote", "train_forest",
    "ActionModel", "evaluate_effects", "evaluate_preconditions", "learn",
    "emit_domain", "emit_problem", "flatten_domain", "forest_to_formula", "majority_gate",
    "parse", "search", "successor", "validate",
]

__version__ = "0.1.0"
