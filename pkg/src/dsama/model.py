"""Per-action classifiers learned from labeled transitions.

For every action label ``a`` and state bit ``f`` a forest predicts the
successor value of ``f`` from the current state (the effect condition), and
one positive-vs-unlabeled forest over the concatenated (before; after) pair
decides whether a transition is an occurrence of ``a`` (the precondition).
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .compile import (forest_to_formula, majority_gate, sorting_gate, substitute_successor,
                      tree_to_formula)
from .dataset import GroundTruthDomain, TransitionDataset
from .forest import ForestParams, RandomForest, read_forest, train_forest, write_forest
from .formula import Formula, evaluate_batch, max_index

__all__ = [
    "ActionPartition",
    "ActionModel",
    "PreconditionMetrics",
    "partition",
    "train_effects",
    "train_precondition",
    "assemble",
    "learn",
    "compile_model",
    "apply_model",
    "apply_model_batch",
    "applicable_batch",
    "evaluate_effects",
    "evaluate_preconditions",
    "f_measure",
    "confusion_rates",
    "PU_EPSILON",
    "BUNDLE_VERSION",
    "write_bundle",
    "read_bundle",
]

log = logging.getLogger(__name__)

PU_EPSILON = 1e-6
BUNDLE_VERSION = 1


@dataclass(frozen=True, eq=False)
class ActionPartition:
    action: int
    before: np.ndarray     # Z0_a
    after: np.ndarray      # Z1_a
    others: np.ndarray     # U_a, concatenated pairs of every other action

    @property
    def width(self) -> int:
        return self.before.shape[1]

    @property
    def pairs(self) -> np.ndarray:
        """Z_a: (before; after) rows of width 2F."""
        return np.concatenate([self.before, self.after], axis=1)

    def __len__(self):
        return len(self.before)


@dataclass(eq=False)
class ActionModel:
    action: int
    width: int
    effect_forests: list
    precondition_forest: RandomForest
    pu_constant: float = 1.0
    current_only: bool = False
    effects: list | None = None
    precondition: Formula | None = None
    raw_precondition: Formula | None = field(default=None, repr=False)


def partition(ds: TransitionDataset) -> list[ActionPartition]:
    """Split a labeled dataset by action; actions without data are dropped."""
    if ds.labels is None:
        raise ValueError("partition needs a labeled dataset")
    A = ds.label_count if ds.label_count is not None else int(ds.labels.max()) + 1
    pairs = np.concatenate([ds.before, ds.after], axis=1)
    out = []
    for a in range(A):
        mask = ds.labels == a
        if not mask.any():
            warnings.warn(f"action {a} has no transitions and is dropped", RuntimeWarning,
                          stacklevel=2)
            continue
        out.append(ActionPartition(a, ds.before[mask], ds.after[mask], pairs[~mask]))
    return out


def train_effects(p: ActionPartition, f: int, params: ForestParams) -> RandomForest:
    """Forest predicting successor bit ``f`` from the current state."""
    return train_forest(p.before, p.after[:, f], params, key=(p.action, f))


def train_precondition(p: ActionPartition, params: ForestParams,
                       validation_fraction: float = 0.2, current_only: bool = False
                       ) -> tuple[RandomForest, float]:
    """Positive/unlabeled forest and its correction constant c.

    A ``validation_fraction`` slice of the positives is held out; c is the
    mean class-1 score the forest gives it, clamped to [1e-6, 1]. With
    ``current_only`` the forest sees only the current state.
    """
    F = p.width
    pos = p.before if current_only else p.pairs
    neg = p.others[:, :F] if current_only else p.others
    n = len(pos)
    key = (p.action, F)  # distinct from every effect stream (a, f) with f < F
    rng = np.random.default_rng([params.seed, *key, 1 << 20])
    n_val = int(np.floor(validation_fraction * n))
    if n < 2 or n_val < 1 or n - n_val < 1:
        warnings.warn(f"action {p.action}: too few positives for the PU correction, using c=1",
                      RuntimeWarning, stacklevel=2)
        X = np.concatenate([pos, neg])
        y = np.concatenate([np.ones(n, bool), np.zeros(len(neg), bool)])
        return train_forest(X, y, params, key=key), 1.0
    perm = rng.permutation(n)
    val, fit = pos[perm[:n_val]], pos[perm[n_val:]]
    X = np.concatenate([fit, neg])
    y = np.concatenate([np.ones(len(fit), bool), np.zeros(len(neg), bool)])
    forest = train_forest(X, y, params, key=key)
    c = float(np.mean(forest.average_batch(val)))
    return forest, float(min(1.0, max(PU_EPSILON, c)))


def compile_model(m: ActionModel, pu_adjusted_gate: bool = False) -> ActionModel:
    """Attach effect and precondition formulas to ``m`` (in place) and return it."""
    m.effects = [forest_to_formula(fo)[0] for fo in m.effect_forests]
    trees = [tree_to_formula(t) for t in m.precondition_forest.trees]
    if pu_adjusted_gate:
        raw = _pu_gate(trees, m.pu_constant)
    else:
        raw = majority_gate(trees)[0]
    m.raw_precondition = raw
    if m.current_only:
        m.precondition = raw
    else:
        m.precondition = substitute_successor(raw, m.effects)
    return m


def _pu_gate(trees, c: float) -> Formula:
    # sorted-output index ceil(T * c / 2) - 1 in place of floor(T / 2)
    k = max(0, int(np.ceil(len(trees) * 0.5 * c)) - 1)
    return sorting_gate(trees, k)[0]


def assemble(partitions, params: ForestParams, validation_fraction: float = 0.2,
             current_only: bool = False, compile: bool = True,
             pu_adjusted_gate: bool = False) -> list[ActionModel]:
    """Train every effect and precondition forest and (optionally) compile them."""
    models = []
    for p in partitions:
        effects = [train_effects(p, f, params) for f in range(p.width)]
        pre, c = train_precondition(p, params, validation_fraction, current_only)
        m = ActionModel(p.action, p.width, effects, pre, c, current_only)
        if compile:
            compile_model(m, pu_adjusted_gate)
        models.append(m)
    return models


def learn(ds: TransitionDataset, params: ForestParams, **kw) -> list[ActionModel]:
    """partition + assemble."""
    return assemble(partition(ds), params, **kw)


# ---------------------------------------------------------------------------
# inference


def apply_model_batch(m: ActionModel, states, mode: str = "vote") -> np.ndarray:
    S = np.asarray(states, dtype=bool)
    if S.ndim == 1:
        S = S.reshape(1, -1)
    if S.shape[1] != m.width:
        raise ValueError(f"state width {S.shape[1]} does not match model width {m.width}")
    out = np.empty_like(S)
    if mode == "vote":
        for f, fo in enumerate(m.effect_forests):
            out[:, f] = fo.vote_batch(S)
    elif mode == "formula":
        if m.effects is None:
            raise ValueError("model has not been compiled")
        for f, e in enumerate(m.effects):
            out[:, f] = evaluate_batch(e, S)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def apply_model(m: ActionModel, s, mode: str = "vote") -> np.ndarray:
    """Successor state predicted by the effect conditions (applicability ignored)."""
    return apply_model_batch(m, np.asarray(s).reshape(1, -1), mode)[0]


def applicable_batch(m: ActionModel, before, after=None, mode: str = "numeric") -> np.ndarray:
    """Precondition decision for (before; after) pairs.

    ``numeric``: PU-corrected average score min(1, avg/c) > 0.5.
    ``vote``: plain majority of the trees.
    ``formula``: the compiled precondition evaluated on ``before`` alone
    (successor bits are already substituted by effect conditions).
    """
    B = np.asarray(before, dtype=bool)
    if mode == "formula":
        if m.precondition is None:
            raise ValueError("model has not been compiled")
        return evaluate_batch(m.precondition, B)
    if m.current_only:
        X = B
    else:
        if after is None:
            raise ValueError("successor states are required for this model")
        X = np.concatenate([B, np.asarray(after, dtype=bool)], axis=1)
    if mode == "numeric":
        score = np.minimum(1.0, m.precondition_forest.average_batch(X) / m.pu_constant)
        return score > 0.5
    if mode == "vote":
        return m.precondition_forest.vote_batch(X)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# metrics


def _model_map(models) -> dict:
    if isinstance(models, dict):
        return models
    return {m.action: m for m in models}


def evaluate_effects(models, test: TransitionDataset, mode: str = "vote") -> float:
    """Fraction of successor bits predicted correctly.

    Transitions whose label has no model count as entirely wrong.
    """
    if test.labels is None:
        raise ValueError("test set must be labeled")
    if len(test) == 0:
        raise ValueError("empty test set")
    by_action = _model_map(models)
    correct = 0
    for a in np.unique(test.labels):
        mask = test.labels == a
        m = by_action.get(int(a))
        if m is None:
            continue
        pred = apply_model_batch(m, test.before[mask], mode)
        correct += int((pred == test.after[mask]).sum())
    return correct / (len(test) * test.width)


def f_measure(recall: float, specificity: float) -> float:
    if recall + specificity == 0:
        return 0.0
    return 2 * recall * specificity / (recall + specificity)


def confusion_rates(tp: int, fn: int, tn: int, fp: int):
    """(recall, specificity, F); an undefined rate is reported as nan and F as 0."""
    recall = tp / (tp + fn) if tp + fn else float("nan")
    spec = tn / (tn + fp) if tn + fp else float("nan")
    if np.isnan(recall) or np.isnan(spec):
        return recall, spec, 0.0
    return recall, spec, f_measure(recall, spec)


@dataclass(frozen=True)
class PreconditionMetrics:
    recall: float
    specificity: float
    f: float
    tp: int
    fn: int
    tn: int
    fp: int
    degenerate: bool
    per_action: dict


def _ground_truth(oracle: GroundTruthDomain, test: TransitionDataset, labeling, actions):
    """G[n, j] = transition n is a valid occurrence of action actions[j]."""
    N = len(test)
    valid = np.zeros(N, dtype=bool)
    matches: list[list[int]] = []
    for n in range(N):
        ks = oracle.matching_actions(test.before[n], test.after[n])
        matches.append(ks)
        valid[n] = bool(ks)
    G = np.zeros((N, len(actions)), dtype=bool)
    for j, a in enumerate(actions):
        if labeling is None:
            G[:, j] = [a in ks for ks in matches]
        else:
            pred = labeling.successors(np.full(N, a), test.before)
            G[:, j] = valid & (pred == test.after).all(axis=1)
    return G


def evaluate_preconditions(models, test: TransitionDataset, oracle: GroundTruthDomain,
                           labeling=None, mode: str = "numeric") -> PreconditionMetrics:
    """Pooled recall/specificity/F over every (transition, action) pair.

    Ground truth for label ``a`` on (z0, z1): some oracle action is
    applicable in z0 and leads to z1, and z1 is what label ``a`` produces
    from z0. Without a ``labeling``, labels are oracle action ids.
    """
    by_action = _model_map(models)
    actions = sorted(by_action)
    G = _ground_truth(oracle, test, labeling, actions)
    tp = fn = tn = fp = 0
    per_action = {}
    for j, a in enumerate(actions):
        X = applicable_batch(by_action[a], test.before, test.after, mode)
        g = G[:, j]
        c = (int((X & g).sum()), int((~X & g).sum()), int((~X & ~g).sum()), int((X & ~g).sum()))
        per_action[a] = confusion_rates(*c)
        tp, fn, tn, fp = tp + c[0], fn + c[1], tn + c[2], fp + c[3]
    recall, spec, f = confusion_rates(tp, fn, tn, fp)
    degenerate = tp + fn == 0 or tn + fp == 0
    return PreconditionMetrics(recall, spec, f, tp, fn, tn, fp, degenerate, per_action)


def check_model(m: ActionModel) -> None:
    """Invariant check: formulas exist for every bit and stay below width F."""
    if m.effects is not None and len(m.effects) != m.width:
        raise AssertionError("one effect condition per bit required")
    for f in (m.effects or []) + ([m.precondition] if m.precondition is not None else []):
        if max_index(f) >= m.width:
            raise AssertionError("formula refers to a variable outside the state")


# ---------------------------------------------------------------------------
# model bundle


def _forest_names(a: int, F: int):
    return [f"a{a}_e{f}.forest" for f in range(F)], f"a{a}_pre.forest"


def write_bundle(models, params: ForestParams, directory, extra: dict | None = None) -> None:
    """One forest file per classifier plus ``manifest.json``."""
    models = list(models)
    if not models:
        raise ValueError("no models to write")
    os.makedirs(directory, exist_ok=True)
    F = models[0].width
    actions = []
    for m in models:
        eff_names, pre_name = _forest_names(m.action, F)
        for name, fo in zip(eff_names, m.effect_forests):
            write_forest(fo, os.path.join(directory, name))
        write_forest(m.precondition_forest, os.path.join(directory, pre_name))
        actions.append({"action": m.action, "pu_constant": m.pu_constant,
                        "precondition": pre_name, "effects": eff_names})
    manifest = {
        "version": BUNDLE_VERSION,
        "width": F,
        "action_count": len(models),
        "current_only": bool(models[0].current_only),
        "params": {k: getattr(params, k) for k in params.__dataclass_fields__},
        "actions": actions,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_bundle(directory, compile: bool = True, pu_adjusted_gate: bool = False):
    """(models, params, manifest) from a bundle directory."""
    path = os.path.join(directory, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"model bundle manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != BUNDLE_VERSION:
        raise ValueError(f"{path}: unsupported bundle version {manifest.get('version')!r}")
    params = ForestParams(**manifest["params"])
    F = manifest["width"]
    models = []
    for entry in manifest["actions"]:
        effects = [read_forest(os.path.join(directory, n)) for n in entry["effects"]]
        pre = read_forest(os.path.join(directory, entry["precondition"]))
        m = ActionModel(entry["action"], F, effects, pre, float(entry["pu_constant"]),
                        bool(manifest["current_only"]))
        if compile:
            compile_model(m, pu_adjusted_gate)
        models.append(m)
    return models, params, manifest
