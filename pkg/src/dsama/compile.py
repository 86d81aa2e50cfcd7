"""Forests to formulas, formulas to PDDL.

A tree becomes a disjunction over its branches, a forest becomes a majority
gate: the tree formulas are pushed through a bitonic sorting network whose
comparators are (or, and) pairs, and the middle output of the descending
sequence is true exactly when more than half of the trees vote 1.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .forest import RandomForest, Tree
from .formula import (FALSE, TRUE, And, CapExceeded, Formula, NegVar, Var, conj, disj,
                      flatten_to_dnf, max_index, metrics, negate, postorder, simplify)

__all__ = [
    "CircuitStats",
    "tree_to_formula",
    "majority_gate",
    "sorting_gate",
    "forest_to_formula",
    "substitute_successor",
    "bitonic_comparator_count",
    "formula_text",
    "formula_text_size",
    "emit_domain",
    "emit_problem",
    "write_domain",
    "domain_size",
    "FlattenReport",
    "flatten_domain",
    "compile_metrics_csv",
    "REQUIREMENTS",
]

REQUIREMENTS = ":strips :negative-preconditions :disjunctive-preconditions :conditional-effects"


@dataclass(frozen=True)
class CircuitStats:
    comparator_count: int
    gate_count: int
    inputs: int
    padded_inputs: int
    node_count: int
    depth: int
    or_count: int
    literal_count: int


def tree_to_formula(tree: Tree) -> Formula:
    """Formula true exactly where the tree's leaf argmax is class 1.

    Decision node: ``(x_i & high) | (~x_i & low)``. A threshold >= 1 can never
    be exceeded by a binary input so only the low child is compiled; a
    threshold < 0 is always exceeded so only the high child is. Leaves give
    True iff p1 > p0.
    """
    if not isinstance(tree, Tree):
        raise TypeError("tree_to_formula expects a Tree")
    out: dict[int, Formula] = {}
    # preorder arrays: every child index is larger than its parent's
    for i in range(len(tree) - 1, -1, -1):
        f = int(tree.feature[i])
        if f < 0:
            p0, p1 = tree.prob[i]
            out[i] = TRUE if p1 > p0 else FALSE
            continue
        hi, lo = int(tree.high[i]), int(tree.low[i])
        if hi not in out or lo not in out:
            raise ValueError(f"malformed tree: node {i} has unresolved children")
        theta = float(tree.threshold[i])
        if theta >= 1:
            out[i] = out[lo]
        elif theta < 0:
            out[i] = out[hi]
        else:
            out[i] = disj(conj(Var(f), out[hi]), conj(NegVar(f), out[lo]))
    return out[0]


def bitonic_comparator_count(n: int) -> int:
    """Comparators used by the recursive bitonic sort on n = 2**k inputs."""
    k = n.bit_length() - 1
    if n < 1 or 1 << k != n:
        raise ValueError("n must be a power of two")
    return n * k * (k + 1) // 4


class _Network:
    def __init__(self):
        self.comparators = 0

    def compare_and_swap(self, up: bool, x: list) -> None:
        d = len(x) // 2
        for i in range(d):
            a, b = x[i], x[i + d]
            self.comparators += 1
            if up:
                x[i], x[i + d] = disj(a, b), conj(a, b)
            else:
                x[i], x[i + d] = conj(a, b), disj(a, b)

    def merge(self, up: bool, x: list) -> list:
        if len(x) <= 1:
            return x
        self.compare_and_swap(up, x)
        d = len(x) // 2
        return self.merge(up, x[:d]) + self.merge(up, x[d:])

    def sort(self, up: bool, x: list) -> list:
        if len(x) <= 1:
            return x
        d = len(x) // 2
        return self.merge(up, self.sort(True, x[:d]) + self.sort(False, x[d:]))


def sorting_gate(inputs: Sequence[Formula], index: int) -> tuple[Formula, CircuitStats]:
    """Output ``index`` of the descending sort: true iff > ``index`` inputs are true.

    Inputs are padded with False up to a power of two; padding never adds a
    true input, so the count over the original inputs is unchanged.
    """
    T = len(inputs)
    if T < 1:
        raise ValueError("need at least one input")
    if not 0 <= index < T:
        raise ValueError(f"output index {index} out of range for {T} inputs")
    width = 1 << (T - 1).bit_length()
    seq = [simplify(f) for f in inputs] + [FALSE] * (width - T)
    net = _Network()
    # up=True puts the disjunction (max) first, i.e. sorts descending
    out = net.sort(True, seq)[index]
    m = metrics(out)
    stats = CircuitStats(net.comparators, 2 * net.comparators, T, width,
                         m.node_count, m.depth, m.or_count, m.literal_count)
    return out, stats


def majority_gate(inputs: Sequence[Formula]) -> tuple[Formula, CircuitStats]:
    """Formula true iff more than floor(T/2) of the T inputs are true."""
    return sorting_gate(inputs, len(inputs) // 2)


def forest_to_formula(forest: RandomForest) -> tuple[Formula, CircuitStats]:
    return majority_gate([tree_to_formula(t) for t in forest.trees])


def substitute_successor(f: Formula, effects: Sequence[Formula]) -> Formula:
    """Replace successor-state variables by the effect conditions that set them.

    ``f`` ranges over 2F variables (current state, then successor state);
    ``Var(F + j)`` becomes ``effects[j]`` and ``NegVar(F + j)`` its negation.
    """
    F = len(effects)
    for j, e in enumerate(effects):
        if max_index(e) >= F:
            raise ValueError(f"effect condition {j} refers to a successor variable")
    neg_cache: dict[int, Formula] = {}
    out: dict[int, Formula] = {}
    for node in postorder(f):
        if node.is_literal:
            i = node.index
            if i < F:
                r = node
            elif i >= 2 * F:
                raise ValueError(f"variable index {i} out of range for 2F = {2 * F}")
            elif node.positive:
                r = effects[i - F]
            else:
                j = i - F
                if j not in neg_cache:
                    neg_cache[j] = simplify(negate(effects[j]))
                r = neg_cache[j]
        elif node.is_const:
            r = node
        else:
            kids = [out[id(c)] for c in node.children]
            r = conj(*kids) if isinstance(node, And) else disj(*kids)
        out[id(node)] = r
    return simplify(out[id(f)])


# ---------------------------------------------------------------------------
# text


def _lit_text(node) -> str:
    return f"(z{node.index})" if node.positive else f"(not (z{node.index}))"


def formula_text(f: Formula) -> str:
    """PDDL text of a formula: ``(and ...)``, ``(or ...)``, ``(zK)``, ``(not (zK))``."""
    buf = io.StringIO()
    _write_formula(f, buf.write)
    return buf.getvalue()


def _write_formula(f: Formula, write) -> None:
    stack = [f]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            write(item)
            continue
        if item.is_literal:
            write(_lit_text(item))
        elif item.is_const:
            write("(and)" if item.value else "(or)")
        else:
            write("(and" if isinstance(item, And) else "(or")
            stack.append(")")
            for c in reversed(item.children):
                stack.append(c)
                stack.append(" ")
    return None


def formula_text_size(f: Formula) -> int:
    """len(formula_text(f)) computed on the DAG without expanding it."""
    memo: dict[int, int] = {}
    for node in postorder(f):
        if node.is_literal:
            memo[id(node)] = len(_lit_text(node))
        elif node.is_const:
            memo[id(node)] = 5 if node.value else 4
        else:
            head = 4 if isinstance(node, And) else 3
            memo[id(node)] = head + 1 + sum(memo[id(c)] + 1 for c in node.children)
    return memo[id(f)]


def _domain_pieces(models, domain_name: str):
    """Yield the domain text in chunks: str pieces and formulas to expand."""
    models = list(models)
    if not models:
        raise ValueError("no action models to emit")
    F = models[0].width
    yield f"(define (domain {domain_name})\n"
    yield f" (:requirements {REQUIREMENTS})\n"
    yield " (:predicates " + " ".join(f"(z{i})" for i in range(F)) + ")\n"
    for m in models:
        if m.precondition is None or m.effects is None:
            raise ValueError(f"action {m.action} has not been compiled")
        if m.width != F:
            raise ValueError("all actions must share the state width")
        yield f" (:action a{m.action}\n  :parameters ()\n  :precondition "
        yield m.precondition
        yield "\n  :effect (and"
        for f, e in enumerate(m.effects):
            yield "\n    (when "
            yield e
            yield f" (z{f}))\n    (when (not "
            yield e
            yield f") (not (z{f})))"
        yield "))\n"
    yield ")\n"


def domain_size(models, domain_name: str = "latent") -> int:
    """Exact byte size of :func:`emit_domain` output, without building it."""
    total = 0
    sizes: dict[int, int] = {}
    for piece in _domain_pieces(models, domain_name):
        if isinstance(piece, str):
            total += len(piece)
        else:
            if id(piece) not in sizes:
                sizes[id(piece)] = formula_text_size(piece)
            total += sizes[id(piece)]
    return total


def write_domain(models, fh, domain_name: str = "latent") -> int:
    """Stream the domain to a text file object; returns characters written."""
    total = 0

    def write(s):
        nonlocal total
        total += len(s)
        fh.write(s)

    for piece in _domain_pieces(models, domain_name):
        if isinstance(piece, str):
            write(piece)
        else:
            _write_formula(piece, write)
    return total


def emit_domain(models, domain_name: str = "latent") -> str:
    """Grounded PDDL domain: one zero-parameter action per model.

    Each bit f gets ``(when E (zf))`` and ``(when (not E) (not (zf)))``.
    """
    buf = io.StringIO()
    write_domain(models, buf, domain_name)
    return buf.getvalue()


def emit_problem(instance, domain_name: str = "latent", problem_name: str = "instance") -> str:
    """Init lists the true bits; the goal fixes every bit of the goal state."""
    init = np.asarray(instance.init, dtype=bool)
    goal = np.asarray(instance.goal, dtype=bool)
    init_atoms = "".join(f" (z{i})" for i in np.flatnonzero(init))
    goal_atoms = "".join(f" (z{i})" if g else f" (not (z{i}))" for i, g in enumerate(goal))
    return (f"(define (problem {problem_name})\n"
            f" (:domain {domain_name})\n"
            f" (:init{init_atoms})\n"
            f" (:goal (and{goal_atoms}))\n)\n")


# ---------------------------------------------------------------------------
# flattening analysis


@dataclass(frozen=True)
class FlattenReport:
    action_count: int
    per_action: dict
    total: int | None
    exceeded: CapExceeded | None
    timed_out: bool = False

    @property
    def cap_exceeded(self) -> bool:
        return self.exceeded is not None


def flatten_domain(actions: Iterable, cap: int, max_seconds: float | None = None
                   ) -> FlattenReport:
    """Count the disjunction-free actions a precondition split would create.

    ``actions`` are objects with ``name`` (or ``action``) and ``precondition``.
    Conditional effects are left alone. The cap applies to the running total;
    once exceeded the report carries the first :class:`CapExceeded`. When
    ``max_seconds`` runs out the report has ``timed_out`` set and no total.
    """
    per_action = {}
    total = 0
    exceeded = None
    actions = list(actions)
    deadline = None if max_seconds is None else time.monotonic() + max_seconds
    for a in actions:
        name = getattr(a, "name", None) or f"a{a.action}"
        try:
            terms = flatten_to_dnf(a.precondition, max(1, cap - total), deadline)
        except TimeoutError:
            return FlattenReport(len(actions), per_action, None, None, timed_out=True)
        if isinstance(terms, CapExceeded):
            exceeded = CapExceeded(total + terms.count_lower_bound, cap)
            per_action[name] = terms
            break
        per_action[name] = len(terms)
        total += len(terms)
    return FlattenReport(len(actions), per_action, None if exceeded else total, exceeded)


def compile_metrics_csv(models, path_or_buf=None, domain_name: str = "latent") -> str:
    """Per-action size metrics: precondition nodes, mean effect nodes, bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["action", "precondition_nodes", "mean_effect_nodes", "bytes"])
    for m in models:
        pre = metrics(m.precondition).node_count
        eff = [metrics(e).node_count for e in m.effects]
        size = sum(len(p) if isinstance(p, str) else formula_text_size(p)
                   for p in _domain_pieces([m], domain_name)) - _frame_size(m.width, domain_name)
        w.writerow([m.action, pre, f"{sum(eff) / len(eff):.3f}", size])
    text = buf.getvalue()
    if path_or_buf is not None:
        with open(path_or_buf, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def _frame_size(F: int, domain_name: str) -> int:
    head = (f"(define (domain {domain_name})\n" + f" (:requirements {REQUIREMENTS})\n"
            + " (:predicates " + " ".join(f"(z{i})" for i in range(F)) + ")\n")
    return len(head) + len(")\n")
