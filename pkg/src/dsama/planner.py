"""Grounded planning over the emitted PDDL subset.

Supported: zero-parameter actions over nullary predicates ``z<k>``,
preconditions and goals built from ``and``/``or``/``not``, and effects that
are literals or ``(when <formula> <literal or (and literals)>)``.
Search is blind (breadth-first or uniform-cost A* with h=0); states are
expanded in batches so that large compiled formulas are evaluated with numpy.
"""

from __future__ import annotations

import heapq
import re
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .formula import (FALSE, TRUE, And, Formula, Or, Var, evaluate_batch,
                      evaluate_many, negate, simplify)

__all__ = [
    "PddlSyntaxError",
    "GroundAction",
    "Task",
    "SearchResult",
    "Validation",
    "parse",
    "parse_domain",
    "parse_problem",
    "successor",
    "search",
    "validate",
    "format_plan",
    "actions_from_models",
    "ground_truth_domain_pddl",
]


class PddlSyntaxError(ValueError):
    def __init__(self, message, line=None, col=None):
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# s-expressions


class _Tok(NamedTuple):
    text: str
    line: int
    col: int


class _List(list):
    line = 0
    col = 0


_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


def _tokens(text: str):
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches every character
            raise PddlSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        s = m.group()
        if not s[0].isspace() and s[0] != ";":
            yield _Tok(s.lower(), line, col)
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()


def _read(text: str) -> _List:
    stack: list[_List] = []
    result = None
    for tok in _tokens(text):
        if tok.text == "(":
            lst = _List()
            lst.line, lst.col = tok.line, tok.col
            stack.append(lst)
        elif tok.text == ")":
            if not stack:
                raise PddlSyntaxError("unbalanced ')'", tok.line, tok.col)
            lst = stack.pop()
            if stack:
                stack[-1].append(lst)
            elif result is None:
                result = lst
            else:
                raise PddlSyntaxError("text after the top-level form", tok.line, tok.col)
        else:
            if not stack:
                raise PddlSyntaxError(f"atom {tok.text!r} outside of a list", tok.line, tok.col)
            stack[-1].append(tok)
    if stack:
        raise PddlSyntaxError("unbalanced '(': missing ')'", stack[-1].line, stack[-1].col)
    if result is None:
        raise PddlSyntaxError("empty input")
    return result


def _pos(x):
    return (x.line, x.col)


def _head(x) -> str | None:
    if isinstance(x, _List) and x and isinstance(x[0], _Tok):
        return x[0].text
    return None


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class GroundAction:
    name: str
    precondition: Formula
    add_effects: tuple = ()   # (condition, proposition index)
    del_effects: tuple = ()

    def formulas(self) -> list[Formula]:
        return ([self.precondition] + [c for c, _ in self.add_effects]
                + [c for c, _ in self.del_effects])


class Task(NamedTuple):
    actions: list
    init: np.ndarray
    goal: Formula


_PROP = re.compile(r"z(0|[1-9][0-9]*)$")


class _Parser:
    def __init__(self, width: int | None = None):
        self.width = width

    def prop(self, x) -> int:
        if not isinstance(x, _List) or len(x) != 1 or not isinstance(x[0], _Tok):
            raise PddlSyntaxError("expected a proposition (zK)", *_pos(x))
        m = _PROP.match(x[0].text)
        if m is None:
            raise PddlSyntaxError(f"unsupported predicate {x[0].text!r}", x[0].line, x[0].col)
        k = int(m.group(1))
        if self.width is not None and k >= self.width:
            raise PddlSyntaxError(f"proposition z{k} not declared", x[0].line, x[0].col)
        return k

    def formula(self, x) -> Formula:
        if isinstance(x, _Tok):
            raise PddlSyntaxError(f"unexpected atom {x.text!r}", x.line, x.col)
        head = _head(x)
        if head == "and":
            return And([self.formula(c) for c in x[1:]]) if len(x) > 1 else TRUE
        if head == "or":
            return Or([self.formula(c) for c in x[1:]]) if len(x) > 1 else FALSE
        if head == "not":
            if len(x) != 2:
                raise PddlSyntaxError("malformed (not): expected one argument", *_pos(x))
            return negate(self.formula(x[1]))
        if head in ("imply", "exists", "forall", "="):
            raise PddlSyntaxError(f"unsupported construct ({head} ...)", *_pos(x))
        return Var(self.prop(x))

    def literal(self, x) -> tuple[int, bool]:
        if _head(x) == "not":
            if len(x) != 2:
                raise PddlSyntaxError("malformed (not): expected one argument", *_pos(x))
            return self.prop(x[1]), False
        return self.prop(x), True

    def effects(self, x, cond: Formula, adds: list, dels: list) -> None:
        head = _head(x)
        if head == "and":
            for c in x[1:]:
                self.effects(c, cond, adds, dels)
        elif head == "when":
            if len(x) != 3:
                raise PddlSyntaxError(
                    "malformed (when): expected a condition and an effect", *_pos(x))
            if cond is not TRUE:
                raise PddlSyntaxError("nested (when) is not supported", *_pos(x))
            self.effects(x[2], simplify(self.formula(x[1])), adds, dels)
        elif head in ("forall", "increase", "decrease", "assign"):
            raise PddlSyntaxError(f"unsupported construct ({head} ...)", *_pos(x))
        else:
            k, positive = self.literal(x)
            (adds if positive else dels).append((cond, k))

    def action(self, x) -> GroundAction:
        if len(x) < 2 or not isinstance(x[1], _Tok):
            raise PddlSyntaxError("malformed (:action): missing name", *_pos(x))
        name = x[1].text
        fields = {}
        i = 2
        while i < len(x):
            key = x[i]
            if not isinstance(key, _Tok) or not key.text.startswith(":") or i + 1 >= len(x):
                raise PddlSyntaxError(f"malformed (:action {name})", *_pos(x))
            fields[key.text] = x[i + 1]
            i += 2
        params = fields.get(":parameters")
        if params is not None and (not isinstance(params, _List) or len(params) > 0):
            raise PddlSyntaxError(f"action {name}: parameters are not supported", *_pos(x))
        pre = simplify(self.formula(fields[":precondition"])) if ":precondition" in fields else TRUE
        adds, dels = [], []
        if ":effect" in fields:
            self.effects(fields[":effect"], TRUE, adds, dels)
        return GroundAction(name, pre, tuple(adds), tuple(dels))


def _sections(form, kind: str):
    if _head(form) != "define" or len(form) < 2 or _head(form[1]) != kind:
        raise PddlSyntaxError(f"expected (define ({kind} <name>) ...)", *_pos(form))
    return form[2:]


def parse_domain(text: str) -> tuple[list[GroundAction], int]:
    """Actions and state width of a domain in the supported subset."""
    form = _read(text)
    width = None
    raw_actions = []
    for sec in _sections(form, "domain"):
        head = _head(sec)
        if head == ":predicates":
            idx = [_Parser().prop(p) for p in sec[1:]]
            if sorted(idx) != list(range(len(idx))):
                raise PddlSyntaxError("predicates must be z0 .. z(F-1)", *_pos(sec))
            width = len(idx)
        elif head == ":action":
            raw_actions.append(sec)
        elif head in (":requirements",):
            continue
        else:
            raise PddlSyntaxError(f"unsupported section {head!r}", *_pos(sec))
    if width is None:
        raise PddlSyntaxError("domain declares no predicates", *_pos(form))
    parser = _Parser(width)
    return [parser.action(a) for a in raw_actions], width


def parse_problem(text: str, width: int) -> tuple[np.ndarray, Formula]:
    form = _read(text)
    parser = _Parser(width)
    init = np.zeros(width, dtype=bool)
    goal = None
    for sec in _sections(form, "problem"):
        head = _head(sec)
        if head == ":domain":
            continue
        if head == ":init":
            for atom in sec[1:]:
                init[parser.prop(atom)] = True
        elif head == ":goal":
            if len(sec) != 2:
                raise PddlSyntaxError("malformed (:goal)", *_pos(sec))
            goal = simplify(parser.formula(sec[1]))
        else:
            raise PddlSyntaxError(f"unsupported section {head!r}", *_pos(sec))
    if goal is None:
        raise PddlSyntaxError("problem has no goal", *_pos(form))
    return init, goal


def actions_from_models(models) -> list[GroundAction]:
    """Ground actions equivalent to the emitted domain, built from the DAGs."""
    out = []
    for m in models:
        if m.precondition is None or m.effects is None:
            raise ValueError(f"action {m.action} has not been compiled")
        adds = tuple((e, f) for f, e in enumerate(m.effects))
        dels = tuple((simplify(negate(e)), f) for f, e in enumerate(m.effects))
        out.append(GroundAction(f"a{m.action}", m.precondition, adds, dels))
    return out


def parse(domain_text: str, problem_text: str) -> Task:
    actions, width = parse_domain(domain_text)
    init, goal = parse_problem(problem_text, width)
    return Task(actions, init, goal)


# ---------------------------------------------------------------------------
# semantics


class EffectConflict(RuntimeError):
    pass


def _apply_batch(action: GroundAction, S: np.ndarray, strict: bool = False):
    """(applicable mask, successor matrix) for a batch of states."""
    values = evaluate_many(action.formulas(), S)
    app = values[0]
    out = S.copy()
    na = len(action.add_effects)
    adds = values[1: 1 + na]
    dels = values[1 + na:]
    if strict:
        for (_, k), v in zip(action.add_effects, adds):
            for (_, k2), w in zip(action.del_effects, dels):
                if k == k2 and (v & w & app).any():
                    raise EffectConflict(f"{action.name}: z{k} both added and deleted")
    for (_, k), v in zip(action.add_effects, adds):
        out[v, k] = True
    for (_, k), v in zip(action.del_effects, dels):
        out[v, k] = False
    return app, out


def successor(s, a: GroundAction, strict: bool = False):
    """Successor of ``s`` under ``a`` or None if ``a`` is not applicable.

    Effect conditions are evaluated on ``s``; adds are applied before
    deletes, so a delete wins when both fire on the same proposition.
    """
    S = np.asarray(s, dtype=bool).reshape(1, -1)
    app, out = _apply_batch(a, S, strict)
    return out[0] if app[0] else None


# ---------------------------------------------------------------------------
# search


@dataclass
class SearchResult:
    outcome: str                       # "plan", "unreachable" or "resource_exhausted"
    plan: list | None = None
    expanded: int = 0
    generated: int = 0
    duration: float = 0.0
    limit: str | None = None           # which limit stopped the search

    @property
    def solved(self) -> bool:
        return self.outcome == "plan"


def _key(row: np.ndarray) -> bytes:
    return np.packbits(row).tobytes()


def _goal_mask(goal: Formula, S: np.ndarray) -> np.ndarray:
    return evaluate_batch(goal, S)


def _extract(parents, key, actions) -> list[str]:
    plan = []
    while parents[key] is not None:
        key, ai = parents[key]
        plan.append(actions[ai].name)
    return plan[::-1]


def search(actions, init, goal: Formula, algo: str = "bfs", max_expanded: int = 10 ** 6,
           max_seconds: float = 60.0, batch: int = 2048) -> SearchResult:
    """Blind search for a shortest plan with duplicate detection on full states.

    ``bfs`` tests the goal when a state is generated; ``astar_blind`` pops
    states in order of path cost and tests the goal on expansion.
    """
    if algo not in ("bfs", "astar_blind"):
        raise ValueError(f"unknown search algorithm {algo!r}")
    t0 = time.perf_counter()
    actions = list(actions)
    init = np.asarray(init, dtype=bool)
    k0 = _key(init)
    parents: dict[bytes, tuple | None] = {k0: None}
    res = SearchResult("unreachable")

    def done(outcome, plan=None, limit=None):
        res.outcome, res.plan, res.limit = outcome, plan, limit
        res.duration = time.perf_counter() - t0
        return res

    if algo == "bfs":
        if _goal_mask(goal, init.reshape(1, -1))[0]:
            return done("plan", [])
        layer = init.reshape(1, -1)
        while len(layer):
            nxt = []
            for lo in range(0, len(layer), batch):
                chunk = layer[lo: lo + batch]
                stop = _limits(res, chunk, max_expanded, max_seconds, t0)
                if stop:
                    return done("resource_exhausted", limit=stop)
                res.expanded += len(chunk)
                keys = [_key(r) for r in chunk]
                for ai, a in enumerate(actions):
                    app, succ = _apply_batch(a, chunk)
                    rows = np.flatnonzero(app)
                    if not len(rows):
                        continue
                    res.generated += len(rows)
                    hit = _goal_mask(goal, succ[rows])
                    for j, r in enumerate(rows):
                        k = _key(succ[r])
                        if k in parents:
                            continue
                        parents[k] = (keys[r], ai)
                        if hit[j]:
                            return done("plan", _extract(parents, k, actions))
                        nxt.append(succ[r])
            layer = np.array(nxt, dtype=bool).reshape(-1, init.size)
        return done("unreachable")

    # uniform-cost search with a zero heuristic; unit costs, FIFO among ties
    states = {k0: init}
    counter = 0
    heap = [(0, counter, k0)]
    closed = set()
    while heap:
        g = heap[0][0]
        popped = []
        while heap and heap[0][0] == g and len(popped) < batch:
            _, _, k = heapq.heappop(heap)
            if k not in closed:
                closed.add(k)
                popped.append(k)
        if not popped:
            continue
        chunk = np.array([states[k] for k in popped], dtype=bool)
        hit = _goal_mask(goal, chunk)
        if hit.any():
            return done("plan", _extract(parents, popped[int(np.argmax(hit))], actions))
        stop = _limits(res, chunk, max_expanded, max_seconds, t0)
        if stop:
            return done("resource_exhausted", limit=stop)
        res.expanded += len(chunk)
        for ai, a in enumerate(actions):
            app, succ = _apply_batch(a, chunk)
            for r in np.flatnonzero(app):
                res.generated += 1
                k = _key(succ[r])
                if k in parents:
                    continue
                parents[k] = (popped[r], ai)
                states[k] = succ[r]
                counter += 1
                heapq.heappush(heap, (g + 1, counter, k))
    return done("unreachable")


def _limits(res: SearchResult, chunk, max_expanded, max_seconds, t0) -> str | None:
    if res.expanded + len(chunk) > max_expanded:
        return "max_expanded"
    if time.perf_counter() - t0 > max_seconds:
        return "max_seconds"
    return None


def format_plan(result: SearchResult) -> str:
    """Plan file: one action per line, then a stats footer."""
    lines = list(result.plan or [])
    lines.append(f"; outcome={result.outcome}" + (f" limit={result.limit}" if result.limit else ""))
    lines.append(f"; expanded={result.expanded} generated={result.generated} "
                 f"seconds={result.duration:.3f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation against a simulator


@dataclass(frozen=True)
class Validation:
    valid: bool
    first_violation: int | None = None
    reason: str = ""


def validate(plan, instance, oracle, actions=None, action_map: dict | None = None) -> Validation:
    """Replay ``plan`` with the learned actions and check it against ``oracle``.

    Step k is a violation when the learned action is unknown or inapplicable,
    or when no oracle action applicable in the current state produces the
    learned successor (with ``action_map``, the mapped oracle action must be
    the one that does). The goal check after the last step is index len(plan).
    Without ``actions`` the plan names oracle actions directly (``a<k>``).
    """
    if actions is None:
        return _validate_oracle(plan, instance, oracle)
    by_name = {a.name: a for a in actions}
    s = np.asarray(instance.init, dtype=bool)
    for k, name in enumerate(plan):
        a = by_name.get(name)
        if a is None:
            return Validation(False, k, f"unknown action {name!r}")
        t = successor(s, a)
        if t is None:
            return Validation(False, k, f"{name} not applicable in the learned model")
        matches = oracle.matching_actions(s, t)
        if action_map is not None and name in action_map:
            ok = action_map[name] in matches
        else:
            ok = bool(matches)
        if not ok:
            return Validation(False, k, f"{name} has no matching oracle transition")
        s = t
    if not np.array_equal(s, np.asarray(instance.goal, dtype=bool)):
        return Validation(False, len(plan), "plan does not reach the goal")
    return Validation(True)


def _validate_oracle(plan, instance, oracle) -> Validation:
    s = np.asarray(instance.init, dtype=bool)
    for k, name in enumerate(plan):
        m = re.fullmatch(r"a(\d+)", name)
        if m is None or int(m.group(1)) >= oracle.action_count:
            return Validation(False, k, f"unknown action {name!r}")
        a = int(m.group(1))
        if not oracle.applicable(s, a):
            return Validation(False, k, f"{name} not applicable")
        s = oracle.apply(s, a)
    if not np.array_equal(s, np.asarray(instance.goal, dtype=bool)):
        return Validation(False, len(plan), "plan does not reach the goal")
    return Validation(True)


# ---------------------------------------------------------------------------
# reference domains written out by hand from the simulators


def ground_truth_domain_pddl(domain, domain_name: str = "latent") -> str:
    """PDDL for a simulator, in the same subset the planner reads.

    Supports LightsOut (toggle effects) and the sliding puzzle.
    """
    from .dataset import LightsOut, SlidingPuzzle

    F = domain.width
    out = [f"(define (domain {domain_name})",
           " (:requirements :strips :negative-preconditions :conditional-effects)",
           " (:predicates " + " ".join(f"(z{i})" for i in range(F)) + ")"]
    if isinstance(domain, LightsOut):
        for a in range(domain.action_count):
            effs = []
            for k in np.flatnonzero(domain.masks[a]):
                effs.append(f"(when (z{k}) (not (z{k})))")
                effs.append(f"(when (not (z{k})) (z{k}))")
            out.append(f" (:action a{a}\n  :parameters ()\n  :precondition (and)\n"
                       f"  :effect (and {' '.join(effs)}))")
    elif isinstance(domain, SlidingPuzzle):
        n = domain.cells
        for a, (p, q, _) in enumerate(domain.moves):
            effs = [f"(z{q})", f"(not (z{p}))"]
            for t in range(1, n):
                effs.append(f"(when (z{t * n + q}) (and (z{t * n + p}) (not (z{t * n + q}))))")
            out.append(f" (:action a{a}\n  :parameters ()\n  :precondition (z{p})\n"
                       f"  :effect (and {' '.join(effs)}))")
    else:
        raise TypeError(f"no reference PDDL for {type(domain).__name__}")
    out.append(")")
    return "\n".join(out) + "\n"
