"""Propositional formulas in negation normal form.

Nodes are hash-consed: constructing the same structure twice returns the same
object, so structural equality is identity and compiled circuits share their
subformulas. A formula is therefore a DAG in memory even though its textual
(PDDL) form is a tree; every traversal here is memoized over the DAG.
"""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "Formula",
    "Var",
    "NegVar",
    "And",
    "Or",
    "TRUE",
    "FALSE",
    "conj",
    "disj",
    "evaluate",
    "evaluate_batch",
    "evaluate_many",
    "simplify",
    "negate",
    "metrics",
    "FormulaMetrics",
    "flatten_to_dnf",
    "CapExceeded",
    "max_index",
    "postorder",
]

_TABLE: "weakref.WeakValueDictionary[tuple, Formula]" = weakref.WeakValueDictionary()

_CONST, _LIT, _AND, _OR = 0, 1, 2, 3


class Formula:
    """Base class. Use the subclasses or the constants TRUE/FALSE."""

    __slots__ = ("children", "key", "__weakref__")
    kind: int = -1

    children: tuple
    key: tuple

    def __iter__(self):
        return iter(self.children)

    def __len__(self):
        return len(self.children)

    def __reduce__(self):
        return _rebuild, (self.__class__, self._args())

    def _args(self):
        return (self.children,)

    @property
    def is_literal(self) -> bool:
        return self.kind == _LIT

    @property
    def is_const(self) -> bool:
        return self.kind == _CONST


def _rebuild(cls, args):
    return cls(*args)


class _Const(Formula):
    __slots__ = ("value",)
    kind = _CONST

    def __new__(cls, value: bool):
        k = ("const", bool(value))
        node = _TABLE.get(k)
        if node is None:
            node = object.__new__(cls)
            node.value = bool(value)
            node.children = ()
            node.key = (0, int(value))
            _TABLE[k] = node
        return node

    def _args(self):
        return (self.value,)

    def __repr__(self):
        return "True" if self.value else "False"


TRUE = _Const(True)
FALSE = _Const(False)
# keep the two constants alive for the lifetime of the interpreter
_PINNED = (TRUE, FALSE)


class _Literal(Formula):
    __slots__ = ("index",)
    kind = _LIT
    positive: bool = True

    def __new__(cls, index: int):
        index = int(index)
        if index < 0:
            raise ValueError(f"variable index must be non-negative, got {index}")
        k = (cls.__name__, index)
        node = _TABLE.get(k)
        if node is None:
            node = object.__new__(cls)
            node.index = index
            node.children = ()
            node.key = (1, index, 0 if cls.positive else 1)
            _TABLE[k] = node
        return node

    def _args(self):
        return (self.index,)

    def __repr__(self):
        return f"{type(self).__name__}({self.index})"


class Var(_Literal):
    __slots__ = ()
    positive = True


class NegVar(_Literal):
    __slots__ = ()
    positive = False


class _Junction(Formula):
    __slots__ = ()

    def __new__(cls, children: Iterable[Formula]):
        children = tuple(children)
        for c in children:
            if not isinstance(c, Formula):
                raise TypeError(f"not a formula: {c!r}")
        k = (cls.kind, tuple(id(c) for c in children))
        node = _TABLE.get(k)
        if node is None:
            node = object.__new__(cls)
            node.children = children
            node.key = (2, cls.kind, hash(tuple(c.key for c in children)))
            _TABLE[k] = node
        return node

    def __repr__(self):
        return f"{type(self).__name__}[{', '.join(map(repr, self.children))}]"


class And(_Junction):
    __slots__ = ()
    kind = _AND


class Or(_Junction):
    __slots__ = ()
    kind = _OR


def postorder(f: Formula, *more: Formula) -> list[Formula]:
    """Distinct nodes of the DAG(s), children before parents."""
    seen = set()
    order = []
    stack = [(g, False) for g in reversed((f,) + more)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for c in reversed(node.children):
            if id(c) not in seen:
                stack.append((c, False))
    return order


def max_index(f: Formula) -> int:
    """Largest variable index mentioned in ``f``, or -1 if none."""
    m = -1
    for node in postorder(f):
        if node.kind == _LIT and node.index > m:
            m = node.index
    return m


# ---------------------------------------------------------------------------
# evaluation


def evaluate(f: Formula, assignment) -> bool:
    """Truth value of ``f`` under a single 0/1 assignment."""
    bits = np.asarray(assignment, dtype=bool).reshape(1, -1)
    return bool(evaluate_batch(f, bits)[0])


def evaluate_batch(f: Formula, assignments) -> np.ndarray:
    """Evaluate ``f`` on every row of an (N, width) 0/1 matrix."""
    return evaluate_many([f], assignments)[0]


def evaluate_many(formulas, assignments) -> list[np.ndarray]:
    """Evaluate several formulas in one pass, sharing common subformulas."""
    formulas = list(formulas)
    if not formulas:
        return []
    X = np.asarray(assignments, dtype=bool)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    n, width = X.shape
    values: dict[int, np.ndarray] = {}
    for node in postorder(*formulas):
        kind = node.kind
        if kind == _LIT:
            if node.index >= width:
                raise IndexError(
                    f"variable index {node.index} out of range for width {width}")
            col = X[:, node.index]
            v = col if node.positive else ~col
        elif kind == _CONST:
            v = np.full(n, node.value, dtype=bool)
        elif not node.children:
            v = np.full(n, kind == _AND, dtype=bool)
        else:
            it = iter(node.children)
            v = values[id(next(it))].copy()
            if kind == _AND:
                for c in it:
                    v &= values[id(c)]
            else:
                for c in it:
                    v |= values[id(c)]
        values[id(node)] = v
    return [values[id(f)] for f in formulas]


# ---------------------------------------------------------------------------
# simplification


def _complement(lit: Formula) -> Formula:
    return NegVar(lit.index) if lit.positive else Var(lit.index)


def _junction(cls, children: Iterable[Formula]) -> Formula:
    # children are assumed simplified already
    absorbing, neutral = (FALSE, TRUE) if cls is And else (TRUE, FALSE)
    flat = []
    seen = set()
    for c in children:
        if c is absorbing:
            return absorbing
        if c is neutral:
            continue
        sub = c.children if type(c) is cls else (c,)
        for g in sub:
            if id(g) in seen:
                continue
            seen.add(id(g))
            flat.append(g)
    lits = {(g.index, g.positive) for g in flat if g.kind == _LIT}
    for i, pos in lits:
        if (i, not pos) in lits:
            return absorbing
    if not flat:
        return neutral
    if len(flat) == 1:
        return flat[0]
    flat.sort(key=lambda g: g.key)
    return cls(flat)


def conj(*children: Formula) -> Formula:
    """Simplifying conjunction of already-simplified formulas."""
    return _junction(And, children)


def disj(*children: Formula) -> Formula:
    """Simplifying disjunction of already-simplified formulas."""
    return _junction(Or, children)


def simplify(f: Formula) -> Formula:
    """Apply the unit, complement and absorption identities to fixpoint.

    ``v & True = v``, ``v | False = v``, ``v & ~v = False``, ``v | ~v = True``,
    constant absorption, duplicate removal, flattening of nested same-kind
    junctions, single-child unwrapping. Children are put in canonical order.
    """
    out: dict[int, Formula] = {}
    for node in postorder(f):
        if node.kind in (_LIT, _CONST):
            out[id(node)] = node
        else:
            cls = And if node.kind == _AND else Or
            out[id(node)] = _junction(cls, [out[id(c)] for c in node.children])
    return out[id(f)]


def negate(f: Formula) -> Formula:
    """NNF formula equivalent to the negation of ``f`` (De Morgan push-down)."""
    out: dict[int, Formula] = {}
    for node in postorder(f):
        kind = node.kind
        if kind == _LIT:
            r = _complement(node)
        elif kind == _CONST:
            r = FALSE if node.value else TRUE
        elif kind == _AND:
            r = Or([out[id(c)] for c in node.children])
        else:
            r = And([out[id(c)] for c in node.children])
        out[id(node)] = r
    return out[id(f)]


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class FormulaMetrics:
    """Sizes of the tree-expanded formula (what a text emitter prints)."""

    node_count: int
    depth: int
    or_count: int
    literal_count: int


def metrics(f: Formula) -> FormulaMetrics:
    memo: dict[int, tuple[int, int, int, int]] = {}
    for node in postorder(f):
        if node.kind == _LIT:
            memo[id(node)] = (1, 0, 0, 1)
        elif node.kind == _CONST:
            memo[id(node)] = (1, 0, 0, 0)
        else:
            sub = [memo[id(c)] for c in node.children]
            memo[id(node)] = (
                1 + sum(s[0] for s in sub),
                1 + max((s[1] for s in sub), default=-1),
                (node.kind == _OR) + sum(s[2] for s in sub),
                sum(s[3] for s in sub),
            )
    return FormulaMetrics(*memo[id(f)])


# ---------------------------------------------------------------------------
# flattening


@dataclass(frozen=True)
class CapExceeded:
    """Flattening gave up: the term set grew past the cap.

    ``count_lower_bound`` is the size of the term set at the moment the cap
    was crossed. It depends on the left-to-right distribution order.
    """

    count_lower_bound: int
    cap: int


def _lit_code(node: Formula) -> int:
    # a term is an int with bit 2k for z_k and bit 2k+1 for its negation
    return 1 << (2 * node.index + (0 if node.positive else 1))


def _check_deadline(deadline):
    if deadline is not None and time.monotonic() > deadline:
        raise TimeoutError("flattening ran past its time budget")


def _flatten_sets(f: Formula, n: int, cap: int, deadline=None):
    even = int("01" * n, 2) if n > 0 else 0
    memo: dict[int, set[int]] = {}
    for node in postorder(f):
        _check_deadline(deadline)
        kind = node.kind
        if kind == _LIT:
            terms = {_lit_code(node)}
        elif kind == _CONST:
            terms = {0} if node.value else set()
        elif kind == _OR:
            terms = set()
            for c in node.children:
                terms |= memo[id(c)]
                if len(terms) > cap:
                    return CapExceeded(len(terms), cap)
        else:
            terms = {0}
            for c in node.children:
                nxt = set()
                for u in memo[id(c)]:
                    for t in terms:
                        merged = t | u
                        if merged & (merged >> 1) & even:
                            continue
                        nxt.add(merged)
                    if len(nxt) > cap:
                        return CapExceeded(len(nxt), cap)
                terms = nxt
                if not terms:
                    break
        memo[id(node)] = terms
    terms = [frozenset(Var(c >> 1) if c % 2 == 0 else NegVar(c >> 1) for c in _codes(t))
             for t in memo[id(f)]]
    return terms


def _codes(term: int) -> list[int]:
    return [i for i in range(term.bit_length()) if term >> i & 1]


# Variant for few variables. A term is the code P | N << n (P, N: bit masks of
# positive and negative literals) and a term set a sorted array of codes.
# Small conjunctions are formed pairwise; large ones go through a dense
# indicator over the 3^n possible terms, where {t | u} is a join over the
# lattice (absent < positive, absent < negative) computed exactly by a zeta
# transform, a pointwise product and the inverse (Moebius) transform.
# Contradictory pairs have no upper bound and vanish on their own.

DENSE_MAX_VARS = 12


class _Lattice:
    def __init__(self, n: int):
        self.n = n
        self.mask = (1 << n) - 1
        self.size = 3 ** n
        self.weights = 3 ** np.arange(n - 1, -1, -1, dtype=np.int64)
        self._codes = None

    def codes(self) -> np.ndarray:
        """Code of every dense index, in index order."""
        if self._codes is None:
            idx = np.arange(self.size, dtype=np.int64)
            codes = np.zeros(self.size, dtype=np.int64)
            for k in range(self.n):
                d = (idx // self.weights[k]) % 3
                codes |= (d == 1).astype(np.int64) << k
                codes |= (d == 2).astype(np.int64) << (k + self.n)
            self._codes = codes
        return self._codes

    def to_dense(self, codes: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(codes), dtype=np.int64)
        for k in range(self.n):
            idx += (((codes >> k) & 1) + 2 * ((codes >> (k + self.n)) & 1)) * self.weights[k]
        a = np.zeros(self.size, dtype=np.int64)
        a[idx] = 1
        return a

    def zeta(self, a: np.ndarray, sign: int = 1) -> np.ndarray:
        n = self.n
        for k in range(n):
            v = a.reshape(3 ** k, 3, 3 ** (n - k - 1))
            if sign > 0:
                v[:, 1] += v[:, 0]
                v[:, 2] += v[:, 0]
            else:
                v[:, 1] -= v[:, 0]
                v[:, 2] -= v[:, 0]
        return a

    def join(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if len(a) * len(b) <= 4 * self.size:
            m = (a[:, None] | b[None, :]).reshape(-1)
            m = m[(m & (m >> self.n) & self.mask) == 0]
            return np.unique(m)
        z = self.zeta(self.to_dense(a))
        z *= self.zeta(self.to_dense(b))
        return self.codes()[self.zeta(z, -1) > 0]


def _flatten_dense(f: Formula, n: int, cap: int, deadline=None):
    lat = _Lattice(n)
    nodes = postorder(f)
    parents: dict[int, int] = {}
    for node in nodes:
        for c in node.children:
            parents[id(c)] = parents.get(id(c), 0) + 1
    unit = np.zeros(1, dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    memo: dict[int, np.ndarray] = {}
    for node in nodes:
        _check_deadline(deadline)
        kind = node.kind
        if kind == _LIT:
            a = np.array([1 << (node.index + (0 if node.positive else n))], dtype=np.int64)
        elif kind == _CONST:
            a = unit if node.value else empty
        elif kind == _OR:
            a = np.unique(np.concatenate([memo[id(c)] for c in node.children] or [empty]))
        else:
            a = unit
            for c in node.children:
                a = lat.join(a, memo[id(c)])
                if len(a) > cap:
                    return CapExceeded(len(a), cap)
        if len(a) > cap:
            return CapExceeded(len(a), cap)
        memo[id(node)] = a
        for c in node.children:
            parents[id(c)] -= 1
            if parents[id(c)] == 0:
                del memo[id(c)]
    terms = []
    for code in memo[id(f)].tolist():
        lits = [Var(k) for k in range(n) if code >> k & 1]
        lits += [NegVar(k) for k in range(n) if code >> (k + n) & 1]
        terms.append(frozenset(lits))
    return terms


def _term_key(t) -> tuple:
    return len(t), sorted(2 * lit.index + (0 if lit.positive else 1) for lit in t)


def flatten_to_dnf(f: Formula, cap: int, deadline: float | None = None
                   ) -> "list[frozenset[Formula]] | CapExceeded":
    """Distribute conjunctions over disjunctions.

    Returns the DNF terms (sets of literals) whose disjunction is equivalent to
    ``f``. Contradictory terms are dropped; ``False`` yields no terms and
    ``True`` a single empty term. Returns :class:`CapExceeded` as soon as any
    intermediate term set holds more than ``cap`` terms. ``deadline`` is a
    :func:`time.monotonic` value after which :class:`TimeoutError` is raised.
    """
    if cap < 1:
        raise ValueError("cap must be positive")
    n = max_index(f) + 1
    if n <= DENSE_MAX_VARS:
        terms = _flatten_dense(f, n, cap, deadline)
    else:
        terms = _flatten_sets(f, n, cap, deadline)
    if isinstance(terms, CapExceeded):
        return terms
    return sorted(terms, key=_term_key)


