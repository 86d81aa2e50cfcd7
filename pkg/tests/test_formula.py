import pickle

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import all_assignments
from dsama.formula import (FALSE, TRUE, And, CapExceeded, NegVar, Or, Var, conj, disj, evaluate,
                           evaluate_batch, evaluate_many, flatten_to_dnf, max_index, metrics,
                           negate, simplify)
from dsama.formula import _flatten_dense, _flatten_sets, _term_key


def nnf(n_vars: int, max_leaves: int = 30):
    """Raw (unsimplified) NNF formulas over n_vars variables."""
    leaf = st.one_of(
        st.integers(0, n_vars - 1).map(Var),
        st.integers(0, n_vars - 1).map(NegVar),
        st.sampled_from([TRUE, FALSE]),
    )
    return st.recursive(
        leaf,
        lambda kids: st.one_of(st.lists(kids, min_size=1, max_size=4).map(And),
                               st.lists(kids, min_size=1, max_size=4).map(Or)),
        max_leaves=max_leaves,
    )


def truth_table(f, n):
    return evaluate_batch(f, all_assignments(n))


def dnf_table(terms, n):
    X = all_assignments(n)
    out = np.zeros(len(X), dtype=bool)
    for t in terms:
        out |= evaluate_batch(conj(*t), X)
    return out


# evaluate


def test_evaluate_literals():
    assert evaluate(And([Var(0), NegVar(1)]), [1, 0])


def test_evaluate_true_constant():
    assert evaluate(TRUE, [0, 1, 0])
    assert not evaluate(FALSE, [1])


def test_evaluate_hand_table():
    f = Or([And([Var(0), Var(1)]), And([Var(2), Var(3)])])
    assert not evaluate(f, [0, 1, 1, 0])
    assert evaluate(f, [0, 0, 1, 1])


def test_evaluate_index_out_of_range():
    with pytest.raises(IndexError, match="5.*width 3"):
        evaluate(Var(5), [0, 1, 0])


def test_evaluate_many_shares_work():
    a, b = Var(0), conj(Var(0), NegVar(1))
    X = all_assignments(2)
    va, vb = evaluate_many([a, b], X)
    assert np.array_equal(va, X[:, 0])
    assert np.array_equal(vb, X[:, 0] & ~X[:, 1])


# simplify


def test_simplify_true_in_and():
    assert simplify(And([Var(3), TRUE])) is Var(3)


def test_simplify_excluded_middle():
    assert simplify(Or([Var(2), NegVar(2)])) is TRUE


def test_simplify_contradiction():
    assert simplify(And([Var(2), NegVar(2)])) is FALSE


def test_simplify_false_and_duplicates():
    f = And([Var(0), Or([FALSE, Var(1)]), Var(0)])
    g = simplify(f)
    assert g is And([Var(0), Var(1)])
    assert np.array_equal(truth_table(f, 2), truth_table(g, 2))


def test_simplify_absorption():
    assert simplify(And([Var(0), FALSE])) is FALSE
    assert simplify(Or([Var(0), TRUE])) is TRUE
    assert simplify(And([])) is TRUE
    assert simplify(Or([])) is FALSE


@given(nnf(6))
def test_simplify_preserves_semantics(f):
    assert np.array_equal(truth_table(f, 6), truth_table(simplify(f), 6))


@given(nnf(6))
def test_simplify_idempotent(f):
    g = simplify(f)
    assert simplify(g) is g


@given(nnf(6))
def test_simplified_junctions_nonempty(f):
    g = simplify(f)
    stack = [g]
    while stack:
        node = stack.pop()
        if isinstance(node, (And, Or)):
            assert len(node.children) >= 2
            stack.extend(node.children)


# negate


def test_negate_literal():
    assert negate(Var(5)) is NegVar(5)
    assert negate(NegVar(5)) is Var(5)


def test_negate_de_morgan():
    assert negate(And([Var(0), NegVar(1)])) is Or([NegVar(0), Var(1)])


def test_negate_constants():
    assert negate(TRUE) is FALSE and negate(FALSE) is TRUE


@given(nnf(8))
def test_negate_is_complement(f):
    assert np.array_equal(truth_table(negate(f), 8), ~truth_table(f, 8))


@given(nnf(8))
def test_double_negation_structural(f):
    assert simplify(negate(negate(f))) is simplify(f)


# metrics


def test_metrics_literal():
    m = metrics(Var(0))
    assert (m.node_count, m.depth, m.or_count, m.literal_count) == (1, 0, 0, 1)


def test_metrics_and():
    m = metrics(And([Var(0), Var(1)]))
    assert (m.node_count, m.depth, m.or_count, m.literal_count) == (3, 1, 0, 2)


def test_metrics_nested():
    m = metrics(Or([And([Var(0), Var(1)]), NegVar(2)]))
    assert (m.node_count, m.depth, m.or_count, m.literal_count) == (5, 2, 1, 3)


def test_metrics_count_shared_nodes_as_tree():
    shared = conj(Var(0), Var(1))
    f = disj(conj(shared, Var(2)), conj(shared, Var(3)))
    # tree form: Or(And(And(v0,v1), v2), And(And(v0,v1), v3)) after flattening
    assert metrics(f).literal_count == 6


@given(nnf(5))
def test_metrics_invariants(f):
    m = metrics(f)
    assert m.node_count >= m.literal_count >= 0
    assert m.depth >= 0 and m.or_count >= 0


# hash consing and pickling


def test_structural_identity():
    assert conj(Var(1), Var(0)) is conj(Var(0), Var(1))
    assert And([Var(0), Var(1)]) is And([Var(0), Var(1)])


def test_pickle_round_trip():
    f = disj(conj(Var(0), NegVar(3)), Var(2))
    assert pickle.loads(pickle.dumps(f)) is f


def test_max_index():
    assert max_index(TRUE) == -1
    assert max_index(disj(Var(3), NegVar(7))) == 7


# flatten


def test_flatten_distribution():
    f = And([Or([Var(0), Var(1)]), Or([Var(2), Var(3)])])
    terms = flatten_to_dnf(f, 100)
    assert sorted(sorted(t.index for t in term) for term in terms) == [[0, 2], [0, 3], [1, 2],
                                                                         [1, 3]]


def test_flatten_conjunction():
    assert flatten_to_dnf(And([Var(0), Var(1)]), 100) == [frozenset({Var(0), Var(1)})]


def test_flatten_constants():
    assert flatten_to_dnf(TRUE, 1) == [frozenset()]
    assert flatten_to_dnf(FALSE, 1) == []


def test_flatten_drops_contradictions():
    f = And([Or([Var(0), Var(1)]), NegVar(0)])
    assert flatten_to_dnf(f, 10) == [frozenset({Var(1), NegVar(0)})]


def test_flatten_cap_exceeded():
    f = And([Or([Var(2 * i), Var(2 * i + 1)]) for i in range(6)])  # 64 terms
    r = flatten_to_dnf(f, 20)
    assert isinstance(r, CapExceeded)
    assert r.cap == 20 and r.count_lower_bound > 20
    assert len(flatten_to_dnf(f, 64)) == 64


def test_flatten_rejects_bad_cap():
    with pytest.raises(ValueError):
        flatten_to_dnf(Var(0), 0)


@given(nnf(7, max_leaves=25))
def test_flatten_equivalent(f):
    terms = flatten_to_dnf(f, 10 ** 6)
    assert np.array_equal(dnf_table(terms, 7), truth_table(f, 7))
    for t in terms:
        idx = [lit.index for lit in t]
        assert len(idx) == len(set(idx))  # no complementary pair, no duplicate


@given(nnf(6, max_leaves=25))
def test_flatten_lattice_matches_plain_distribution(f):
    n = max_index(f) + 1
    a = sorted(_flatten_sets(f, n, 10 ** 6), key=_term_key)
    b = sorted(_flatten_dense(f, n, 10 ** 6), key=_term_key)
    assert a == b


def test_flatten_lattice_large_product():
    # big enough operands to take the transform path
    f = conj(*[disj(Var(i), NegVar((i + 1) % 8), Var((i + 3) % 8)) for i in range(8)])
    a = sorted(_flatten_sets(f, 8, 10 ** 7), key=_term_key)
    b = sorted(_flatten_dense(f, 8, 10 ** 7), key=_term_key)
    assert a == b
    assert np.array_equal(dnf_table(b, 8), truth_table(f, 8))


def test_flatten_deadline():
    import time
    f = conj(*[disj(Var(i), Var(i + 1)) for i in range(10)])
    with pytest.raises(TimeoutError):
        flatten_to_dnf(f, 10 ** 6, deadline=time.monotonic() - 1)
