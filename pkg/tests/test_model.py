import numpy as np
import pytest

from conftest import all_assignments
from dsama.dataset import TransitionDataset, make_lights_out
from dsama.forest import DecisionNode, ForestParams, LeafNode, RandomForest, Tree
from dsama.formula import TRUE, evaluate_batch, max_index
from dsama.labeler import label_by_signature
from dsama.model import (ActionModel, apply_model, apply_model_batch, applicable_batch, assemble,
                         check_model, compile_model, confusion_rates, evaluate_effects,
                         evaluate_preconditions, f_measure, learn, partition, read_bundle,
                         train_effects, train_precondition, write_bundle)


def full_lights(n):
    dom = make_lights_out(n)
    S = all_assignments(n * n)
    before = np.repeat(S, dom.action_count, axis=0)
    labels = np.tile(np.arange(dom.action_count), len(S))
    after = before ^ dom.masks[labels]
    return dom, TransitionDataset(before, after, labels, dom.action_count)


@pytest.fixture(scope="module")
def lights2_models():
    dom, ds = full_lights(2)
    return dom, ds, learn(ds, ForestParams(T=9, D=6, seed=0))


def test_partition_counts():
    ds = TransitionDataset(np.zeros((5, 2), bool), np.ones((5, 2), bool), [0, 0, 0, 1, 1], 2)
    p = partition(ds)
    assert [(len(x), len(x.others)) for x in p] == [(3, 2), (2, 3)]
    assert p[0].pairs.shape == (3, 4)


def test_partition_drops_empty_action():
    ds = TransitionDataset(np.zeros((2, 2), bool), np.ones((2, 2), bool), [0, 2], 3)
    with pytest.warns(RuntimeWarning, match="action 1"):
        p = partition(ds)
    assert [x.action for x in p] == [0, 2]


def test_partition_lights4(lights3_data):
    from dsama.dataset import sample_transitions
    ds = sample_transitions(make_lights_out(4), 9000, seed=0)
    p = partition(ds)
    assert sum(len(x) for x in p) == 9000
    assert all(x.pairs.shape[1] == 32 for x in p)


def test_identity_and_negation_effects(lights2_models):
    dom, ds, models = lights2_models
    S = all_assignments(4)
    for m in models:
        for f, fo in enumerate(m.effect_forests):
            pred = fo.vote_batch(S)
            want = ~S[:, f] if dom.masks[m.action, f] else S[:, f]
            assert np.array_equal(pred, want)


def test_perfect_model_is_xor(lights2_models):
    dom, _, models = lights2_models
    S = all_assignments(4)
    for m in models:
        for mode in ("vote", "formula"):
            assert np.array_equal(apply_model_batch(m, S, mode), S ^ dom.masks[m.action])
        assert np.array_equal(apply_model(m, S[5]), S[5] ^ dom.masks[m.action])


def test_constant_after_bit():
    b = all_assignments(3)
    a = b.copy()
    a[:, 1] = True
    ds = TransitionDataset(b, a, np.zeros(8, int), 1)
    p = partition(ds)[0]
    fo = train_effects(p, 1, ForestParams(T=5, D=3))
    assert fo.T == 1 and fo.vote_batch(all_assignments(3)).all()


def test_constant_true_effect_sets_bit():
    trees = [Tree.from_root(LeafNode(0.0, 1.0))]
    fo = RandomForest(trees, ForestParams(T=1), 2)
    m = compile_model(ActionModel(0, 2, [fo, fo], fo))
    assert m.effects[0] is TRUE
    assert apply_model(m, [0, 0], "formula").tolist() == [True, True]


def test_formula_mode_equals_vote_mode(lights3_data):
    train, _ = lights3_data
    models = learn(train, ForestParams(T=5, D=6, seed=0))
    rng = np.random.default_rng(0)
    S = rng.random((10000, 9)) < 0.5
    for m in models:
        check_model(m)
        assert max_index(m.precondition) < 9
        assert np.array_equal(apply_model_batch(m, S, "vote"), apply_model_batch(m, S, "formula"))
    # central equivalence, exhaustive over all 2^9 states
    S = all_assignments(9)
    for m in models:
        for fo, e in zip(m.effect_forests, m.effects):
            assert np.array_equal(evaluate_batch(e, S), fo.vote_batch(S))
        # compiled precondition = vote on (s; predicted successor)
        succ = apply_model_batch(m, S, "vote")
        assert np.array_equal(applicable_batch(m, S, mode="formula"),
                              applicable_batch(m, S, succ, mode="vote"))


def test_model_counts(lights3_data):
    train, _ = lights3_data
    models = learn(train, ForestParams(T=2, D=3, seed=0))
    assert len(models) == 9 and all(len(m.effects) == 9 for m in models)


def test_width_mismatch(lights2_models):
    m = lights2_models[2][0]
    with pytest.raises(ValueError, match="width"):
        apply_model(m, [0, 1, 0])


# PU correction


def test_pu_arithmetic():
    # avg 0.4 / c 0.8 = 0.5 is not above 0.5
    fo = RandomForest([Tree.from_root(LeafNode(0.6, 0.4))], ForestParams(T=1), 2)
    m = ActionModel(0, 1, [], fo, pu_constant=0.8)
    assert not applicable_batch(m, [[0]], [[1]])[0]
    m.pu_constant = 0.79
    assert applicable_batch(m, [[0]], [[1]])[0]


def test_pu_constant_is_validation_mean():
    trees = [Tree.from_root(LeafNode(1 - p, p)) for p in (0.9, 0.7, 0.8)]
    fo = RandomForest(trees, ForestParams(T=3), 2)
    assert fo.average_batch(np.zeros((3, 2), bool)).mean() == pytest.approx(0.8)


def test_pu_correction_recall(lights3_data):
    train, test = lights3_data
    models = learn(train, ForestParams(T=10, D=8, seed=0))
    for m in models:
        assert 1e-6 <= m.pu_constant <= 1
    pos = test.labels
    hit_plain = hit_corr = 0
    for m in models:
        mask = pos == m.action
        X = np.concatenate([test.before[mask], test.after[mask]], axis=1)
        avg = m.precondition_forest.average_batch(X)
        hit_plain += int((avg > 0.5).sum())
        hit_corr += int((np.minimum(1, avg / m.pu_constant) > 0.5).sum())
    assert hit_corr >= hit_plain


def test_pu_too_few_positives():
    ds = TransitionDataset(np.zeros((3, 2), bool), np.ones((3, 2), bool), [0, 1, 1], 2)
    p = partition(ds)[0]
    with pytest.warns(RuntimeWarning, match="c=1"):
        _, c = train_precondition(p, ForestParams(T=2, D=2))
    assert c == 1.0


# metrics


def test_f_measure_example():
    r, s, f = confusion_rates(9, 1, 7, 3)
    assert (r, s) == pytest.approx((0.9, 0.7))
    assert f == pytest.approx(0.7875)


def test_f_measure_zero_iff_product_zero():
    assert f_measure(0.0, 0.8) == 0 and f_measure(0.5, 0.0) == 0 and f_measure(0, 0) == 0
    assert f_measure(0.1, 0.1) > 0


def test_degenerate_rates():
    r, s, f = confusion_rates(0, 0, 5, 1)
    assert np.isnan(r) and f == 0.0


def test_effects_perfect_and_chance(lights2_models):
    _, ds, models = lights2_models
    assert evaluate_effects(models, ds) == 1.0
    rng = np.random.default_rng(0)
    b = rng.random((2000, 4)) < 0.5
    a = rng.random((2000, 4)) < 0.5
    zero = RandomForest([Tree.from_root(LeafNode(1.0, 0.0))], ForestParams(T=1), 4)
    m = ActionModel(0, 4, [zero] * 4, zero)
    acc = evaluate_effects([m], TransitionDataset(b, a, np.zeros(2000, int), 1))
    assert abs(acc - 0.5) < 0.03


def test_effects_missing_model_counts_wrong(lights2_models):
    _, ds, models = lights2_models
    assert evaluate_effects(models[:2], ds) == pytest.approx(0.5)


def oracle_tree(mask, F, i=0, path=()):
    # 1 iff after == before ^ mask, splitting on bits 0..2F-1 in order
    if i == 2 * F:
        b, a = np.array(path[:F]), np.array(path[F:])
        ok = np.array_equal(a, b ^ mask)
        return LeafNode(0.0, 1.0) if ok else LeafNode(1.0, 0.0)
    return DecisionNode(i, oracle_tree(mask, F, i + 1, path + (True,)),
                        oracle_tree(mask, F, i + 1, path + (False,)))


def test_preconditions_perfect_classifier(lights2_models):
    dom, ds, models = lights2_models
    perfect = []
    for m in models:
        tree = Tree.from_root(oracle_tree(dom.masks[m.action], 4))
        fo = RandomForest([tree], ForestParams(T=1), 8)
        perfect.append(ActionModel(m.action, 4, m.effect_forests, fo))
    met = evaluate_preconditions(perfect, ds, dom, mode="vote")
    assert met.f == 1.0 and not met.degenerate
    assert met.tp == len(ds) and met.fp == 0


def test_preconditions_with_labeling(lights3_data, lights3):
    train, test = lights3_data
    lab = label_by_signature(train)
    labeled = lab.apply_to(train)
    models = learn(labeled, ForestParams(T=5, D=8, seed=0))
    test_l = test.with_labels(lab.assign(test), lab.A)
    met = evaluate_preconditions(models, test_l, lights3, labeling=lab)
    assert met.tp + met.fn == len(test)
    assert 0 < met.f <= 1


def test_current_only_ablation_flag(lights3_data):
    train, _ = lights3_data
    models = assemble(partition(train), ForestParams(T=3, D=4, seed=0), current_only=True)
    assert all(m.precondition_forest.width == 9 for m in models)
    assert all(m.precondition is m.raw_precondition for m in models)


def test_pu_adjusted_gate(lights3_data):
    train, _ = lights3_data
    plain = learn(train, ForestParams(T=5, D=4, seed=0))
    adj = learn(train, ForestParams(T=5, D=4, seed=0), pu_adjusted_gate=True)
    S = all_assignments(9)
    for a, b in zip(plain, adj):
        # the adjusted gate picks an earlier (looser) sorted output
        pa = evaluate_batch(a.precondition, S)
        pb = evaluate_batch(b.precondition, S)
        assert (pa <= pb).all()


# bundle


def test_bundle_round_trip(tmp_path, lights3_data):
    train, _ = lights3_data
    params = ForestParams(T=3, D=5, seed=4)
    models = learn(train, params)
    write_bundle(models, params, tmp_path / "m", extra={"note": "x"})
    back, p2, manifest = read_bundle(tmp_path / "m")
    assert p2 == params and manifest["note"] == "x" and manifest["width"] == 9
    for a, b in zip(models, back):
        assert a.action == b.action and a.pu_constant == b.pu_constant
        assert b.precondition is a.precondition
        assert all(x is y for x, y in zip(a.effects, b.effects))


def test_bundle_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest.json"):
        read_bundle(tmp_path / "nope")
