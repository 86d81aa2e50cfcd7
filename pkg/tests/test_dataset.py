import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dsama.dataset import (DatasetFormatError, TransitionDataset, make_instances, make_lights_out,
                           make_sliding_puzzle, read_dataset, read_instances, sample_transitions,
                           split, write_dataset, write_instances)


def reachable_count(start, successors):
    seen = {start}
    queue = deque([start])
    edges = 0
    while queue:
        s = queue.popleft()
        for t in successors(s):
            edges += 1
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return len(seen), edges


def bfs_distance(domain, init, limit):
    goal = domain.goal_state.tobytes()
    frontier = [np.asarray(init, dtype=bool)]
    seen = {frontier[0].tobytes()}
    for d in range(limit + 1):
        if any(s.tobytes() == goal for s in frontier):
            return d
        nxt = []
        for s in frontier:
            for _, t in domain.successors(s):
                if t.tobytes() not in seen:
                    seen.add(t.tobytes())
                    nxt.append(t)
        frontier = nxt
    return None


# LightsOut


def test_lights_out_counts_n4():
    dom = make_lights_out(4)
    assert dom.width == 16 and dom.action_count == 16
    # every 16-bit vector is a state and every press applies to it
    states = ((np.arange(2 ** 16)[:, None] >> np.arange(16)) & 1).astype(bool)
    edges = set()
    for s in states[::997]:
        assert dom.applicable_actions(s) == list(range(16))
    for k in range(16):
        succ = states ^ dom.masks[k]
        assert len(np.unique(np.packbits(succ, axis=1), axis=0)) == 2 ** 16
        edges.add(k)
    assert len(states) == 65536
    assert len(states) * len(edges) == 1048576


def test_lights_out_reachable_from_goal_n4():
    # the 4x4 press matrix has rank 12 over GF(2)
    dom = make_lights_out(4)
    masks = [int("".join("1" if b else "0" for b in m[::-1]), 2) for m in dom.masks]
    states, edges = reachable_count(0, lambda s: [s ^ m for m in masks])
    assert states == 4096 and edges == 4096 * 16


def test_lights_out_corner_press_n2():
    dom = make_lights_out(2)
    z = dom.apply(np.zeros(4, dtype=bool), 0)
    assert z.tolist() == [True, True, True, False]


@given(st.integers(2, 5), st.data())
def test_lights_out_toggle_properties(n, data):
    dom = make_lights_out(n)
    s = np.array(data.draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n)))
    k = data.draw(st.integers(0, n * n - 1))
    t = dom.apply(s, k)
    assert np.array_equal(dom.apply(t, k), s)
    assert np.array_equal(t ^ s, dom.masks[k])
    assert (t ^ s).sum() == dom.masks[k].sum()


def test_lights_out_rejects_small():
    with pytest.raises(ValueError):
        make_lights_out(1)


# sliding puzzle


def test_puzzle_counts_side3():
    dom = make_sliding_puzzle(3)
    assert dom.width == 81

    def moves(tiles):
        b = tiles.index(0)
        r, c = divmod(b, 3)
        out = []
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if 0 <= r + dr < 3 and 0 <= c + dc < 3:
                q = (r + dr) * 3 + c + dc
                t = list(tiles)
                t[b], t[q] = t[q], t[b]
                out.append(tuple(t))
        return out

    # all 9! tile arrangements count as states; half are reachable from the goal
    states = list(itertools.permutations(range(9)))
    edges = sum(len(moves(t)) for t in states)
    assert len(states) == 362880
    assert edges == 967680
    assert reachable_count(tuple(range(9)), moves)[0] == 181440
    assert dom.action_count == 24


def test_puzzle_simulator_matches_permutation_moves():
    dom = make_sliding_puzzle(3)
    rng = np.random.default_rng(1)
    for _ in range(50):
        tiles = list(rng.permutation(9))
        z = dom.encode(tiles)
        assert dom.decode(z) == tiles
        got = sorted(dom.decode(t) for _, t in dom.successors(z))
        b = tiles.index(0)
        want = []
        for a in dom.applicable_actions(z):
            q = dom.moves[a][1]
            t = list(tiles)
            t[b], t[q] = t[q], t[b]
            want.append(t)
        assert got == sorted(want)
        for _, t in dom.successors(z):
            assert t.sum() == 9
            grid = t.reshape(9, 9)
            assert (grid.sum(0) == 1).all() and (grid.sum(1) == 1).all()


def test_puzzle_solved_state_side2():
    dom = make_sliding_puzzle(2)
    assert set(np.flatnonzero(dom.goal_state)) == {0, 5, 10, 15}


def test_puzzle_move_right_side2():
    dom = make_sliding_puzzle(2)
    a = next(i for i, (p, q, d) in enumerate(dom.moves) if p == 0 and d == "right")
    s = dom.goal_state
    t = dom.apply(s, a)
    # blank (tile 0) goes from position 0 to 1, tile 1 from 1 to 0
    assert set(np.flatnonzero(s ^ t)) == {0, 1, 4, 5}
    assert dom.decode(t) == [1, 0, 2, 3]


def test_puzzle_inapplicable_move():
    dom = make_sliding_puzzle(2)
    a = next(i for i, (p, _, _) in enumerate(dom.moves) if p == 3)
    assert not dom.applicable(dom.goal_state, a)
    with pytest.raises(ValueError):
        dom.apply(dom.goal_state, a)


# sampling


def test_sample_count_lights4():
    ds = sample_transitions(make_lights_out(4), 10000, seed=0)
    assert len(ds) == 10000 and ds.width == 16 and ds.label_count == 16


def test_sample_deterministic():
    dom = make_lights_out(3)
    assert sample_transitions(dom, 1, seed=5).equals(sample_transitions(dom, 1, seed=5))
    assert sample_transitions(dom, 300, seed=5).equals(sample_transitions(dom, 300, seed=5))


@pytest.mark.parametrize("dom", [make_lights_out(3), make_sliding_puzzle(3)],
                         ids=["lightsout3", "puzzle3"])
def test_sample_passes_validator(dom):
    ds = sample_transitions(dom, 500, seed=2)
    for b, a, k in zip(ds.before, ds.after, ds.labels):
        assert dom.applicable(b, k)
        assert np.array_equal(dom.apply(b, k), a)


def test_sample_rejects_zero_count():
    with pytest.raises(ValueError):
        sample_transitions(make_lights_out(2), 0, seed=0)


def test_noise_flips_bits():
    dom = make_lights_out(3)
    clean = sample_transitions(dom, 2000, seed=0)
    noisy = sample_transitions(dom, 2000, seed=0, noise=0.05)
    rate = np.mean(clean.before != noisy.before)
    assert 0.03 < rate < 0.07


# split


def test_split_sizes():
    ds = sample_transitions(make_lights_out(4), 10000, seed=0)
    train, test = split(ds, 0.9, seed=0)
    assert (len(train), len(test)) == (9000, 1000)


def test_split_disjoint_and_exhaustive():
    ds = TransitionDataset(np.eye(10, dtype=bool), np.eye(10, dtype=bool), np.arange(10), 10)
    a, b = split(ds, 0.5, seed=3)
    assert len(a) == len(b) == 5
    assert sorted(a.labels.tolist() + b.labels.tolist()) == list(range(10))
    a2, _ = split(ds, 0.5, seed=3)
    assert a.equals(a2)


def test_split_errors():
    empty = TransitionDataset(np.zeros((0, 3), bool), np.zeros((0, 3), bool))
    with pytest.raises(ValueError):
        split(empty, 0.5, seed=0)
    ds = TransitionDataset(np.zeros((2, 3), bool), np.zeros((2, 3), bool))
    for bad in (0, 1, 1.5):
        with pytest.raises(ValueError):
            split(ds, bad, seed=0)


# instances


def test_instances_count_and_solvable():
    dom = make_lights_out(3)
    inst = make_instances(dom, [7, 14], 10, seed=0)
    assert len(inst) == 20
    assert [i.walk_length for i in inst] == [7] * 10 + [14] * 10
    for i in inst:
        assert np.array_equal(i.goal, dom.goal_state)
        d = bfs_distance(dom, i.init, i.walk_length)
        assert d is not None and d <= i.walk_length


def test_instances_puzzle_solvable():
    dom = make_sliding_puzzle(2)
    for i in make_instances(dom, [3], 5, seed=1):
        assert bfs_distance(dom, i.init, 3) is not None


def test_instances_reject_zero_walk():
    with pytest.raises(ValueError):
        make_instances(make_lights_out(2), [0], 1, seed=0)


# file formats


def test_dataset_round_trip(tmp_path):
    ds = sample_transitions(make_lights_out(4), 10000, seed=0)
    path = tmp_path / "d.txt"
    write_dataset(ds, path)
    first = path.read_text().splitlines()
    assert first[0] == "F=16 A=16"
    assert len(first[1].split()) == 3
    assert read_dataset(path).equals(ds)


def test_dataset_round_trip_unlabeled(tmp_path):
    ds = TransitionDataset(np.eye(3, dtype=bool), ~np.eye(3, dtype=bool))
    write_dataset(ds, tmp_path / "u.txt")
    assert read_dataset(tmp_path / "u.txt").equals(ds)


def test_dataset_width_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("F=4 A=2\n0101 1100 1\n01011 11001 0\n")
    with pytest.raises(DatasetFormatError, match="line 3.*width"):
        read_dataset(path)


@pytest.mark.parametrize("body, line", [
    ("F=4 A=2\n0101 1100 x\n", 2),
    ("F=4 A=2\n0101\n", 2),
    ("F=4 A=2\n0101 1100 1\n01a1 1100 1\n", 3),
    ("F=4 A=2\n0101 1100 5\n", 2),
])
def test_dataset_malformed_line(tmp_path, body, line):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(DatasetFormatError, match=f"line {line}"):
        read_dataset(path)


def test_dataset_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("hello\n")
    with pytest.raises(DatasetFormatError, match="line 1"):
        read_dataset(path)


def test_instances_round_trip(tmp_path):
    inst = make_instances(make_lights_out(3), [2, 3], 2, seed=0)
    write_instances(inst, tmp_path / "i.txt")
    back = read_instances(tmp_path / "i.txt")
    assert len(back) == 4
    for a, b in zip(inst, back):
        assert np.array_equal(a.init, b.init) and np.array_equal(a.goal, b.goal)
        assert a.walk_length == b.walk_length
