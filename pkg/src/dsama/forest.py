"""Balanced random forests over binary features.

Trees are stored as flat arrays in preorder. A decision node sends an input
to its ``high`` child when ``x[feature] > threshold`` and to its ``low``
child otherwise; with binary inputs and the training threshold 0.5 this is
simply "bit set" versus "bit clear".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace
from typing import Sequence

import numpy as np

__all__ = [
    "ForestParams",
    "DecisionNode",
    "LeafNode",
    "Tree",
    "RandomForest",
    "train_forest",
    "predict_vote",
    "predict_average",
    "write_forest",
    "read_forest",
    "dump_forest",
    "load_forest",
    "ForestFormatError",
]


class ForestFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    """Training hyperparameters.

    ``features_per_split=None`` means ceil(sqrt(width)). ``replace`` selects
    bootstrap sampling with replacement; the default draws a plain subset.
    """

    T: int = 80
    D: int = 100
    bag_fraction: float = 2 / 3
    features_per_split: int | None = None
    balanced: bool = True
    feature_sampling: str = "per_split"
    replace: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if not 0 < self.bag_fraction <= 1:
            raise ValueError("bag_fraction must lie in (0, 1]")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if self.feature_sampling not in ("per_split", "per_tree"):
            raise ValueError("feature_sampling must be 'per_split' or 'per_tree'")

    def k_features(self, width: int) -> int:
        k = self.features_per_split or math.ceil(math.sqrt(width))
        return max(1, min(k, width))

    def with_(self, **kw) -> "ForestParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class LeafNode:
    p0: float
    p1: float


@dataclass(frozen=True)
class DecisionNode:
    feature: int
    high: "DecisionNode | LeafNode"
    low: "DecisionNode | LeafNode"
    threshold: float = 0.5


class Tree:
    """Array form of a decision tree (preorder: node, high subtree, low subtree)."""

    __slots__ = ("feature", "threshold", "high", "low", "prob", "depth")

    def __init__(self, feature, threshold, high, low, prob):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.int64)
        self.low = np.asarray(low, dtype=np.int64)
        self.prob = np.asarray(prob, dtype=np.float64).reshape(-1, 2)
        n = len(self.feature)
        if n == 0 or not (len(self.threshold) == len(self.high) == len(self.low) == len(self.prob) == n):
            raise ValueError("malformed tree arrays")
        self.depth = self._depth()

    def _depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        # preorder: children always come after their parent
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                for c in (self.high[i], self.low[i]):
                    if not i < c < len(self.feature):
                        raise ValueError(f"node {i} has invalid child {c}")
                    depth[c] = depth[i] + 1
        return int(depth.max())

    def __len__(self):
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    @classmethod
    def from_root(cls, root) -> "Tree":
        feature, threshold, high, low, prob = [], [], [], [], []

        def visit(node):
            i = len(feature)
            if isinstance(node, LeafNode):
                feature.append(-1)
                threshold.append(0.0)
                high.append(-1)
                low.append(-1)
                prob.append((node.p0, node.p1))
                return i
            if not isinstance(node, DecisionNode):
                raise TypeError(f"not a tree node: {node!r}")
            feature.append(node.feature)
            threshold.append(node.threshold)
            high.append(-1)
            low.append(-1)
            prob.append((0.0, 0.0))
            high[i] = visit(node.high)
            low[i] = visit(node.low)
            return i

        visit(root)
        return cls(feature, threshold, high, low, prob)

    def root(self):
        def build(i):
            if self.feature[i] < 0:
                return LeafNode(float(self.prob[i, 0]), float(self.prob[i, 1]))
            return DecisionNode(int(self.feature[i]), build(self.high[i]),
                                build(self.low[i]), float(self.threshold[i]))
        return build(0)

    def leaves(self, X) -> np.ndarray:
        """Index of the leaf reached by every row of ``X``."""
        X = np.asarray(X)
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        for _ in range(self.depth):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r, nd = rows[inner], node[inner]
            go_high = X[r, f[inner]] > self.threshold[nd]
            node[inner] = np.where(go_high, self.high[nd], self.low[nd])
        return node

    def votes(self, X) -> np.ndarray:
        p = self.prob[self.leaves(X)]
        return p[:, 1] > p[:, 0]

    def proba(self, X) -> np.ndarray:
        return self.prob[self.leaves(X), 1]

    def max_feature(self) -> int:
        return int(self.feature.max())


@dataclass(eq=False)
class RandomForest:
    trees: list
    params: ForestParams
    width: int

    @property
    def T(self) -> int:
        return len(self.trees)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.width:
            raise ValueError(f"input width {X.shape[1]} does not match forest width {self.width}")
        return X

    def votes(self, X) -> np.ndarray:
        """(N, T) matrix of per-tree class-1 votes."""
        X = self._check(X)
        return np.stack([t.votes(X) for t in self.trees], axis=1)

    def vote_batch(self, X) -> np.ndarray:
        return self.votes(X).sum(axis=1) > self.T // 2

    def average_batch(self, X) -> np.ndarray:
        X = self._check(X)
        return np.mean([t.proba(X) for t in self.trees], axis=0)

    def same_as(self, other: "RandomForest") -> bool:
        return dump_forest(self) == dump_forest(other)


def predict_vote(forest: RandomForest, x) -> int:
    """1 iff strictly more than floor(T/2) trees vote for class 1."""
    return int(forest.vote_batch(np.asarray(x).reshape(1, -1))[0])


def predict_average(forest: RandomForest, x) -> float:
    """Mean class-1 leaf probability over the trees."""
    return float(forest.average_batch(np.asarray(x).reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# training


def _xlogx_table(n: int) -> np.ndarray:
    c = np.arange(n + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = c * np.log2(c)
    t[0] = 0.0
    return t


def _bootstrap(y: np.ndarray, params: ForestParams, rng) -> np.ndarray:
    n = len(y)
    if params.balanced:
        cls = [np.flatnonzero(~y), np.flatnonzero(y)]
        m = math.ceil(params.bag_fraction * min(len(c) for c in cls))
        parts = [rng.choice(c, size=m, replace=params.replace) for c in cls]
        return np.concatenate(parts)
    m = max(1, math.ceil(params.bag_fraction * n))
    return rng.choice(n, size=m, replace=params.replace)


class _Builder:
    def __init__(self, X, y, params: ForestParams, rng):
        self.X = X
        self.y = y
        self.D = params.D
        self.k = params.k_features(X.shape[1])
        self.per_tree = params.feature_sampling == "per_tree"
        self.rng = rng
        self.width = X.shape[1]
        self.tree_features = (np.sort(rng.choice(self.width, self.k, replace=False))
                              if self.per_tree else None)
        self.xlogx = _xlogx_table(len(y))
        self.feature, self.threshold, self.high, self.low, self.prob = [], [], [], [], []

    def _new(self, f, p0, p1):
        self.feature.append(f)
        self.threshold.append(0.5 if f >= 0 else 0.0)
        self.high.append(-1)
        self.low.append(-1)
        self.prob.append((p0, p1))
        return len(self.feature) - 1

    def _best_split(self, Xn, yn, cand):
        n = len(yn)
        sub = Xn[:, cand]
        hi = sub.sum(axis=0)
        valid = (hi > 0) & (hi < n)
        if not valid.any():
            return None
        cand, sub, hi = cand[valid], sub[:, valid], hi[valid]
        hi_pos = sub[yn].sum(axis=0)
        lo = n - hi
        lo_pos = len(yn[yn]) - hi_pos
        t = self.xlogx
        # n * (weighted child entropy); minimal value == maximal information gain
        child = (t[hi] - t[hi_pos] - t[hi - hi_pos]) + (t[lo] - t[lo_pos] - t[lo - lo_pos])
        # rounding makes float ties exact so the lowest feature index wins
        score = np.round(child, 9)
        best = np.flatnonzero(score == score.min())
        return int(cand[best].min())

    def grow(self, idx, depth):
        yn = self.y[idx]
        n = len(idx)
        n1 = int(yn.sum())
        if n1 == 0 or n1 == n or depth >= self.D:
            return self._new(-1, (n - n1) / n, n1 / n)
        Xn = self.X[idx]
        if self.per_tree:
            cand = self.tree_features
        elif self.k >= self.width:
            cand = np.arange(self.width)
        else:
            cand = np.sort(np.argpartition(self.rng.random(self.width), self.k)[: self.k])
        f = self._best_split(Xn, yn, cand)
        if f is None and len(cand) < self.width:
            rest = np.setdiff1d(np.arange(self.width), cand)
            f = self._best_split(Xn, yn, rest)
        if f is None:
            return self._new(-1, (n - n1) / n, n1 / n)
        i = self._new(f, 0.0, 0.0)
        col = Xn[:, f]
        self.high[i] = self.grow(idx[col], depth + 1)
        self.low[i] = self.grow(idx[~col], depth + 1)
        return i

    def tree(self, idx) -> Tree:
        self.grow(idx, 0)
        return Tree(self.feature, self.threshold, self.high, self.low, self.prob)


def _constant_tree(label: bool) -> Tree:
    return Tree([-1], [0.0], [-1], [-1], [(0.0, 1.0) if label else (1.0, 0.0)])


def train_forest(features, labels, params: ForestParams, key: Sequence[int] = ()) -> RandomForest:
    """Train ``params.T`` trees, each on its own bootstrap.

    Tree ``t`` draws from the random stream seeded by ``(params.seed, *key, t)``
    so results do not depend on training order. A single-class training set
    yields a one-tree constant forest.
    """
    X = np.asarray(features, dtype=bool)
    y = np.asarray(labels).astype(bool).reshape(-1)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a non-empty (N, F) matrix")
    if len(y) != X.shape[0]:
        raise ValueError("one label per example required")
    width = X.shape[1]
    n1 = int(y.sum())
    if n1 == 0 or n1 == len(y):
        return RandomForest([_constant_tree(n1 > 0)], params, width)
    trees = []
    for t in range(params.T):
        rng = np.random.default_rng([params.seed, *key, t])
        idx = _bootstrap(y, params, rng)
        trees.append(_Builder(X, y, params, rng).tree(idx))
    return RandomForest(trees, params, width)


# ---------------------------------------------------------------------------
# serialization
#
#   forest  width=<F>  T=..  D=..  bag_fraction=..  ... (tab separated key=value)
#   tree    <node count>
#   N       <feature>  <threshold>      decision node, then its high and low subtrees
#   L       <p0>       <p1>             leaf
#
# Floats are written with repr() so they round-trip exactly.


def dump_forest(forest: RandomForest) -> str:
    head = {"width": forest.width, **asdict(forest.params)}
    lines = ["forest\t" + "\t".join(f"{k}={v}" for k, v in head.items())]
    for tree in forest.trees:
        lines.append(f"tree\t{len(tree)}")
        for i in range(len(tree)):
            if tree.feature[i] < 0:
                lines.append(f"L\t{float(tree.prob[i, 0])!r}\t{float(tree.prob[i, 1])!r}")
            else:
                lines.append(f"N\t{int(tree.feature[i])}\t{float(tree.threshold[i])!r}")
    return "\n".join(lines) + "\n"


def _parse_value(key: str, text: str):
    if text == "None":
        return None
    if text in ("True", "False"):
        return text == "True"
    if key in ("bag_fraction",):
        return float(text)
    if key in ("feature_sampling",):
        return text
    return int(text)


def load_forest(text: str) -> RandomForest:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("forest\t"):
        raise ForestFormatError("line 1: expected forest header")
    try:
        head = dict(part.split("=", 1) for part in lines[0].split("\t")[1:])
        vals = {k: _parse_value(k, v) for k, v in head.items()}
        width = vals.pop("width")
        params = ForestParams(**vals)
    except (ValueError, TypeError, KeyError) as exc:
        raise ForestFormatError(f"line 1: bad forest header: {exc}") from exc
    trees = []
    pos = 1
    while pos < len(lines):
        parts = lines[pos].split("\t")
        if parts[0] != "tree" or len(parts) != 2:
            raise ForestFormatError(f"line {pos + 1}: expected tree header")
        count = int(parts[1])
        body = lines[pos + 1: pos + 1 + count]
        if len(body) != count:
            raise ForestFormatError(f"line {pos + 1}: truncated tree")
        trees.append(_parse_tree(body, pos + 2))
        pos += 1 + count
    if not trees:
        raise ForestFormatError("forest without trees")
    return RandomForest(trees, params, width)


def _parse_tree(body, first_lineno) -> Tree:
    feature, threshold, high, low, prob = [], [], [], [], []
    # rebuild child links from preorder with an explicit stack
    pending: list[list] = []  # [node index, children seen]
    for j, line in enumerate(body):
        parts = line.split("\t")
        i = len(feature)
        if pending:
            parent = pending[-1]
            if parent[1] == 0:
                high[parent[0]] = i
            else:
                low[parent[0]] = i
            parent[1] += 1
            if parent[1] == 2:
                pending.pop()
        elif i > 0:
            raise ForestFormatError(f"line {first_lineno + j}: node outside tree")
        try:
            if parts[0] == "N" and len(parts) == 3:
                feature.append(int(parts[1]))
                threshold.append(float(parts[2]))
                prob.append((0.0, 0.0))
                high.append(-1)
                low.append(-1)
                pending.append([i, 0])
            elif parts[0] == "L" and len(parts) == 3:
                feature.append(-1)
                threshold.append(0.0)
                prob.append((float(parts[1]), float(parts[2])))
                high.append(-1)
                low.append(-1)
            else:
                raise ValueError(line)
        except ValueError as exc:
            raise ForestFormatError(f"line {first_lineno + j}: bad node {line!r}") from exc
    if pending:
        raise ForestFormatError(f"line {first_lineno}: tree ends with missing children")
    return Tree(feature, threshold, high, low, prob)


def write_forest(forest: RandomForest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_forest(forest))


def read_forest(path) -> RandomForest:
    with open(path, encoding="utf-8") as fh:
        return load_forest(fh.read())
