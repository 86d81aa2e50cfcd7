"""Binary transition data: ground-truth domains, sampling and file I/O.

States are numpy boolean vectors. A dataset stores the before/after states as
two (N, F) boolean matrices plus an optional label column.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TransitionDataset",
    "GroundTruthDomain",
    "LightsOut",
    "SlidingPuzzle",
    "PlanningInstance",
    "make_lights_out",
    "make_sliding_puzzle",
    "make_domain",
    "sample_transitions",
    "split",
    "make_instances",
    "read_dataset",
    "write_dataset",
    "read_instances",
    "write_instances",
    "DatasetFormatError",
    "bits_to_str",
    "str_to_bits",
]


class DatasetFormatError(ValueError):
    pass


def bits_to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits, dtype=bool))


def str_to_bits(text: str) -> np.ndarray:
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a bit string: {text!r}")
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8) == ord("1")


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    before: np.ndarray
    after: np.ndarray
    labels: np.ndarray | None = None
    label_count: int | None = None

    def __post_init__(self):
        before = np.ascontiguousarray(self.before, dtype=bool)
        after = np.ascontiguousarray(self.after, dtype=bool)
        if before.ndim != 2 or before.shape != after.shape:
            raise ValueError(f"before/after shape mismatch: {before.shape} vs {after.shape}")
        object.__setattr__(self, "before", before)
        object.__setattr__(self, "after", after)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (len(before),):
                raise ValueError("one label per transition required")
            if self.label_count is not None and len(labels) and (
                    labels.min() < 0 or labels.max() >= self.label_count):
                raise ValueError(f"labels must lie in [0, {self.label_count})")
            object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return self.before.shape[1]

    def __len__(self):
        return self.before.shape[0]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def subset(self, idx) -> "TransitionDataset":
        idx = np.asarray(idx)
        return TransitionDataset(
            self.before[idx], self.after[idx],
            None if self.labels is None else self.labels[idx], self.label_count)

    def with_labels(self, labels, label_count) -> "TransitionDataset":
        return TransitionDataset(self.before, self.after, labels, label_count)

    def equals(self, other: "TransitionDataset") -> bool:
        if self.label_count != other.label_count or (self.labels is None) != (other.labels is None):
            return False
        same = (np.array_equal(self.before, other.before)
                and np.array_equal(self.after, other.after))
        if self.labels is not None:
            same = same and np.array_equal(self.labels, other.labels)
        return same


@dataclass(frozen=True)
class PlanningInstance:
    init: np.ndarray
    goal: np.ndarray
    walk_length: int


class GroundTruthDomain:
    """Simulator and validator for a deterministic domain."""

    name: str
    width: int
    action_count: int
    goal_state: np.ndarray

    def applicable(self, state, action: int) -> bool:
        raise NotImplementedError

    def apply(self, state, action: int) -> np.ndarray:
        raise NotImplementedError

    def applicable_actions(self, state) -> list[int]:
        return [a for a in range(self.action_count) if self.applicable(state, a)]

    def action_name(self, action: int) -> str:
        return f"a{action}"

    def successors(self, state) -> list[tuple[int, np.ndarray]]:
        return [(a, self.apply(state, a)) for a in self.applicable_actions(state)]

    def matching_actions(self, before, after) -> list[int]:
        """Actions that are applicable in ``before`` and lead to ``after``."""
        after = np.asarray(after, dtype=bool)
        return [a for a, s in self.successors(before) if np.array_equal(s, after)]

    def is_valid(self, before, after) -> bool:
        return bool(self.matching_actions(before, after))


class LightsOut(GroundTruthDomain):
    def __init__(self, n: int):
        if n < 2:
            raise ValueError("LightsOut needs n >= 2")
        self.n = n
        self.name = f"lightsout{n}"
        self.width = n * n
        self.action_count = n * n
        masks = np.zeros((n * n, n * n), dtype=bool)
        for r, c in itertools.product(range(n), range(n)):
            k = r * n + c
            for dr, dc in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < n and 0 <= cc < n:
                    masks[k, rr * n + cc] = True
        masks.flags.writeable = False
        self.masks = masks
        self.goal_state = np.zeros(n * n, dtype=bool)

    def applicable(self, state, action):
        return 0 <= action < self.action_count

    def applicable_actions(self, state):
        return list(range(self.action_count))

    def apply(self, state, action):
        if not self.applicable(state, action):
            raise ValueError(f"action {action} not applicable")
        return np.asarray(state, dtype=bool) ^ self.masks[action]

    def action_name(self, action):
        r, c = divmod(action, self.n)
        return f"press-{r}-{c}"


_MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


class SlidingPuzzle(GroundTruthDomain):
    """side x side sliding puzzle, tile 0 is the blank.

    Bit ``t * side**2 + p`` is set iff tile ``t`` sits at position ``p``.
    Action ``(p, d)`` moves the blank from position ``p`` in direction ``d``.
    """

    def __init__(self, side: int):
        if side < 2:
            raise ValueError("sliding puzzle needs side >= 2")
        self.side = side
        self.cells = side * side
        self.name = f"puzzle{side}"
        self.width = self.cells ** 2
        moves = []
        for p in range(self.cells):
            r, c = divmod(p, side)
            for d, (dr, dc) in _MOVES.items():
                rr, cc = r + dr, c + dc
                if 0 <= rr < side and 0 <= cc < side:
                    moves.append((p, rr * side + cc, d))
        self.moves = moves
        self.action_count = len(moves)
        self.goal_state = self.encode(range(self.cells))

    def encode(self, tile_at) -> np.ndarray:
        """State from the tile sitting at each position."""
        z = np.zeros(self.width, dtype=bool)
        for p, t in enumerate(tile_at):
            z[t * self.cells + p] = True
        return z

    def decode(self, state) -> list[int]:
        grid = np.asarray(state, dtype=bool).reshape(self.cells, self.cells)
        tile_at = [-1] * self.cells
        for t, p in zip(*np.nonzero(grid)):
            tile_at[p] = int(t)
        return tile_at

    def blank(self, state) -> int:
        row = np.asarray(state, dtype=bool)[: self.cells]
        return int(np.argmax(row))

    def applicable(self, state, action):
        return 0 <= action < self.action_count and self.blank(state) == self.moves[action][0]

    def applicable_actions(self, state):
        b = self.blank(state)
        return [a for a, (p, _, _) in enumerate(self.moves) if p == b]

    def apply(self, state, action):
        if not self.applicable(state, action):
            raise ValueError(f"action {action} not applicable")
        p, q, _ = self.moves[action]
        z = np.array(state, dtype=bool)
        n = self.cells
        tile = int(np.argmax(z.reshape(n, n)[:, q]))
        z[q] = False
        z[p] = True
        z[tile * n + p] = True
        z[tile * n + q] = False
        z[0 * n + q] = True
        z[0 * n + p] = False
        return z

    def action_name(self, action):
        p, _, d = self.moves[action]
        return f"blank-{p}-{d}"


def make_lights_out(n: int) -> LightsOut:
    return LightsOut(n)


def make_sliding_puzzle(side: int) -> SlidingPuzzle:
    return SlidingPuzzle(side)


def make_domain(name: str, size: int) -> GroundTruthDomain:
    if name in ("lightsout", "lights_out"):
        return LightsOut(size)
    if name in ("puzzle", "sliding", "sliding_puzzle"):
        return SlidingPuzzle(size)
    raise ValueError(f"unknown domain {name!r}")


# ---------------------------------------------------------------------------
# sampling


def sample_transitions(domain: GroundTruthDomain, count: int, seed, noise: float = 0.0,
                       burn_in: int | None = None, segment: int | None = None
                       ) -> TransitionDataset:
    """Labeled transitions recorded along random walks from the goal state.

    Each walk runs ``burn_in`` unrecorded steps from ``goal_state`` and then
    records ``segment`` consecutive steps before restarting. Every step picks
    an applicable action uniformly. ``noise`` flips each recorded bit
    independently with that probability; the walk itself stays noiseless.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    F = domain.width
    burn_in = 4 * F if burn_in is None else burn_in
    segment = F if segment is None else segment
    before = np.zeros((count, F), dtype=bool)
    after = np.zeros((count, F), dtype=bool)
    labels = np.zeros(count, dtype=np.int64)
    i = 0
    while i < count:
        s = domain.goal_state.copy()
        for _ in range(burn_in):
            acts = domain.applicable_actions(s)
            s = domain.apply(s, acts[rng.integers(len(acts))])
        for _ in range(segment):
            if i >= count:
                break
            acts = domain.applicable_actions(s)
            a = acts[rng.integers(len(acts))]
            t = domain.apply(s, a)
            before[i], after[i], labels[i] = s, t, a
            s = t
            i += 1
    if noise > 0:
        before ^= rng.random(before.shape) < noise
        after ^= rng.random(after.shape) < noise
    return TransitionDataset(before, after, labels, domain.action_count)


def split(ds: TransitionDataset, ratio: float, seed) -> tuple[TransitionDataset, TransitionDataset]:
    """Shuffled partition into floor(ratio * N) training and remaining test rows."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(len(ds))
    k = int(np.floor(ratio * len(ds)))
    return ds.subset(perm[:k]), ds.subset(perm[k:])


def make_instances(domain: GroundTruthDomain, walk_lengths, per_length: int, seed
                   ) -> list[PlanningInstance]:
    """Initial states from random walks backwards from the goal.

    The walk avoids revisiting its own states whenever an unvisited successor
    exists, so a length-L walk usually ends L steps from the goal.
    """
    rng = np.random.default_rng(seed)
    out = []
    for length in walk_lengths:
        if length < 1:
            raise ValueError("walk lengths must be >= 1")
        for _ in range(per_length):
            s = domain.goal_state.copy()
            visited = {s.tobytes()}
            for _ in range(length):
                succ = domain.successors(s)
                fresh = [t for _, t in succ if t.tobytes() not in visited]
                pool = fresh or [t for _, t in succ]
                s = pool[rng.integers(len(pool))]
                visited.add(s.tobytes())
            out.append(PlanningInstance(s, domain.goal_state.copy(), int(length)))
    return out


# ---------------------------------------------------------------------------
# file formats


def write_dataset(ds: TransitionDataset, path) -> None:
    """Header ``F=<int> A=<int|none>``, then ``before after [label]`` per line."""
    a = "none" if ds.label_count is None else str(ds.label_count)
    lines = [f"F={ds.width} A={a}"]
    for i in range(len(ds)):
        row = bits_to_str(ds.before[i]) + " " + bits_to_str(ds.after[i])
        if ds.labels is not None:
            row += f" {ds.labels[i]}"
        lines.append(row)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line: str) -> tuple[int, int | None]:
    fields = dict(part.split("=", 1) for part in line.split() if "=" in part)
    try:
        width = int(fields["F"])
        a = fields.get("A", "none")
        label_count = None if a == "none" else int(a)
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"line 1: bad header {line!r}") from exc
    if width < 1:
        raise DatasetFormatError("line 1: width must be positive")
    return width, label_count


def read_dataset(path) -> TransitionDataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{os.fspath(path)}: empty file")
    width, label_count = _parse_header(lines[0])
    before, after, labels = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise DatasetFormatError(f"line {lineno}: expected 2 or 3 fields, got {len(parts)}")
        try:
            b, a = str_to_bits(parts[0]), str_to_bits(parts[1])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from exc
        if len(b) != width or len(a) != width:
            raise DatasetFormatError(
                f"line {lineno}: width mismatch, expected {width} got {len(b)}/{len(a)}")
        if len(parts) == 3:
            try:
                labels.append(int(parts[2]))
            except ValueError as exc:
                raise DatasetFormatError(f"line {lineno}: bad label {parts[2]!r}") from exc
        elif labels:
            raise DatasetFormatError(f"line {lineno}: missing label")
        before.append(b)
        after.append(a)
    if labels and len(labels) != len(before):
        raise DatasetFormatError("labels present on some lines only")
    n = len(before)
    B = np.array(before, dtype=bool).reshape(n, width)
    A = np.array(after, dtype=bool).reshape(n, width)
    lab = np.array(labels, dtype=np.int64) if labels else None
    if lab is not None and label_count is not None and n and lab.max() >= label_count:
        bad = int(np.argmax(lab >= label_count)) + 2
        raise DatasetFormatError(f"line {bad}: label out of range for A={label_count}")
    return TransitionDataset(B, A, lab, label_count)


def write_instances(instances, path) -> None:
    """One instance per line: ``init goal walk_length``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(f"{bits_to_str(inst.init)} {bits_to_str(inst.goal)} {inst.walk_length}\n")


def read_instances(path) -> list[PlanningInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise DatasetFormatError(f"line {lineno}: expected 3 fields")
            out.append(PlanningInstance(str_to_bits(parts[0]), str_to_bits(parts[1]), int(parts[2])))
    return out
