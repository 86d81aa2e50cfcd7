"""Action labels from effect signatures.

A deterministic stand-in for a learned transition clustering: transitions
whose before/after states differ in the same way share a label.

Two signature kinds are supported:

``"flip"`` (default)
    the set of bits that changed, ``before ^ after``. A label's effect is a
    toggle of those bits. Toggle domains such as LightsOut get exactly one
    label per action.
``"setclear"``
    the pair (bits turned on, bits turned off). A label's effect sets the
    first mask and clears the second.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dataset import TransitionDataset

__all__ = [
    "Labeling",
    "TunedLabeling",
    "signatures",
    "label_by_signature",
    "label_capacity_bounded",
    "tune_label_count",
    "perturb_labels",
]

KINDS = ("flip", "setclear")


@dataclass(frozen=True, eq=False)
class Labeling:
    """Per-transition label ids plus one effect centroid per label.

    ``centroids`` has shape (A, 2, F): the bits-set and bits-cleared masks.
    For flip signatures both rows hold the toggle mask.
    """

    assignment: np.ndarray
    centroids: np.ndarray
    kind: str = "flip"

    @property
    def A(self) -> int:
        return self.centroids.shape[0]

    def successor(self, label: int, before) -> np.ndarray:
        set_mask, clear_mask = self.centroids[label]
        z = np.asarray(before, dtype=bool)
        if self.kind == "flip":
            return z ^ set_mask
        return (z | set_mask) & ~clear_mask

    def successors(self, labels, before) -> np.ndarray:
        """Vectorized :meth:`successor` over rows."""
        c = self.centroids[np.asarray(labels)]
        z = np.asarray(before, dtype=bool)
        if self.kind == "flip":
            return z ^ c[:, 0]
        return (z | c[:, 0]) & ~c[:, 1]

    def assign(self, ds: TransitionDataset) -> np.ndarray:
        """Label new transitions: exact centroid match, else Hamming-nearest."""
        sig = signatures(ds, self.kind)
        cent = self._centroid_keys()
        dist = (sig[:, None, :] != cent[None, :, :]).sum(axis=2)
        return np.argmin(dist, axis=1).astype(np.int64)

    def _centroid_keys(self) -> np.ndarray:
        if self.kind == "flip":
            return self.centroids[:, 0]
        return self.centroids.reshape(self.A, -1)

    def apply_to(self, ds: TransitionDataset) -> TransitionDataset:
        return ds.with_labels(self.assignment, self.A)


def signatures(ds: TransitionDataset, kind: str = "flip") -> np.ndarray:
    if kind == "flip":
        return ds.before ^ ds.after
    if kind == "setclear":
        return np.concatenate([ds.after & ~ds.before, ds.before & ~ds.after], axis=1)
    raise ValueError(f"unknown signature kind {kind!r}, expected one of {KINDS}")


def _centroids_from_keys(keys: np.ndarray, kind: str, F: int) -> np.ndarray:
    if kind == "flip":
        return np.stack([keys, keys], axis=1)
    return keys.reshape(len(keys), 2, F)


def _distinct(sig: np.ndarray):
    # lexicographic order over the 0/1 strings, bit 0 first
    uniq, inverse, counts = np.unique(sig.astype(np.uint8), axis=0,
                                      return_inverse=True, return_counts=True)
    return uniq.astype(bool), inverse.reshape(-1), counts


def label_by_signature(ds: TransitionDataset, kind: str = "flip") -> Labeling:
    """One label per distinct signature, in lexicographic signature order."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    uniq, inverse, _ = _distinct(signatures(ds, kind))
    return Labeling(inverse.astype(np.int64), _centroids_from_keys(uniq, kind, ds.width), kind)


def label_capacity_bounded(ds: TransitionDataset, A_max: int, kind: str = "flip") -> Labeling:
    """At most ``A_max`` labels.

    The ``A_max`` most frequent signatures keep their own label, the rest join
    the Hamming-nearest kept signature (ties go to the lowest label id).
    If everything fits, this equals :func:`label_by_signature`.
    """
    if A_max < 1:
        raise ValueError("A_max must be >= 1")
    if len(ds) == 0:
        raise ValueError("empty dataset")
    sig = signatures(ds, kind)
    uniq, inverse, counts = _distinct(sig)
    if len(uniq) <= A_max:
        return Labeling(inverse.astype(np.int64), _centroids_from_keys(uniq, kind, ds.width), kind)
    keep = A_max
    # most frequent first; equal counts keep lexicographic order
    order = np.argsort(-counts, kind="stable")[:keep]
    order = np.sort(order)
    kept = uniq[order]
    dist = (uniq[:, None, :] != kept[None, :, :]).sum(axis=2)
    target = np.argmin(dist, axis=1)
    target[order] = np.arange(len(order))
    assignment = target[inverse].astype(np.int64)
    # centroid of a label: per-bit majority over its member signatures
    cent = np.zeros((len(order), sig.shape[1]), dtype=bool)
    for lab in range(len(order)):
        members = sig[assignment == lab]
        cent[lab] = members.mean(axis=0) > 0.5
    return Labeling(assignment, _centroids_from_keys(cent, kind, ds.width), kind)


class TunedLabeling(NamedTuple):
    A: int
    labeling: Labeling
    error: float
    converged: bool


def reconstruction_error(ds: TransitionDataset, labeling: Labeling) -> float:
    """Mean absolute bit error of the label-centroid successor prediction."""
    pred = labeling.successors(labeling.assignment, ds.before)
    return float(np.mean(pred != ds.after))


def tune_label_count(ds: TransitionDataset, kind: str = "flip", start: int = 8,
                     stop: int = 128, step: int = 8, threshold: float = 0.01) -> TunedLabeling:
    """Grow the label budget until the reconstruction error drops below threshold."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    best = None
    for A in range(start, stop + 1, step):
        labeling = label_capacity_bounded(ds, A, kind)
        err = reconstruction_error(ds, labeling)
        best = TunedLabeling(A, labeling, err, err < threshold)
        if err < threshold:
            return best
    warnings.warn(f"label tuning did not reach error < {threshold} by A={stop} "
                  f"(final error {best.error:.4f})", RuntimeWarning, stacklevel=2)
    return best


def perturb_labels(labeling: Labeling, fraction: float, seed) -> Labeling:
    """Reassign a random ``fraction`` of transitions to uniformly random labels."""
    rng = np.random.default_rng(seed)
    assignment = labeling.assignment.copy()
    hit = rng.random(len(assignment)) < fraction
    assignment[hit] = rng.integers(labeling.A, size=int(hit.sum()))
    return Labeling(assignment, labeling.centroids, labeling.kind)
