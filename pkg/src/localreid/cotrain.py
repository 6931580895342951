"""Pseudo-label exchange between co-trained views.

A uniformly random derangement decides which view's labels supervise which
other view, so no view ever trains on the labels it generated itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment


@dataclass(frozen=True)
class LabelBundle:
    """Cluster assignments from M >= 2 views over the same points."""

    assignments: tuple[ClusterAssignment, ...]

    def __post_init__(self) -> None:
        if len(self.assignments) < 2:
            raise ValueError("need at least two assignments to permute")
        n = len(self.assignments[0])
        if any(len(a) != n for a in self.assignments):
            raise ValueError("assignments must cover the same points")

    def __len__(self) -> int:
        return len(self.assignments)


def random_derangement(m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of range(m) without fixed points.

    Rejection sampling from uniform permutations (expected < e retries) is
    exactly uniform over derangements.
    """
    if m < 2:
        raise ValueError("derangements need m >= 2")
    while True:
        perm = rng.permutation(m)
        if not (perm == np.arange(m)).any():
            return perm


def permute_labels(bundle: LabelBundle, rng_seed: int) -> LabelBundle:
    """Reassign label sets among views so position m receives another view's labels."""
    rng = np.random.default_rng(rng_seed)
    perm = random_derangement(len(bundle), rng)
    return LabelBundle(tuple(bundle.assignments[int(p)] for p in perm))
