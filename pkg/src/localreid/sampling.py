"""Neighborhood subset sampling: the top-p% closest points to a random anchor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .knn import Metric, _check_metric, pairwise_distances
from .validation import check_feature_matrix


@dataclass(frozen=True)
class SampleSet:
    """An anchor point and its neighborhood, ordered by ascending distance.

    The anchor is always a member (its own nearest neighbor at distance 0)
    and comes first.
    """

    anchor: int
    members: NDArray[np.int64]
    p: float


def subset_size(n: int, p: float) -> int:
    """max(1, round-half-up of p% of n)."""
    return max(1, int(math.floor(p * n / 100.0 + 0.5)))


def neighborhood_sample(F, p: float, rng_seed: int, metric: Metric = "cosine") -> SampleSet:
    """Pick a uniform random anchor and keep its top-p% nearest neighbors.

    Deterministic given the seed. Ties at the inclusion boundary are broken
    toward smaller indices.
    """
    _check_metric(metric)
    F = check_feature_matrix(F)
    n = F.shape[0]
    if not 0.0 < p <= 100.0:
        raise ValueError(f"p must lie in (0, 100], got {p}")
    rng = np.random.default_rng(rng_seed)
    anchor = int(rng.integers(n))
    size = subset_size(n, p)

    d = pairwise_distances(F[anchor : anchor + 1], F, metric)[0]
    others = np.delete(np.arange(n), anchor)
    order = np.lexsort((others, d[others]))
    members = np.concatenate([[anchor], others[order][: size - 1]]).astype(np.int64)
    return SampleSet(anchor=anchor, members=members, p=float(p))


def resample_epochs(total_epochs: int, cadence: int = 3) -> NDArray[np.int64]:
    """Epochs at which the training subset is redrawn: 0, cadence, 2*cadence, ..."""
    if total_epochs < 1:
        raise ValueError("total_epochs must be >= 1")
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    return np.arange(0, total_epochs, cadence, dtype=np.int64)
