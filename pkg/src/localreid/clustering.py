"""DBSCAN over sparse refined distances, plus partition bookkeeping.

The neighborhood of i is {j : min over the stored directions of the refined
distance <= eps}; a pair stored in neither direction sits at the implicit
maximal distance 1 and can never be a neighbor (eps < 1). The min keeps the
relation symmetric, which DBSCAN needs to be well defined. Expansion scans
points in ascending index order with breadth-first growth, so labelings are
deterministic and border points join the first core point that reaches them.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from sklearn.metrics import adjusted_rand_score

from .rerank import SparseRefinedDistances
from .validation import check_labels_1d

NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float
    min_samples: int = 4

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-point labels: -1 for noise, 0..num_clusters-1 otherwise."""

    labels: NDArray[np.int64]
    num_clusters: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @classmethod
    def from_labels(cls, labels) -> "ClusterAssignment":
        labels = check_labels_1d(labels)
        distinct = np.unique(labels[labels != NOISE])
        if distinct.size and (distinct != np.arange(distinct.size)).any():
            raise ValueError("cluster ids must be densely numbered from 0")
        if (labels < NOISE).any():
            raise ValueError("labels below -1 are invalid")
        return cls(labels, int(distinct.size))


def _symmetric_neighbors(R: SparseRefinedDistances, epsilon: float) -> list[NDArray[np.int64]]:
    """Adjacency lists of the min-symmetrized eps-ball, sorted ascending."""
    n, k = R.n, R.k
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = R.indices.ravel().astype(np.int64)
    vals = R.values.ravel().astype(np.float64)
    # both directions; duplicates resolved by taking the minimum value
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    v = np.concatenate([vals, vals])
    keep = (v <= epsilon) & (r != c)
    r, c, v = r[keep], c[keep], v[keep]
    order = np.lexsort((c, r))
    r, c = r[order], c[order]
    if r.size:
        first = np.ones(r.size, dtype=bool)
        first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        r, c = r[first], c[first]
    starts = np.searchsorted(r, np.arange(n + 1))
    return [c[starts[i] : starts[i + 1]] for i in range(n)]


def dbscan_sparse(R: SparseRefinedDistances, params: DbscanParams) -> ClusterAssignment:
    """Density clustering on a sparse refined-distance matrix.

    A point counts itself toward min_samples. Unstored pairs are implicitly
    at distance 1, i.e. never neighbors.
    """
    R.validate()
    adj = _symmetric_neighbors(R, params.epsilon)
    n = R.n
    UNSEEN = -2
    labels = np.full(n, UNSEEN, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        if adj[i].size + 1 < params.min_samples:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque(adj[i].tolist())
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster  # border point reached by this cluster
            if labels[j] != UNSEEN:
                continue
            labels[j] = cluster
            if adj[j].size + 1 >= params.min_samples:
                queue.extend(adj[j].tolist())
        cluster += 1
    return ClusterAssignment(labels, cluster)


@dataclass(frozen=True)
class ClusterStats:
    num_clusters: int
    noise_count: int
    size_histogram: tuple[int, ...]


def cluster_stats(a: ClusterAssignment) -> ClusterStats:
    """Cluster count, noise count, and per-cluster sizes (by cluster id)."""
    labels = a.labels
    noise = int((labels == NOISE).sum())
    sizes = np.bincount(labels[labels != NOISE], minlength=a.num_clusters)
    return ClusterStats(a.num_clusters, noise, tuple(int(s) for s in sizes))


def _noise_as_singletons(labels: NDArray[np.int64]) -> NDArray[np.int64]:
    out = labels.copy()
    noise = out == NOISE
    if noise.any():
        base = out.max() + 1 if (~noise).any() else 0
        out[noise] = base + np.arange(noise.sum())
    return out


def adjusted_rand_index(a, truth) -> float:
    """Chance-corrected partition agreement; noise points count as singletons."""
    labels = a.labels if isinstance(a, ClusterAssignment) else check_labels_1d(a)
    truth = check_labels_1d(truth, n=labels.shape[0], name="truth")
    with warnings.catch_warnings():
        # singleton-heavy partitions trip sklearn's regression-target heuristic
        warnings.simplefilter("ignore", UserWarning)
        score = adjusted_rand_score(_noise_as_singletons(truth), _noise_as_singletons(labels))
    return float(score)


def save_assignment(a: ClusterAssignment, path) -> None:
    """CSV dump: index,label rows."""
    with open(path, "w", newline="") as f:
        f.write("index,label\n")
        for i, lab in enumerate(a.labels):
            f.write(f"{i},{int(lab)}\n")
