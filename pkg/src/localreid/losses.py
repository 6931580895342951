"""Closed-form loss values and analytic gradients, plus batch construction.

These operate on unit-norm feature vectors and exist to evaluate and verify
the training objective numerically; there is no network here, so gradients
are taken with respect to the batch vectors only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .clustering import NOISE, ClusterAssignment
from .validation import check_labels_1d, check_unit_rows

DEFAULT_TAU = 0.04
DEFAULT_LAMBDA_HARD = 0.5
DEFAULT_BETA = 0.999
DEFAULT_LAMBDA_BT = 5e-3
DEFAULT_BATCH_CLUSTERS = 16
DEFAULT_BATCH_PER_CLUSTER = 12
DEFAULT_BATCH_REPEATS = 5


@dataclass(frozen=True)
class LossHyper:
    """Temperature, hard-loss weight, and self-ensembling inertia."""

    tau: float = DEFAULT_TAU
    lambda_hard: float = DEFAULT_LAMBDA_HARD
    beta: float = DEFAULT_BETA

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.lambda_hard < 0:
            raise ValueError("lambda_hard must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class ProxySet:
    """One unit-norm representative vector per cluster."""

    proxies: NDArray[np.float64]
    cluster_ids: NDArray[np.int64]

    def __post_init__(self) -> None:
        check_unit_rows(self.proxies, name="proxies")
        ids = check_labels_1d(self.cluster_ids, n=self.proxies.shape[0], name="cluster_ids")
        if np.unique(ids).size != ids.size:
            raise ValueError("cluster_ids must be distinct")


@dataclass(frozen=True)
class Batch:
    """Unit-norm vectors with their cluster labels."""

    vectors: NDArray[np.float64]
    labels: NDArray[np.int64]

    def __post_init__(self) -> None:
        check_unit_rows(self.vectors, name="batch vectors")
        labels = check_labels_1d(self.labels, n=self.vectors.shape[0], name="batch labels")
        if (labels < 0).any():
            raise ValueError("batch labels must be non-negative cluster ids")


def _proxy_columns(batch: Batch, proxies: ProxySet) -> NDArray[np.int64]:
    lookup = {int(c): t for t, c in enumerate(proxies.cluster_ids)}
    try:
        return np.array([lookup[int(l)] for l in batch.labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"batch label {exc.args[0]} has no proxy") from exc


def proxy_loss(
    batch: Batch, proxies: ProxySet, hyper: LossHyper = LossHyper()
) -> tuple[float, NDArray[np.float64]]:
    """Softmax cross-entropy of each vector against all cluster proxies.

    The positive logit is the dot product with the vector's own cluster proxy,
    scaled by 1/tau. Returns the batch-mean value and its exact gradient with
    respect to the batch vectors (proxies held fixed).
    """
    pos = _proxy_columns(batch, proxies)
    V, P = batch.vectors, proxies.proxies
    scores = (V @ P.T) / hyper.tau
    shift = scores.max(axis=1, keepdims=True)
    logz = np.log(np.exp(scores - shift).sum(axis=1, keepdims=True)) + shift
    b = V.shape[0]
    value = float((logz[:, 0] - scores[np.arange(b), pos]).mean())
    probs = np.exp(scores - logz)
    grad = (probs @ P - P[pos]) / (hyper.tau * b)
    return value, grad


def hard_loss(
    batch: Batch, hyper: LossHyper = LossHyper()
) -> tuple[float, NDArray[np.float64]]:
    """Batch-hard contrastive term.

    For each vector: positive = the least similar same-cluster vector in the
    batch, negative = the most similar other-cluster vector (dot-product
    similarity, ties toward smaller index). Vectors lacking a same-cluster
    companion or any other-cluster vector are skipped and the mean runs over
    the eligible ones. The gradient treats the hard selections as locally
    constant but does include each vector's appearances as someone else's
    selected positive/negative.
    """
    V, labels = batch.vectors, batch.labels
    b = V.shape[0]
    sims = V @ V.T
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    eligible = same.any(axis=1) & diff.any(axis=1)
    if not eligible.any():
        raise ValueError("no batch sample has both a positive and a negative companion")

    pos_idx = np.where(same, sims, np.inf).argmin(axis=1)
    neg_idx = np.where(diff, sims, -np.inf).argmax(axis=1)
    rows = np.flatnonzero(eligible)
    s_pos = sims[rows, pos_idx[rows]]
    s_neg = sims[rows, neg_idx[rows]]
    z = (s_neg - s_pos) / hyper.tau
    value = float(np.logaddexp(0.0, z).mean())

    # sigmoid(z): weight of the negative branch
    w = np.empty_like(z)
    nonneg = z >= 0
    w[nonneg] = 1.0 / (1.0 + np.exp(-z[nonneg]))
    w[~nonneg] = np.exp(z[~nonneg]) / (1.0 + np.exp(z[~nonneg]))

    grad = np.zeros_like(V)
    scale = 1.0 / (hyper.tau * rows.size)
    for t, r in enumerate(rows):
        g = w[t] * scale
        p, q = pos_idx[r], neg_idx[r]
        grad[r] += g * (V[q] - V[p])
        grad[p] -= g * V[r]
        grad[q] += g * V[r]
    return value, grad


def combined_loss(
    batch: Batch, proxies: ProxySet, hyper: LossHyper = LossHyper()
) -> tuple[float, NDArray[np.float64]]:
    """Proxy term plus lambda_hard times the batch-hard term."""
    pv, pg = proxy_loss(batch, proxies, hyper)
    hv, hg = hard_loss(batch, hyper)
    return pv + hyper.lambda_hard * hv, pg + hyper.lambda_hard * hg


def barlow_twins_loss(Z1, Z2, lambda_bt: float = DEFAULT_LAMBDA_BT) -> float:
    """Redundancy-reduction loss between two views of a batch.

    Columns of each view are standardized to mean 0 and population std 1;
    the views' cross-correlation matrix C (normalized by batch size) should
    approach the identity. The loss penalizes (1 - C_ii)^2 on the diagonal
    and lambda_bt * C_ij^2 off it.
    """
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    if Z1.shape != Z2.shape or Z1.ndim != 2:
        raise ValueError(f"views must share a 2-D shape, got {Z1.shape} vs {Z2.shape}")
    n = Z1.shape[0]
    if n < 2:
        raise ValueError("need a batch of at least 2")

    def standardize(Z, name):
        std = Z.std(axis=0)
        if (std == 0).any():
            raise ValueError(f"{name} has a zero-variance column")
        return (Z - Z.mean(axis=0)) / std

    C = standardize(Z1, "Z1").T @ standardize(Z2, "Z2") / n
    diag = np.diag(C)
    off = C - np.diag(diag)
    return float(((1.0 - diag) ** 2).sum() + lambda_bt * (off**2).sum())


def ema_update(prev, current, beta: float) -> NDArray[np.float64]:
    """Element-wise convex combination: beta of the running value, rest new."""
    prev = np.asarray(prev, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if prev.shape != current.shape:
        raise ValueError(f"shape mismatch: {prev.shape} vs {current.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return current + beta * (prev - current)


def make_proxies(features, assignment: ClusterAssignment, rng_seed: int) -> ProxySet:
    """One random member per cluster, L2-normalized."""
    features = np.asarray(features, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    if assignment.num_clusters < 1:
        raise ValueError("no clusters to build proxies from")
    picks = []
    for c in range(assignment.num_clusters):
        members = np.flatnonzero(assignment.labels == c)
        picks.append(int(rng.choice(members)))
    P = features[picks]
    norms = np.linalg.norm(P, axis=1)
    if (norms == 0).any():
        raise ValueError("zero-norm feature cannot be a proxy")
    return ProxySet(P / norms[:, None], np.arange(assignment.num_clusters, dtype=np.int64))


def pk_sample_batches(
    assignment: ClusterAssignment,
    P: int = DEFAULT_BATCH_CLUSTERS,
    K: int = DEFAULT_BATCH_PER_CLUSTER,
    repeats: int = DEFAULT_BATCH_REPEATS,
    rng_seed: int = 0,
) -> list[NDArray[np.int64]]:
    """Index batches of up to P clusters x K samples each.

    Clusters smaller than K are sampled with replacement; larger ones
    without. Each pass emits batches until every cluster is covered, and the
    whole process repeats ``repeats`` times. Noise points are never sampled.
    """
    if P < 1 or K < 1 or repeats < 1:
        raise ValueError("P, K, and repeats must be >= 1")
    if assignment.num_clusters < 1:
        raise ValueError("no clusters to sample from")
    members = [
        np.flatnonzero(assignment.labels == c) for c in range(assignment.num_clusters)
    ]
    rng = np.random.default_rng(rng_seed)
    batches: list[NDArray[np.int64]] = []
    for _ in range(repeats):
        order = rng.permutation(assignment.num_clusters)
        for start in range(0, order.size, P):
            group = order[start : start + P]
            parts = []
            for c in group:
                pool = members[int(c)]
                parts.append(rng.choice(pool, size=K, replace=pool.size < K))
            batches.append(np.concatenate(parts).astype(np.int64))
    return batches
