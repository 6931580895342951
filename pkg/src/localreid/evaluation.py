"""Retrieval ranking and metrics: ensemble distances, mAP, and CMC curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .data import LabelTable


def ensemble_distances(mats) -> NDArray[np.float64]:
    """Element-wise mean of equal-shape distance tables."""
    mats = [np.asarray(m, dtype=np.float64) for m in mats]
    if not mats:
        raise ValueError("need at least one distance table")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("distance tables must share a shape")
    return np.mean(np.stack(mats), axis=0)


@dataclass(frozen=True)
class RankingResult:
    """Per-query rankings and the derived retrieval metrics.

    ``orders[q]`` lists the gallery indices that survive the same-identity
    same-camera filter, best match first. ``average_precision[q]`` is NaN for
    queries left with no positive after filtering; those queries are excluded
    from mAP and the CMC curve and counted in ``excluded_queries``.
    """

    orders: tuple[NDArray[np.int64], ...]
    average_precision: NDArray[np.float64]
    cmc: NDArray[np.float64]
    excluded_queries: int

    @property
    def map(self) -> float:
        return float(np.nanmean(self.average_precision))

    def rank_at(self, r: int) -> float:
        r = min(r, self.cmc.shape[0])
        return float(self.cmc[r - 1])

    def summary(self, ranks=(1, 5, 10)) -> dict[str, float]:
        out = {"mAP": self.map}
        for r in ranks:
            out[f"R{r}"] = self.rank_at(r)
        return out


def evaluate_ranking(
    dist, q_labels: LabelTable, g_labels: LabelTable, ranks=(1, 5, 10)
) -> RankingResult:
    """Score a query-by-gallery distance table.

    Gallery entries sharing both identity and camera with the query are
    dropped before ranking (the cross-camera protocol). Remaining entries are
    sorted by ascending distance, ties toward smaller gallery index. AP is
    the mean of precision at each positive's rank; CMC(r) is the fraction of
    scored queries with a positive in the top r.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n_q, n_g = dist.shape
    if n_q != len(q_labels) or n_g != len(g_labels):
        raise ValueError(
            f"table shape {dist.shape} does not match labels ({len(q_labels)}, {len(g_labels)})"
        )
    g_ident = g_labels.identity
    g_cam = g_labels.camera
    gallery = np.arange(n_g)

    orders = []
    aps = np.full(n_q, np.nan)
    hit_rank = []  # rank of first positive per scored query
    max_len = 0
    for q in range(n_q):
        drop = (g_ident == q_labels.identity[q]) & (g_cam == q_labels.camera[q])
        keep = gallery[~drop]
        order = keep[np.lexsort((keep, dist[q, keep]))]
        orders.append(order)
        max_len = max(max_len, order.size)
        positive = g_ident[order] == q_labels.identity[q]
        n_pos = int(positive.sum())
        if n_pos == 0:
            continue
        pos_ranks = np.flatnonzero(positive)  # 0-based
        precision = (np.arange(n_pos) + 1.0) / (pos_ranks + 1.0)
        aps[q] = precision.mean()
        hit_rank.append(int(pos_ranks[0]))

    excluded = int(np.isnan(aps).sum())
    if hit_rank:
        hits = np.bincount(np.asarray(hit_rank), minlength=max_len)
        cmc = hits.cumsum() / len(hit_rank)
    else:
        cmc = np.zeros(max_len)
    return RankingResult(tuple(orders), aps, cmc, excluded)


def save_summary(result: RankingResult, path, ranks=(1, 5, 10)) -> None:
    """CSV dump: metric,value rows plus the excluded-query count."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        for name, value in result.summary(ranks).items():
            writer.writerow([name, f"{value:.6f}"])
        writer.writerow(["excluded_queries", result.excluded_queries])
