"""Neighborhood-overlap distance refinement.

``local_rerank`` refines the distance between each point and its top-k
neighbors only, from the overlap of their neighbor lists, and stores the
result sparsely (n*k entries). ``full_rerank`` is the classic k-reciprocal
re-ranking baseline that materializes a dense n*n table; it exists for
accuracy/efficiency comparisons.

The refined value for a stored pair (i, j) with reciprocal neighborhoods is
``1 - s_min / (s_max + s_ij + s_ji)`` where, writing ``w(i, p)`` for the
exponentially decayed distance ``exp(-d(x_i, x_p))``:

* ``s_min``/``s_max`` sum ``min``/``max`` of ``w(i, p), w(j, p)`` over the
  neighbors ``p`` the two lists share, and
* ``s_ij``/``s_ji`` sum ``w`` over each list's unshared remainder.

Pairs where j is in i's list but not vice versa keep the maximal refined
distance 1.0; pairs stored in neither direction are implicitly 1.0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .data import BadMagic, FormatError, TruncatedPayload
from .knn import Metric, NeighborList, _bottomk_rows, _check_metric, topk_neighbors
from .validation import check_feature_matrix

SRDM_MAGIC = b"SRDM"
_SRDM_HEADER = struct.Struct("<IQQ")  # version, n, k


@dataclass(frozen=True)
class SparseRefinedDistances:
    """n*k refined distances aligned with the source NeighborList layout.

    Entries are in [0, 1]; any pair not stored is implicitly at distance 1.
    """

    indices: NDArray[np.int64]
    values: NDArray[np.float32]

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])

    @property
    def k(self) -> int:
        return int(self.indices.shape[1])

    def validate(self) -> "SparseRefinedDistances":
        if self.indices.shape != self.values.shape or self.indices.ndim != 2:
            raise ValueError("indices and values must share an (n, k) shape")
        if (self.values < 0).any() or (self.values > 1).any():
            raise ValueError("refined distances must lie in [0, 1]")
        if (self.indices < 0).any() or (self.indices >= self.n).any():
            raise ValueError("neighbor index out of range")
        return self

    def lookup(self, i: int, j: int) -> float:
        pos = np.flatnonzero(self.indices[i] == j)
        if pos.size == 0:
            return 1.0
        return float(self.values[i, pos[0]])

    def to_dense(self) -> NDArray[np.float32]:
        """Densify with 1.0 for every unstored pair (diagonal included)."""
        D = np.ones((self.n, self.n), dtype=np.float32)
        rows = np.repeat(np.arange(self.n), self.k)
        D[rows, self.indices.ravel()] = self.values.ravel()
        return D

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(SRDM_MAGIC)
            f.write(_SRDM_HEADER.pack(1, self.n, self.k))
            f.write(np.ascontiguousarray(self.indices, dtype="<u8").tobytes())
            f.write(np.ascontiguousarray(self.values, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "SparseRefinedDistances":
        blob = Path(path).read_bytes()
        if len(blob) < 4 or blob[:4] != SRDM_MAGIC:
            raise BadMagic(f"{path}: not an SRDM file")
        version, n, k = _SRDM_HEADER.unpack_from(blob, 4)
        if version != 1:
            raise FormatError(f"{path}: unsupported SRDM version {version}")
        off = 4 + _SRDM_HEADER.size
        need = off + n * k * 8 + n * k * 4
        if len(blob) < need:
            raise TruncatedPayload(f"{path}: expected {need} bytes, got {len(blob)}")
        idx = np.frombuffer(blob, dtype="<u8", offset=off, count=n * k)
        val = np.frombuffer(blob, dtype="<f4", offset=off + n * k * 8, count=n * k)
        return cls(idx.reshape(n, k).astype(np.int64), val.reshape(n, k).copy())


def local_distances(nn: NeighborList) -> NDArray[np.float64]:
    """Exponentially decayed neighbor distances, aligned with ``nn``.

    Values are exp(-distance), hence in (0, 1] and non-increasing per row.
    """
    return np.exp(-nn.distances)


def inclusion_exclusion(
    i: int, j: int, nn: NeighborList
) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
    """Shared and one-sided neighbor sets of a stored pair.

    Returns (shared, only_in_i, only_in_j) as sorted index arrays. Requires
    j to appear in i's neighbor list.
    """
    row_i = nn.indices[i]
    if j not in row_i:
        raise ValueError(f"{j} is not a neighbor of {i}")
    row_j = nn.indices[j]
    shared = np.intersect1d(row_i, row_j)
    only_i = np.setdiff1d(row_i, shared)
    only_j = np.setdiff1d(row_j, shared)
    return shared, only_i, only_j


def iou_affinity(
    i: int, j: int, decayed: NDArray[np.float64], nn: NeighborList
) -> float:
    """Overlap affinity of a stored pair, in [0, 1]; 1 means maximally related.

    Scalar reference path for single pairs; ``refine_distances`` is the
    batched equivalent. A vanishing denominator (possible only for degenerate
    hand-built inputs, since decayed distances are positive) yields 0.
    """
    row_i = nn.indices[i]
    if j not in row_i:
        raise ValueError(f"{j} is not a neighbor of {i}")
    row_j = nn.indices[j]
    pos_j = {int(p): t for t, p in enumerate(row_j)}
    s_min = s_max = s_ij = 0.0
    shared_j_positions = []
    for t, p in enumerate(row_i):
        t_j = pos_j.get(int(p))
        if t_j is None:
            s_ij += decayed[i, t]
        else:
            a, b = decayed[i, t], decayed[j, t_j]
            s_min += min(a, b)
            s_max += max(a, b)
            shared_j_positions.append(t_j)
    mask = np.ones(row_j.shape[0], dtype=bool)
    mask[shared_j_positions] = False
    s_ji = float(decayed[j][mask].sum())
    denom = s_max + s_ij + s_ji
    if denom <= 0.0:
        return 0.0
    return s_min / denom


def _pair_block_size(k: int) -> int:
    # keep the (B, k, k, k) match tensor near 64 MiB
    return max(1, (1 << 26) // max(1, k**3))


def refine_distances(nn: NeighborList) -> SparseRefinedDistances:
    """Refined distances for every stored neighbor pair of ``nn``.

    Vectorized over blocks of rows; allocates O(block * k^3) scratch and the
    n*k output, never an n*n table. Reciprocal pairs are written symmetrically
    (both directions carry the value computed for the lower-index anchor).
    """
    n, k = nn.indices.shape
    decayed = np.exp(-nn.distances)
    order = np.argsort(nn.indices, axis=1, kind="stable")
    sorted_ids = np.take_along_axis(nn.indices, order, axis=1)
    sorted_dl = np.take_along_axis(decayed, order, axis=1)

    values = np.ones((n, k), dtype=np.float64)
    block = _pair_block_size(k)
    for start in range(0, n, block):
        stop = min(start + block, n)
        b = stop - start
        j_ids = nn.indices[start:stop]
        Bj = sorted_ids[j_ids.ravel()].reshape(b, k, k)
        Dj = sorted_dl[j_ids.ravel()].reshape(b, k, k)
        Ai = sorted_ids[start:stop]
        Di = sorted_dl[start:stop]

        match = Ai[:, None, :, None] == Bj[:, :, None, :]
        shared_i = match.any(axis=3)
        shared_j = match.any(axis=2)
        pos = match.argmax(axis=3)
        Dj_aligned = np.take_along_axis(Dj, pos, axis=2)

        Di_b = np.broadcast_to(Di[:, None, :], Dj_aligned.shape)
        s_min = np.where(shared_i, np.minimum(Di_b, Dj_aligned), 0.0).sum(axis=2)
        s_max = np.where(shared_i, np.maximum(Di_b, Dj_aligned), 0.0).sum(axis=2)
        s_ij = np.where(shared_i, 0.0, Di_b).sum(axis=2)
        s_ji = np.where(shared_j, 0.0, Dj).sum(axis=2)

        denom = s_max + s_ij + s_ji
        affinity = np.divide(s_min, denom, out=np.zeros_like(s_min), where=denom > 0)
        reciprocal = (Bj == np.arange(start, stop)[:, None, None]).any(axis=2)
        values[start:stop] = np.where(reciprocal, 1.0 - affinity, 1.0)

    np.clip(values, 0.0, 1.0, out=values)
    _symmetrize_reciprocal(nn.indices, values)
    return SparseRefinedDistances(nn.indices.copy(), values.astype(np.float32))


def _symmetrize_reciprocal(indices: NDArray[np.int64], values: NDArray[np.float64]) -> None:
    """Copy each lower-anchor value onto the mirrored entry, in place.

    The affinity is symmetric in exact arithmetic; this removes the last-ulp
    float asymmetry that different summation orders can introduce.
    """
    n, k = indices.shape
    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = indices.ravel()
    fwd = rows * n + cols
    rev = cols * n + rows
    order = np.argsort(fwd, kind="stable")
    pos = np.searchsorted(fwd[order], rev)
    pos = np.clip(pos, 0, fwd.size - 1)
    partner = order[pos]
    has_mirror = fwd[partner] == rev
    take = has_mirror & (rows > cols)
    flat = values.ravel()
    flat[np.flatnonzero(take)] = flat[partner[take]]


def local_rerank(F, k: int = 20, metric: Metric = "euclidean") -> SparseRefinedDistances:
    """Top-k neighbor search followed by neighborhood-overlap refinement."""
    return refine_distances(topk_neighbors(F, k, metric))


@dataclass(frozen=True)
class FrrParams:
    """Parameters of the k-reciprocal full re-ranking baseline.

    Defaults are the canonical values of the method (k1=20, k2=6, 0.3).
    """

    k1: int = 20
    k2: int = 6
    lambda_jaccard: float = 0.3

    def __post_init__(self) -> None:
        if self.k1 < 1:
            raise ValueError("k1 must be >= 1")
        if not 1 <= self.k2 <= self.k1:
            raise ValueError("need 1 <= k2 <= k1")
        if not 0.0 <= self.lambda_jaccard <= 1.0:
            raise ValueError("lambda_jaccard must lie in [0, 1]")


def _squared_base_distances(F: NDArray[np.float32], metric: str) -> NDArray[np.float32]:
    X = F.astype(np.float32, copy=False)
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if (norms == 0).any():
            raise ValueError("zero-norm row; cosine distance undefined")
        U = X / norms[:, None]
        D = 1.0 - U @ U.T
        np.clip(D, 0.0, 2.0, out=D)
    else:
        sq = np.einsum("ij,ij->i", X, X)
        D = X @ X.T
        D *= -2.0
        D += sq[:, None]
        D += sq[None, :]
        np.clip(D, 0.0, None, out=D)
        return D  # already squared
    D *= D
    return D


def _reciprocal_sets(rank: NDArray[np.int64], kk: int) -> list[NDArray[np.int64]]:
    """For each i, the sorted set {j in top-kk(i) : i in top-kk(j)} (self included)."""
    fwd = rank[:, : kk + 1]
    out = []
    for i in range(rank.shape[0]):
        cand = fwd[i]
        mutual = (fwd[cand] == i).any(axis=1)
        out.append(np.sort(cand[mutual]))
    return out


def full_rerank(
    F,
    params: FrrParams | None = None,
    metric: Metric = "euclidean",
    *,
    block_size: int = 512,
) -> NDArray[np.float32]:
    """Dense k-reciprocal re-ranking over all points of F.

    Baseline only: O(n^2) memory and roughly cubic work. Steps: squared base
    distances (column-max normalized), k-reciprocal neighbor sets with
    half-size incremental expansion, exp-weighted encoding vectors, local
    query expansion over the top k2, Jaccard distance between encodings, and
    a final convex mix with the normalized base distance.
    """
    _check_metric(metric)
    params = params or FrrParams()
    F = check_feature_matrix(F)
    n = F.shape[0]
    if params.k1 > n - 1:
        raise ValueError(f"k1={params.k1} needs at least {params.k1 + 1} points")

    D = _squared_base_distances(F, metric)
    colmax = D.max(axis=0)
    colmax[colmax == 0] = 1.0
    D = np.ascontiguousarray((D / colmax).T, dtype=np.float32)

    kcand = params.k1 + 1
    rank = np.empty((n, kcand), dtype=np.int64)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        rank[start:stop] = _bottomk_rows(D[start:stop].astype(np.float64), kcand)[0]

    half = int(np.around(params.k1 / 2.0))
    recip = _reciprocal_sets(rank, params.k1)
    recip_half = _reciprocal_sets(rank, half)

    V = np.zeros((n, n), dtype=np.float32)
    for i in range(n):
        base = recip[i]
        parts = [base]
        for c in base:
            cand = recip_half[c]
            common = np.intersect1d(cand, base, assume_unique=True)
            if common.size > (2.0 / 3.0) * cand.size:
                parts.append(cand)
        expansion = base if len(parts) == 1 else np.unique(np.concatenate(parts))
        w = np.exp(-D[i, expansion].astype(np.float64))
        V[i, expansion] = (w / w.sum()).astype(np.float32)

    if params.k2 != 1:
        Vqe = np.empty_like(V)
        for start in range(0, n, block_size):
            stop = min(start + block_size, n)
            Vqe[start:stop] = V[rank[start:stop, : params.k2]].mean(axis=1)
        V = Vqe

    # inverted index over the columns of V
    nz_rows, nz_cols = np.nonzero(V)
    by_col = np.argsort(nz_cols, kind="stable")
    col_rows = nz_rows[by_col]
    col_starts = np.searchsorted(nz_cols[by_col], np.arange(n + 1))
    row_starts = np.searchsorted(nz_rows, np.arange(n + 1))

    lam = params.lambda_jaccard
    final = np.empty_like(D)
    overlap = np.zeros(n, dtype=np.float32)
    for i in range(n):
        cols_i = nz_cols[row_starts[i] : row_starts[i + 1]]
        overlap[:] = 0.0
        for c in cols_i:
            rows_c = col_rows[col_starts[c] : col_starts[c + 1]]
            overlap[rows_c] += np.minimum(V[i, c], V[rows_c, c])
        jaccard = 1.0 - overlap / (2.0 - overlap)
        np.clip(jaccard, 0.0, None, out=jaccard)  # float32 overlap can overshoot 1
        final[i] = jaccard * (1.0 - lam) + D[i] * lam
    return final
