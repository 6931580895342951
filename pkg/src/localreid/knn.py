"""Exact top-k nearest-neighbor search under cosine or Euclidean distance.

Everything here is brute force on purpose: downstream refinement and its
oracle tests assume the neighbor lists are exact, and the tie rule (ascending
distance, then ascending index) makes every result reproducible regardless of
blocking or thread count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .data import BadMagic, FormatError, TruncatedPayload
from .validation import check_feature_matrix

Metric = Literal["cosine", "euclidean"]
METRICS = ("cosine", "euclidean")

NNLK_MAGIC = b"NNLK"
_NNLK_HEADER = struct.Struct("<IQQ")  # version, n, k


def _check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


def _unit_rows(X: NDArray[np.float64], name: str) -> NDArray[np.float64]:
    norms = np.linalg.norm(X, axis=1)
    if (norms == 0).any():
        i = int(np.flatnonzero(norms == 0)[0])
        raise ValueError(f"{name} row {i} has zero norm; cosine distance undefined")
    return X / norms[:, None]


@dataclass(frozen=True)
class NeighborList:
    """Per-point top-k neighbors: indices and raw distances, ascending per row.

    Rows never contain their own index and k < n.
    """

    indices: NDArray[np.int64]
    distances: NDArray[np.float64]

    @property
    def n(self) -> int:
        return int(self.indices.shape[0])

    @property
    def k(self) -> int:
        return int(self.indices.shape[1])

    def validate(self) -> "NeighborList":
        if self.indices.shape != self.distances.shape or self.indices.ndim != 2:
            raise ValueError("indices and distances must share an (n, k) shape")
        n, k = self.indices.shape
        if not 1 <= k < n:
            raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
        if (self.indices < 0).any() or (self.indices >= n).any():
            raise ValueError("neighbor index out of range")
        if (self.indices == np.arange(n)[:, None]).any():
            raise ValueError("a row contains its own index")
        if (np.diff(self.distances, axis=1) < 0).any():
            raise ValueError("per-row distances must be non-decreasing")
        return self

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(NNLK_MAGIC)
            f.write(_NNLK_HEADER.pack(1, self.n, self.k))
            f.write(np.ascontiguousarray(self.indices, dtype="<u8").tobytes())
            f.write(np.ascontiguousarray(self.distances, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "NeighborList":
        blob = Path(path).read_bytes()
        if len(blob) < 4 or blob[:4] != NNLK_MAGIC:
            raise BadMagic(f"{path}: not an NNLK file")
        version, n, k = _NNLK_HEADER.unpack_from(blob, 4)
        if version != 1:
            raise FormatError(f"{path}: unsupported NNLK version {version}")
        off = 4 + _NNLK_HEADER.size
        need = off + n * k * 8 + n * k * 4
        if len(blob) < need:
            raise TruncatedPayload(f"{path}: expected {need} bytes, got {len(blob)}")
        idx = np.frombuffer(blob, dtype="<u8", offset=off, count=n * k)
        dist = np.frombuffer(blob, dtype="<f4", offset=off + n * k * 8, count=n * k)
        return cls(
            idx.reshape(n, k).astype(np.int64),
            dist.reshape(n, k).astype(np.float64),
        )


def pairwise_distances(A, B, metric: Metric = "euclidean") -> NDArray[np.float64]:
    """Dense |A| x |B| distance table.

    Cosine distance is 1 - cos similarity (range [0, 2], zero-norm rows
    rejected); Euclidean is the L2 norm of the difference. When ``B is A``
    the result is exactly symmetric with a zero diagonal.
    """
    _check_metric(metric)
    same = B is A
    A = check_feature_matrix(A, name="A").astype(np.float64)
    B = A if same else check_feature_matrix(B, name="B").astype(np.float64)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if metric == "cosine":
        Au = _unit_rows(A, "A")
        Bu = Au if same else _unit_rows(B, "B")
        D = 1.0 - Au @ Bu.T
        np.clip(D, 0.0, 2.0, out=D)
    else:
        sq_a = np.einsum("ij,ij->i", A, A)
        sq_b = sq_a if same else np.einsum("ij,ij->i", B, B)
        D = sq_a[:, None] + sq_b[None, :] - 2.0 * (A @ B.T)
        np.clip(D, 0.0, None, out=D)
        np.sqrt(D, out=D)
    if same:
        D = (D + D.T) / 2.0
        np.fill_diagonal(D, 0.0)
    return D


def _bottomk_rows(D: NDArray[np.float64], k: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Row-wise k smallest entries of D, ascending, ties by smaller column.

    Exact under arbitrary tie multiplicity: strictly-smaller entries are taken
    whole, then the boundary-value tie set is filled in ascending column order.
    """
    m, n = D.shape
    idx = np.empty((m, k), dtype=np.int64)
    val = np.empty((m, k), dtype=np.float64)
    part = np.argpartition(D, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(D, part, axis=1).max(axis=1)
    for i in range(m):
        row = D[i]
        below = np.flatnonzero(row < kth[i])
        if below.size < k:
            ties = np.flatnonzero(row == kth[i])
            sel = np.concatenate([below, ties[: k - below.size]])
        else:  # pragma: no cover - argpartition guarantees below.size < k
            sel = below[:k]
        order = np.lexsort((sel, row[sel]))
        idx[i] = sel[order]
        val[i] = row[sel][order]
    return idx, val


def topk_neighbors(
    F,
    k: int,
    metric: Metric = "euclidean",
    *,
    block_size: int = 1024,
) -> NeighborList:
    """Exact k nearest neighbors of every row of F, self excluded.

    Work proceeds in row blocks so peak memory stays O(block_size * n)
    regardless of n; the output is independent of ``block_size``.
    """
    _check_metric(metric)
    F = check_feature_matrix(F)
    n = F.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k}, n={n}")
    X = F.astype(np.float64)
    if metric == "cosine":
        X = _unit_rows(X, "features")
    else:
        sq = np.einsum("ij,ij->i", X, X)

    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        if metric == "cosine":
            D = 1.0 - X[start:stop] @ X.T
            np.clip(D, 0.0, 2.0, out=D)
        else:
            # squared distances; monotone, so selection order is unchanged
            D = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
            np.clip(D, 0.0, None, out=D)
        D[np.arange(stop - start), np.arange(start, stop)] = np.inf
        idx, val = _bottomk_rows(D, k)
        indices[start:stop] = idx
        distances[start:stop] = np.sqrt(val) if metric == "euclidean" else val
    return NeighborList(indices, distances)
