"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

# Feature vectors are expected at (or very near) unit norm for the loss
# formulas; the slack absorbs float32 storage and finite-difference probes.
UNIT_NORM_ATOL = 1e-4


def check_feature_matrix(X, *, name: str = "features") -> NDArray[np.float32]:
    """Validate a 2-D float32 feature collection.

    Requires at least one row and one column and fully finite values.
    Returns a C-contiguous float32 view/copy of the input.
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    n, d = X.shape
    if n < 1 or d < 1:
        raise ValueError(f"{name} must be non-empty, got shape {X.shape}")
    X = np.ascontiguousarray(X, dtype=np.float32)
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_square_distances(D, *, name: str = "distances") -> NDArray[np.float64]:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {D.shape}")
    if not np.isfinite(D).all():
        raise ValueError(f"{name} contains non-finite values")
    return D


def check_unit_rows(V, *, name: str = "vectors") -> NDArray[np.float64]:
    """Validate that every row has L2 norm 1 within tolerance."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {V.shape}")
    norms = np.linalg.norm(V, axis=1)
    bad = np.abs(norms - 1.0) > UNIT_NORM_ATOL
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"{name} row {i} has norm {norms[i]:.6g}, expected 1")
    return V


def check_labels_1d(y, *, n: int | None = None, name: str = "labels") -> NDArray[np.int64]:
    y = np.asarray(y, dtype=np.int64).ravel()
    if n is not None and y.shape[0] != n:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {n}")
    return y
