"""Feature and label containers plus their on-disk formats.

Two file formats live here:

* ``FVEC`` -- binary container for a dense float32 matrix: magic ``b"FVEC"``,
  little-endian u32 version (currently 1), u64 rows, u64 dim, then rows*dim
  IEEE-754 32-bit floats in row-major order.
* labels CSV -- header ``index,identity,camera``, one row per point with the
  point index appearing exactly once; identity/camera codes are re-mapped to
  dense 0-based integers on load (first-occurrence order) and the original
  codes are retained for reporting.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .validation import check_feature_matrix

FVEC_MAGIC = b"FVEC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<IQQ")  # version, rows, dim


class FormatError(ValueError):
    """Malformed container file."""


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class NonFiniteValues(FormatError):
    pass


class EmptyMatrix(FormatError):
    pass


def save_features(X, path) -> None:
    """Write a feature matrix to ``path`` in the FVEC container format."""
    X = check_feature_matrix(X)
    with open(path, "wb") as f:
        f.write(FVEC_MAGIC)
        f.write(_HEADER.pack(FORMAT_VERSION, X.shape[0], X.shape[1]))
        f.write(np.ascontiguousarray(X, dtype="<f4").tobytes())


def load_features(path) -> NDArray[np.float32]:
    """Read an FVEC container; round-trips ``save_features`` bit-exactly."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != FVEC_MAGIC:
        raise BadMagic(f"{path}: not an FVEC file")
    if len(blob) < 4 + _HEADER.size:
        raise TruncatedPayload(f"{path}: header truncated")
    version, rows, dim = _HEADER.unpack_from(blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported FVEC version {version}")
    if rows == 0 or dim == 0:
        raise EmptyMatrix(f"{path}: declares {rows}x{dim} matrix")
    expected = 4 + _HEADER.size + rows * dim * 4
    if len(blob) < expected:
        raise TruncatedPayload(
            f"{path}: payload holds {(len(blob) - 4 - _HEADER.size) // 4} floats, "
            f"expected {rows * dim}"
        )
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes")
    data = np.frombuffer(blob, dtype="<f4", offset=4 + _HEADER.size, count=rows * dim)
    out = data.reshape(rows, dim).copy()
    if not np.isfinite(out).all():
        raise NonFiniteValues(f"{path}: payload contains NaN/Inf")
    return out


def _densify(values: NDArray[np.int64]) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Map arbitrary non-negative codes to dense 0-based codes.

    First-occurrence order: the first distinct value seen becomes 0, the next
    new one 1, and so on. Returns (dense codes, original code per dense code).
    """
    uniq, first_pos, inverse = np.unique(values, return_index=True, return_inverse=True)
    order = np.argsort(first_pos, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse].astype(np.int64), uniq[order].astype(np.int64)


@dataclass(frozen=True)
class LabelTable:
    """Per-point identity and camera codes, densely numbered from 0.

    ``identity_codes[c]`` / ``camera_codes[c]`` give the original on-disk code
    for dense code ``c``.
    """

    identity: NDArray[np.int64]
    camera: NDArray[np.int64]
    identity_codes: NDArray[np.int64]
    camera_codes: NDArray[np.int64]

    def __len__(self) -> int:
        return int(self.identity.shape[0])

    @classmethod
    def from_codes(cls, identity, camera) -> "LabelTable":
        identity = np.asarray(identity, dtype=np.int64)
        camera = np.asarray(camera, dtype=np.int64)
        if identity.shape != camera.shape or identity.ndim != 1:
            raise ValueError("identity and camera must be equal-length 1-D arrays")
        if identity.size == 0:
            raise FormatError("label table must hold at least one row")
        if (identity < 0).any() or (camera < 0).any():
            raise FormatError("negative identity/camera code")
        ident_dense, ident_codes = _densify(identity)
        cam_dense, cam_codes = _densify(camera)
        return cls(ident_dense, cam_dense, ident_codes, cam_codes)


def load_labels(path) -> LabelTable:
    """Read a labels CSV; see the module docstring for the format."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["index", "identity", "camera"]:
            raise FormatError(f"{path}: expected header 'index,identity,camera'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 columns")
            try:
                rows.append(tuple(int(v) for v in row))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer value") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows (empty tables disallowed)")
    n = len(rows)
    seen = np.zeros(n, dtype=bool)
    identity = np.zeros(n, dtype=np.int64)
    camera = np.zeros(n, dtype=np.int64)
    for index, ident, cam in rows:
        if ident < 0 or cam < 0:
            raise FormatError(f"{path}: negative value in row for index {index}")
        if index < 0 or index >= n:
            raise FormatError(f"{path}: index {index} outside 0..{n - 1}")
        if seen[index]:
            raise FormatError(f"{path}: duplicate index {index}")
        seen[index] = True
        identity[index] = ident
        camera[index] = cam
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise FormatError(f"{path}: missing index {missing}")
    return LabelTable.from_codes(identity, camera)


def save_labels(table: LabelTable, path) -> None:
    """Write a labels CSV using the table's original codes."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "identity", "camera"])
        for i in range(len(table)):
            writer.writerow(
                [
                    i,
                    int(table.identity_codes[table.identity[i]]),
                    int(table.camera_codes[table.camera[i]]),
                ]
            )
