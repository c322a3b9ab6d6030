"""Feature ingestion (CSV and the ``ADPP`` f32 binary format) and synthetic data."""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"ADPP"
_HEADER = struct.Struct("<4sII")


class IngestionError(ValueError):
    pass


def load_csv(path, header=False):
    try:
        X = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read CSV {path}: {exc}") from exc
    if X.size == 0:
        raise IngestionError(f"{path} contains no rows")
    if not np.isfinite(X).all():
        raise IngestionError(f"{path} contains non-finite values")
    return X


def save_f32bin(path, X):
    X = np.ascontiguousarray(X, dtype="<f4")
    n, d = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        fh.write(X.tobytes())


def load_f32bin(path):
    """Read ``ADPP`` + u32 n + u32 d + n*d little-endian f32, row-major."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise IngestionError(f"{path}: truncated header")
            magic, n, d = _HEADER.unpack(head)
            if magic != MAGIC:
                raise IngestionError(f"{path}: bad magic {magic!r}")
            payload = fh.read()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if len(payload) != 4 * n * d:
        raise IngestionError(f"{path}: expected {4 * n * d} payload bytes, got {len(payload)}")
    if n == 0 or d == 0:
        raise IngestionError(f"{path} contains no data")
    X = np.frombuffer(payload, dtype="<f4").reshape(n, d).astype(float)
    if not np.isfinite(X).all():
        raise IngestionError(f"{path} contains non-finite values")
    return X


def load_features(path, fmt="csv", header=False):
    if fmt == "csv":
        return load_csv(path, header=header)
    if fmt == "f32bin":
        return load_f32bin(path)
    raise IngestionError(f"unknown format {fmt!r}")


def gaussian_mixture(n, d=20, components=10, seed=0, spread=3.0):
    """Seeded Gaussian-mixture point cloud, rounded through float32.

    Centers are drawn once per ``(d, components, seed)`` so that nested
    sample sizes share the same underlying distribution.
    """
    center_rng = np.random.default_rng([seed, d, components])
    centers = center_rng.normal(scale=spread, size=(components, d))
    rng = np.random.default_rng([seed, n])
    labels = rng.integers(components, size=n)
    X = centers[labels] + rng.normal(size=(n, d))
    return X.astype(np.float32).astype(float)
