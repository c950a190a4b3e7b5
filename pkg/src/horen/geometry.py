"""Dense vector primitives: normalization, inner products, softmax and log-sum-exp.

Everything works in float64. ``softmax`` and ``lse`` reduce along the last
axis, so they accept either a single score vector or a batch of rows.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, ZeroNorm

ZERO_NORM_TOL = 1e-12
UNIT_NORM_TOL = 1e-9


def as_vector(v, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite, non-empty 1-D float64 array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def normalize(v) -> np.ndarray:
    """Project ``v`` onto the unit hypersphere.

    Raises:
        ZeroNorm: if ``||v|| < 1e-12``; such a vector has no usable direction.
    """
    v = as_vector(v)
    n = float(np.linalg.norm(v))
    if n < ZERO_NORM_TOL:
        raise ZeroNorm(f"cannot normalize vector with norm {n:.3e}")
    return v / n


def normalize_rows(m) -> np.ndarray:
    """Row-wise ``normalize`` for a batch of vectors."""
    m = as_matrix(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if m.shape[0] and float(norms.min()) < ZERO_NORM_TOL:
        bad = int(np.argmin(norms[:, 0]))
        raise ZeroNorm(f"row {bad} has norm {float(norms[bad, 0]):.3e}")
    return m / norms


def is_unit(v, tol: float = UNIT_NORM_TOL) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol


def dot(a, b) -> float:
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.dot(a, b))


def softmax(z, beta: float = 1.0, *, stable: bool = True) -> np.ndarray:
    """``exp(beta*z) / sum(exp(beta*z))`` along the last axis.

    ``stable=False`` skips the max-subtraction; it only exists so the
    verification harness can demonstrate what overflow looks like.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("softmax of an empty score vector")
    x = beta * z
    if stable:
        x = x - x.max(axis=-1, keepdims=True)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(x)
        return e / e.sum(axis=-1, keepdims=True)


def lse(z, beta: float = 1.0, *, stable: bool = True):
    """``(1/beta) * log(sum(exp(beta*z)))`` along the last axis.

    Bounded by ``max(z) <= lse <= max(z) + log(len(z))/beta``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("lse of an empty score vector")
    x = beta * z
    with np.errstate(over="ignore", invalid="ignore"):
        if not stable:
            out = np.log(np.exp(x).sum(axis=-1)) / beta
        else:
            m = x.max(axis=-1)
            out = (m + np.log(np.exp(x - m[..., None]).sum(axis=-1))) / beta
    return float(out) if np.ndim(out) == 0 else out
