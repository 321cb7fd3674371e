"""Probability-simplex primitives.

Distributions are plain 1-D float64 numpy arrays. `as_distribution` is the
single validation gate; everything else assumes its output.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgument

SUM_TOL = 1e-9
# Residual mass at or below this is treated as exactly zero.
EMPTY_RESIDUAL = 1e-12


def as_distribution(probs, tol: float = SUM_TOL) -> np.ndarray:
    """Validate `probs` as a point on the simplex and return a float64 copy."""
    arr = np.array(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgument("distribution must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("distribution contains non-finite entries")
    if np.any(arr < 0):
        raise InvalidArgument("distribution contains negative entries")
    total = math.fsum(arr)
    if abs(total - 1.0) > tol:
        raise InvalidArgument(f"distribution sums to {total!r}, not 1")
    arr.setflags(write=False)
    return arr


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidArgument(f"vocabulary size mismatch: {p.shape} vs {q.shape}")
    return p, q


def softmax_with_temperature(logits, T: float) -> np.ndarray:
    """Numerically stable softmax(logits / T)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidArgument("logits must be a non-empty 1-D array")
    if not np.all(np.isfinite(z)):
        raise InvalidArgument("logits must be finite")
    if not (T > 0 and math.isfinite(T)):
        raise InvalidArgument(f"temperature must be positive, got {T!r}")
    z = z / T
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def overlap(p, q) -> float:
    """Total shared mass sum_x min(p(x), q(x)); the single-draft acceptance rate."""
    p, q = _pair(p, q)
    return math.fsum(np.minimum(p, q))


def residual(p, q) -> tuple[np.ndarray | None, float]:
    """Return ``(norm(max(p - q, 0)), overlap(p, q))``.

    The residual is ``None`` when its unnormalized mass is at most
    `EMPTY_RESIDUAL`; callers must not sample from it in that case.
    """
    p, q = _pair(p, q)
    alpha = overlap(p, q)
    r = np.maximum(p - q, 0.0)
    mass = math.fsum(r)
    if mass <= EMPTY_RESIDUAL:
        return None, alpha
    return r / mass, alpha


def top_token(q) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    q = np.asarray(q)
    if q.size == 0:
        raise InvalidArgument("empty vocabulary")
    return int(np.argmax(q))


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from an (unnormalized, non-negative) weight vector.

    Uses exactly one ``rng.random()`` call per draw so streams stay aligned
    across platforms.
    """
    cdf = np.cumsum(probs)
    total = cdf[-1]
    if not total > 0:
        raise InvalidArgument("cannot sample from a zero vector")
    u = rng.random() * total
    idx = int(np.searchsorted(cdf, u, side="right"))
    # u can land exactly on the last edge through rounding
    idx = min(idx, len(cdf) - 1)
    while probs[idx] <= 0:
        idx -= 1
    return idx
