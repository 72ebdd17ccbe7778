"""Geometry of the probability simplex.

Probability vectors are points of the simplex

    S = { p in R^c : p_i >= 0, sum_i p_i = 1 },      c >= 2,

represented as plain ``numpy`` arrays whose last axis holds the c class
probabilities. Under the Fisher information metric the simplex is
isometric to the positive orthant of a radius-2 sphere via the
square-root embedding, which gives the closed-form geodesic distance

    d_FR(p, q) = 2 * arccos( sum_i sqrt(p_i * q_i) ),

bounded by pi (attained exactly between distinct vertices). Log-ratio
coordinates relative to the last class,

    alr(p)_k = log(p_k / p_c),   k = 1, ..., c-1,

map the open simplex bijectively onto R^{c-1}; the inverse is a softmax
with a zero logit appended for the reference class. All functions are
pure and accept either a single vector ``(c,)`` or a batch ``(n, c)``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import (
    BoundaryPoint,
    DimensionMismatch,
    IndexOutOfRange,
    InvalidArgument,
    InvalidProbability,
)

#: Default interior floor applied before log-ratio operations.
DEFAULT_EPSILON = 1e-6

#: Tolerated negative noise on input entries (anything below is an error).
NEGATIVE_TOLERANCE = 1e-9

#: Maximum deviation of an input row sum from 1 before it is rejected.
SUM_TOLERANCE = 0.01


def _as_rows(values) -> tuple[np.ndarray, bool]:
    """Coerce input to a float64 2-D row matrix; report if it was 1-D."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        return arr[np.newaxis, :], True
    if arr.ndim == 2:
        return arr, False
    raise InvalidArgument(f"expected a vector or a matrix of rows, got ndim={arr.ndim}")


def validate_epsilon(epsilon: float, n_classes: int) -> None:
    """Check the interior floor: ``epsilon > 0`` and ``(c-1)*epsilon < 1``."""
    if not (epsilon > 0.0 and np.isfinite(epsilon)):
        raise InvalidArgument(f"epsilon must be positive and finite, got {epsilon}")
    if (n_classes - 1) * epsilon >= 1.0:
        raise InvalidArgument(
            f"epsilon={epsilon} too large for {n_classes} classes: need (c-1)*epsilon < 1"
        )


def normalize_and_clip(raw, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Validate raw probabilities and push them into the simplex interior.

    The rule is entrywise ``max(value, epsilon)`` followed by division by
    the resulting sum. It preserves the ordering of entries, and every
    output entry is at least ``epsilon / sum`` > 0.

    Args:
        raw: probability vector ``(c,)`` or matrix of rows ``(n, c)``.
        epsilon: interior floor, ``0 < epsilon`` and ``(c-1)*epsilon < 1``.

    Returns:
        Array of the same shape, interior and row-normalized.

    Raises:
        InvalidProbability: non-finite entries, an entry below −1e-9, or a
            row sum deviating from 1 by more than 0.01.
    """
    rows, was_1d = _as_rows(raw)
    if rows.shape[1] < 2:
        raise InvalidProbability(f"need at least 2 classes, got {rows.shape[1]}")
    validate_epsilon(epsilon, rows.shape[1])

    finite = np.isfinite(rows).all(axis=1)
    if not finite.all():
        raise InvalidProbability(f"non-finite entry in row {int(np.flatnonzero(~finite)[0])}")
    negative = (rows < -NEGATIVE_TOLERANCE).any(axis=1)
    if negative.any():
        raise InvalidProbability(f"negative entry in row {int(np.flatnonzero(negative)[0])}")
    sums = rows.sum(axis=1)
    bad_sum = np.abs(sums - 1.0) > SUM_TOLERANCE
    if bad_sum.any():
        i = int(np.flatnonzero(bad_sum)[0])
        raise InvalidProbability(f"row {i} sums to {sums[i]:.6g}, expected 1 within {SUM_TOLERANCE}")

    clipped = np.maximum(rows, epsilon)
    clipped /= clipped.sum(axis=1, keepdims=True)
    return clipped[0] if was_1d else clipped


def fisher_rao_distance(p, q) -> float | np.ndarray:
    """Fisher-Rao geodesic distance ``2*arccos(sum_i sqrt(p_i q_i))`` in [0, pi].

    Symmetric, zero iff ``p == q``, and equal to pi exactly when the two
    vectors have disjoint support. The arccos argument is clamped to
    ``[0, 1]`` because floating-point sums can exceed 1 by ~1e-16.

    Raises:
        DimensionMismatch: if the class counts differ.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    if p_arr.shape[-1] != q_arr.shape[-1]:
        raise DimensionMismatch(
            f"class counts differ: {p_arr.shape[-1]} vs {q_arr.shape[-1]}"
        )
    overlap = np.sqrt(p_arr * q_arr).sum(axis=-1)
    out = 2.0 * np.arccos(np.clip(overlap, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def bhattacharyya_coefficient(p, q) -> float | np.ndarray:
    """Overlap ``sum_i sqrt(p_i q_i)``, clipped into [0, 1].

    Satisfies ``fisher_rao_distance(p, q) == 2*arccos(BC(p, q))``.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    q_arr = np.asarray(q, dtype=np.float64)
    if p_arr.shape[-1] != q_arr.shape[-1]:
        raise DimensionMismatch(
            f"class counts differ: {p_arr.shape[-1]} vs {q_arr.shape[-1]}"
        )
    out = np.clip(np.sqrt(p_arr * q_arr).sum(axis=-1), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def distance_to_vertex(p, class_index: int) -> float | np.ndarray:
    """Distance to the vertex of ``class_index``: ``2*arccos(sqrt(p_j))``.

    Agrees with ``fisher_rao_distance(p, e_j)`` because the overlap with a
    one-hot vertex collapses to a single square root.

    Raises:
        IndexOutOfRange: if the index is outside ``[0, c)``.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    c = p_arr.shape[-1]
    if not 0 <= class_index < c:
        raise IndexOutOfRange(f"class index {class_index} outside [0, {c})")
    out = 2.0 * np.arccos(np.clip(np.sqrt(p_arr[..., class_index]), 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def alr(p) -> np.ndarray:
    """Additive log-ratio coordinates ``log(p_k / p_c)`` for k = 1..c-1.

    The reference class is the last index. Inputs must be strictly
    positive; run :func:`normalize_and_clip` upstream.

    Raises:
        BoundaryPoint: if any entry is zero (clipping was skipped).
    """
    rows, was_1d = _as_rows(p)
    if (rows <= 0.0).any():
        raise BoundaryPoint("zero entry in log-ratio transform; clip the input first")
    out = np.log(rows[:, :-1] / rows[:, -1:])
    return out[0] if was_1d else out


def alr_inverse(z) -> np.ndarray:
    """Inverse log-ratio transform: softmax of ``(z_1, ..., z_{c-1}, 0)``.

    Overflow is guarded by subtracting the row maximum before
    exponentiation, so any finite input yields a valid interior vector.
    """
    rows, was_1d = _as_rows(z)
    logits = np.concatenate([rows, np.zeros((rows.shape[0], 1))], axis=1)
    logits -= logits.max(axis=1, keepdims=True)
    out = np.exp(logits)
    out /= out.sum(axis=1, keepdims=True)
    return out[0] if was_1d else out


def argmax_class(p) -> int | np.ndarray:
    """Index of the largest entry; ties break to the lowest index."""
    p_arr = np.asarray(p, dtype=np.float64)
    out = np.argmax(p_arr, axis=-1)
    return int(out) if out.ndim == 0 else out
