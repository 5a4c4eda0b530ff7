__copyright__ = "Copyright (C) 2026 switchq developers"

from typing import Optional, Sequence

import numpy as np

from switchq.constants import PROBABILITY_TOL, RANK_TOL
from switchq.exceptions import (
    InvariantViolation,
    RankDeficientFeatures,
    SamplingNotPositive,
)


def as_matrix(value, name: str, shape: Optional[Sequence] = None):
    """
    convert a nested list into a finite float array of the expected shape
    @param value: array-like input
    @param name: field name used in error messages
    @param shape: expected shape, None entries match any length
    @return: np.ndarray
    """
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise InvariantViolation(name, f"{name} must be numeric")
    if shape is not None:
        if arr.ndim != len(shape) or any(
            want is not None and got != want
            for got, want in zip(arr.shape, shape)
        ):
            raise InvariantViolation(
                name,
                f"{name} has shape {arr.shape}, expected {tuple(shape)}",
            )
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(name, f"{name} contains non-finite entries")
    return arr


def is_probability_rows(rows: np.ndarray, tol: float = PROBABILITY_TOL):
    """Check that every row is entrywise nonnegative and sums to one.

    Returns:
        index of the first offending row, or None if all rows are valid
    """
    bad = np.flatnonzero(
        np.any(rows < 0, axis=-1) | (np.abs(rows.sum(axis=-1) - 1.0) > tol)
    )
    return None if bad.size == 0 else int(bad[0])


def check_open_unit(value: float, name: str) -> float:
    if not 0.0 < value < 1.0:
        raise InvariantViolation(value, f"{name} must lie in (0, 1)")
    return float(value)


def check_sampling(d: np.ndarray, tol: float = PROBABILITY_TOL) -> None:
    nonpos = np.flatnonzero(d <= 0)
    if nonpos.size:
        raise SamplingNotPositive(f"sampling[{int(nonpos[0])}]")
    if abs(d.sum() - 1.0) > tol:
        raise InvariantViolation(
            d.sum(), "sampling distribution must sum to 1"
        )


def check_full_column_rank(features: np.ndarray, tol: float = RANK_TOL):
    """
    full column rank via the scale-invariant singular value test
    smallest > tol * largest
    @return: singular values in descending order
    """
    if features.shape[0] < features.shape[1]:
        raise RankDeficientFeatures(features.shape)
    sv = np.linalg.svd(features, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= tol * sv[0]:
        raise RankDeficientFeatures(f"smallest singular value {sv[-1]:.3e}")
    return sv
