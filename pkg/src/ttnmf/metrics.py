"""Relative error metrics and their summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError


@dataclass(frozen=True)
class ErrorVector:
    """Relative errors with NaN at indices whose true norm is zero."""

    values: np.ndarray
    undefined_indices: tuple

    def defined_values(self) -> np.ndarray:
        if not self.undefined_indices:
            return self.values
        keep = np.ones(self.values.shape[0], dtype=bool)
        keep[list(self.undefined_indices)] = False
        return self.values[keep]


def _relative_errors(x_true, x_est, axis) -> ErrorVector:
    x_true = np.asarray(x_true, dtype=float)
    x_est = np.asarray(x_est, dtype=float)
    if x_true.shape != x_est.shape:
        raise ShapeError(f"shape mismatch {x_true.shape} != {x_est.shape}")
    if x_true.ndim != 2:
        raise ShapeError("expected 2-D matrices")
    num = np.linalg.norm(x_est - x_true, axis=axis)
    den = np.linalg.norm(x_true, axis=axis)
    undefined = den == 0
    values = np.full(num.shape, np.nan)
    np.divide(num, den, out=values, where=~undefined)
    return ErrorVector(values, tuple(int(i) for i in np.flatnonzero(undefined)))


def sre(x_true, x_est) -> ErrorVector:
    """Per-OD-pair (row) relative errors."""
    return _relative_errors(x_true, x_est, axis=1)


def tre(x_true, x_est) -> ErrorVector:
    """Per-timestamp (column) relative errors."""
    return _relative_errors(x_true, x_est, axis=0)


def summary_stats(errors: ErrorVector) -> dict:
    """min/max/mean/median/std (population std) over the defined entries."""
    vals = errors.defined_values()
    if vals.size == 0:
        raise UsageError("no defined error values to summarize")
    return {
        "min": float(vals.min()),
        "max": float(vals.max()),
        "mean": float(vals.mean()),
        "median": float(np.median(vals)),
        "std": float(vals.std()),
    }


def cdf_points(errors: ErrorVector) -> list:
    """Empirical CDF as (value, fraction) pairs with duplicates collapsed."""
    vals = errors.defined_values()
    if vals.size == 0:
        return []
    unique, counts = np.unique(vals, return_counts=True)
    fractions = np.cumsum(counts) / vals.size
    return [(float(v), float(f)) for v, f in zip(unique, fractions)]
