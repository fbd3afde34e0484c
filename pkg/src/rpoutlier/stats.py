"""Core numerical primitives: outlier thresholds, random directions and
robust one-dimensional location/scale estimation of projected samples.

All operations are pure given their inputs and a caller-supplied
``numpy.random.Generator``; nothing here holds mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateProjection
from .special import Q3, chi2_quantile

__all__ = [
    "DataMatrix",
    "RobustLocationScale",
    "Threshold",
    "as_sample",
    "madn",
    "median",
    "project_scores",
    "robust_location_scale",
    "sample_unit_direction",
    "threshold_cnd",
]


@dataclass(frozen=True)
class DataMatrix:
    """An n x d reference sample; rows are observations.

    Entries must be finite, with n >= 2 and d >= 2.  The backing array is
    made read-only so the matrix cannot drift during an analysis.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {values.shape}")
        n, d = values.shape
        if n < 2 or d < 2:
            raise ValueError(f"need at least 2 rows and 2 columns, got {n}x{d}")
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def as_sample(sample, min_rows: int = 2) -> np.ndarray:
    """Coerce a DataMatrix or array-like into a validated float matrix."""
    if isinstance(sample, DataMatrix):
        values = sample.values
    else:
        values = np.asarray(sample, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"expected a 2-d sample, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("sample contains non-finite entries")
    if values.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {values.shape[0]}")
    return values


class RobustLocationScale(NamedTuple):
    """Median and normalized MAD of a projected sample."""

    median: float
    madn: float


@dataclass(frozen=True)
class Threshold:
    """Outlier threshold for a sample of size n in dimension d.

    ``c_nd`` is the square root of the (1-delta)^(1/n) quantile of the
    chi-squared distribution with d degrees of freedom: a point whose
    Mahalanobis norm exceeds it is more extreme than the whole sample's
    maximum is expected to be, at level delta.
    """

    c_nd: float
    n: int
    d: int
    delta: float


def threshold_cnd(n: int, d: int, delta: float) -> Threshold:
    """Compute the outlier threshold C_n^d(delta).

    Raises:
        ValueError: if n < 1, d < 1 or delta is not in (0, 1).
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    # (1 - delta)^(1/n) via expm1/log1p: exact deep into the upper tail
    p = -math.expm1(math.log1p(-delta) / n)
    return Threshold(c_nd=math.sqrt(chi2_quantile(1.0 - p, d)), n=n, d=d, delta=delta)


def sample_unit_direction(rng: np.random.Generator, d: int) -> np.ndarray:
    """Draw a direction uniformly on the unit sphere in R^d."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    while True:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 0.0:
            return v / norm


def median(values) -> float:
    """Median; midpoint of the two central order statistics for even length."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("median of an empty sample is undefined")
    return float(np.median(values))


def madn(values) -> float:
    """Median absolute deviation from the median, divided by the 0.75
    standard-normal quantile so the estimator is consistent for the
    standard deviation under normality."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("madn of an empty sample is undefined")
    med = np.median(values)
    return float(np.median(np.abs(values - med)) / Q3)


def robust_location_scale(values: np.ndarray) -> RobustLocationScale:
    med = float(np.median(values))
    scale = float(np.median(np.abs(values - med)) / Q3)
    return RobustLocationScale(median=med, madn=scale)


def project_scores(
    sample, point, direction: np.ndarray
) -> tuple[float, RobustLocationScale]:
    """Standardized projection score of a point against a reference sample.

    Projects the sample and the point onto ``direction`` and returns
    (point_projection - median) / MADN together with the estimators, both
    computed from the projected sample rows.

    Raises:
        DegenerateProjection: if the projected sample has zero MADN; the
            caller should redraw the direction.
    """
    values = as_sample(sample)
    point = np.asarray(point, dtype=float)
    if point.shape != (values.shape[1],):
        raise ValueError(
            f"point length {point.shape} does not match sample dimension {values.shape[1]}"
        )
    projections = values @ direction
    robust = robust_location_scale(projections)
    if robust.madn == 0.0:
        raise DegenerateProjection("projected sample has zero MADN")
    score = (float(point @ direction) - robust.median) / robust.madn
    return score, robust
