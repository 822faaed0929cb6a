"""Weighted log-rank statistic, null variance, and standardized Z.

The per-time event count on arm 1 is compared with its hypergeometric
null moments; the weighted sum of (observed - expected) and its variance
give the test statistic. Z is oriented so that fewer events than expected
on arm 1 (treatment benefit) maps to positive evidence, i.e. the one-sided
p-value is 1 - Phi(z) and large positive z rejects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import RiskArrays, RiskTableRow, rows_to_arrays
from .errors import NumericalError
from .weights import WeightSpec, weights_from_km_left


def _acc_sum(values: np.ndarray) -> float:
    # exactly-rounded accumulation, taken in ascending-tau order
    return math.fsum(values.tolist())


@dataclass(frozen=True)
class WlrtResult:
    """Weighted log-rank output for one weight specification.

    ``g`` is the weighted sum of observed-minus-expected arm-1 events,
    ``variance`` its null variance, and ``z = -g / sqrt(variance)`` the
    standardized statistic in the rejection direction (positive favors
    arm 1).
    """

    g: float
    variance: float
    z: float
    per_time_weights: list[float]
    per_time_var: list[float]


def hypergeometric_moments(row: RiskTableRow) -> tuple[float, float]:
    """Null mean and variance of the arm-1 event count at one event time.

    Mean is n1*d/n; variance is n1*(n-n1)*d*(n-d) / (n^2*(n-1)), defined
    as 0 when the risk set has a single subject.
    """
    n, n1, d = row.n_total, row.n_arm1, row.d_total
    mean = n1 * d / n
    if n <= 1:
        return mean, 0.0
    var = n1 * (n - n1) * d * (n - d) / (n * n * (n - 1))
    return mean, var


def moment_arrays(risk: RiskArrays) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized hypergeometric moments over all risk-table rows."""
    n = risk.n_total.astype(np.float64)
    n1 = risk.n_arm1.astype(np.float64)
    d = risk.d_total.astype(np.float64)
    mean = n1 * d / n
    denom = np.where(n > 1, n * n * np.maximum(n - 1.0, 1.0), 1.0)
    var = np.where(n > 1, n1 * (n - n1) * d * (n - d) / denom, 0.0)
    return mean, var


def statistic_from_arrays(
    w: np.ndarray, risk: RiskArrays, mean: np.ndarray, var: np.ndarray
) -> tuple[float, float, float]:
    """(g, variance, z) for one weight vector over a columnar risk table."""
    g = _acc_sum(w * (risk.d_arm1 - mean))
    variance = _acc_sum(w * w * var)
    if variance <= 0.0:
        raise NumericalError("degenerate variance")
    return g, variance, -g / math.sqrt(variance)


def weighted_logrank(spec: WeightSpec, table: Sequence[RiskTableRow]) -> WlrtResult:
    """Compute the weighted log-rank statistic for one weight specification.

    Zero-variance rows (risk sets of size one) still contribute their
    weighted observed-minus-expected term to ``g``. A zero total variance
    raises NumericalError("degenerate variance").
    """
    risk = rows_to_arrays(table)
    w = weights_from_km_left(spec, risk.km_left)
    mean, var = moment_arrays(risk)
    g, variance, z = statistic_from_arrays(w, risk, mean, var)
    return WlrtResult(
        g=g, variance=variance, z=z,
        per_time_weights=w.tolist(), per_time_var=var.tolist(),
    )


def one_sided_p(z: float) -> float:
    """Upper-tail normal p-value for a standardized statistic."""
    from scipy.special import ndtr

    return float(ndtr(-z))
