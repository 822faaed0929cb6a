"""Joint inference for the maximum of two weighted log-rank statistics.

Covers the null correlation between two standardized statistics computed
on the same risk table, upper-tail probabilities of the standard bivariate
normal, critical values for equal and unequal alpha splits, the rejection
decision, and the max-combo p-value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import bisect
from scipy.special import ndtr, ndtri

from .dataset import RiskTableRow, rows_to_arrays
from .errors import NumericalError
from .weights import WeightSpec, weights_from_km_left
from .wlrt import _acc_sum, moment_arrays, statistic_from_arrays

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_TAIL_Z = 9.0     # |z| beyond which the conditional tail factor is 0 or 1 to ~1e-19
_FAR_X = 12.5     # |x| beyond which phi(x) mass is negligible at any tolerance used here
_QUAD_TOL = 1e-13


@dataclass(frozen=True)
class ComboSpec:
    """Definition of a two-component max-combo test.

    ``k1`` and ``k2`` split the one-sided level ``alpha`` between the two
    components; k2 = 0 degenerates to the w1 test alone.
    """

    w1: WeightSpec
    w2: WeightSpec
    k1: float = 0.5
    k2: float = 0.5
    alpha: float = 0.025

    def __post_init__(self) -> None:
        if not (0.0 <= self.k2 <= self.k1 <= 1.0):
            raise ValueError(f"require 0 <= k2 <= k1 <= 1, got k1={self.k1}, k2={self.k2}")
        if abs(self.k1 + self.k2 - 1.0) > 1e-9:
            raise ValueError(f"k1 + k2 must equal 1, got {self.k1 + self.k2}")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"require 0 < alpha < 0.5, got {self.alpha}")


@dataclass(frozen=True)
class ComboResult:
    """Full inference output of a max-combo test on one dataset."""

    z1: float
    z2: float
    correlation: float
    c: float
    threshold1: float
    threshold2: float
    reject: bool
    p_value: float


def _q(x: float) -> float:
    """Standard normal upper tail P(Z > x)."""
    return float(ndtr(-x))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = leggauss(n)
    return _GL_CACHE[n]


def _middle_integral(lo: float, hi: float, b: float, rho: float, s: float) -> float:
    """Refined quadrature of the conditional-tail integrand over the transition band.

    Starts from at least 64 nodes with panel width tied to the transition
    scale s/|rho| and doubles the panel count until two successive levels
    agree to _QUAD_TOL.
    """
    if hi <= lo:
        return 0.0
    gx, gw = _gl_rule(16)
    width = min(0.5, 0.5 * s / abs(rho))
    n_panels = max(4, int(math.ceil((hi - lo) / width)))
    previous = None
    for _ in range(9):
        edges = np.linspace(lo, hi, n_panels + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (hi - lo) / n_panels
        x = (centers[:, None] + half * gx[None, :]).ravel()
        f = np.exp(-0.5 * x * x) / _SQRT_2PI * ndtr(-(b - rho * x) / s)
        value = half * float(np.dot(f, np.tile(gw, n_panels)))
        if previous is not None and abs(value - previous) <= _QUAD_TOL * max(1.0, abs(value)):
            return value
        previous = value
        n_panels *= 2
    raise NumericalError("bvn quadrature failed to converge")


def bvn_upper(a: float, b: float, rho: float) -> float:
    """P(X > a, Y > b) for a standard bivariate normal with correlation rho.

    Computed by reducing to a one-dimensional integral of the conditional
    normal tail over the transition band, with exact normal-tail pieces
    outside the band. Absolute error is well below 1e-10.
    """
    if math.isnan(rho) or not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    if a == math.inf or b == math.inf:
        return 0.0
    if a == -math.inf and b == -math.inf:
        return 1.0
    if a == -math.inf:
        return _q(b)
    if b == -math.inf:
        return _q(a)
    if rho == 1.0:
        return _q(max(a, b))
    if rho == -1.0:
        # Y = -X: the event is a < X < -b
        return max(0.0, float(ndtr(-b) - ndtr(a)))
    if rho == 0.0:
        return _q(a) * _q(b)

    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    edge_lo = (b - _TAIL_Z * s) / rho
    edge_hi = (b + _TAIL_Z * s) / rho
    x1, x2 = min(edge_lo, edge_hi), max(edge_lo, edge_hi)

    mid_lo = min(max(max(a, x1), -_FAR_X), _FAR_X)
    mid_hi = min(max(max(a, x2), -_FAR_X), _FAR_X)
    middle = _middle_integral(mid_lo, mid_hi, b, rho, s)

    if rho > 0.0:
        # conditional tail ~1 above the band
        value = middle + _q(max(a, x2))
    else:
        # conditional tail ~1 below the band
        value = (_q(a) - _q(max(a, x1))) + middle
    return min(1.0, max(0.0, value))


def union_tail(t1: float, t2: float, rho: float) -> float:
    """P(Z1 > t1 or Z2 > t2) under the standard bivariate normal null."""
    return min(1.0, max(0.0, _q(t1) + _q(t2) - bvn_upper(t1, t2, rho)))


def null_correlation(
    w1: WeightSpec, w2: WeightSpec, table: Sequence[RiskTableRow]
) -> float:
    """Null correlation of the two standardized statistics on one risk table.

    This is the weighted cross-sum of per-time variances over the geometric
    mean of the two component variances.
    """
    risk = rows_to_arrays(table)
    _, var = moment_arrays(risk)
    wa = weights_from_km_left(w1, risk.km_left)
    wb = weights_from_km_left(w2, risk.km_left)
    return _correlation_from_arrays(wa, wb, var)


def _correlation_from_arrays(wa: np.ndarray, wb: np.ndarray, var: np.ndarray) -> float:
    va = _acc_sum(wa * wa * var)
    vb = _acc_sum(wb * wb * var)
    if va <= 0.0 or vb <= 0.0:
        raise NumericalError("degenerate variance")
    return _acc_sum(wa * wb * var) / math.sqrt(va * vb)


def _solve_decreasing(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Root of a decreasing function, bracket expanded geometrically from [lo, hi]."""
    flo = f(lo)
    fhi = f(hi)
    expansions = 0
    while flo * fhi > 0.0:
        expansions += 1
        if expansions > 20:
            raise NumericalError("critical value search failed")
        lo, hi = hi, lo + (hi - lo) * 2.0
        flo, fhi = fhi, f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    return float(bisect(f, lo, hi, xtol=1e-12, maxiter=200))


def critical_values(spec: ComboSpec, correlation: float) -> tuple[float, float, float]:
    """(c, threshold1, threshold2) for the max-combo test at level ``spec.alpha``.

    Equal split solves P(max(Z1, Z2) > c) = alpha with both thresholds
    equal to c. Unequal split solves for the common scaling c applied to
    the per-component quantiles ndtri(1 - k_i * alpha). With k2 = 0 the
    test degenerates: threshold1 = ndtri(1 - alpha), threshold2 = +inf.
    """
    if math.isnan(correlation) or not 0.0 <= correlation <= 1.0:
        raise ValueError(f"correlation must lie in [0, 1], got {correlation}")
    alpha = spec.alpha
    if spec.k2 == 0.0:
        return 1.0, float(ndtri(1.0 - alpha)), math.inf
    if spec.k1 == spec.k2:
        c = _solve_decreasing(lambda t: union_tail(t, t, correlation) - alpha, 0.0, 10.0)
        return c, c, c
    q1 = float(ndtri(1.0 - spec.k1 * alpha))
    q2 = float(ndtri(1.0 - spec.k2 * alpha))
    c = _solve_decreasing(
        lambda t: union_tail(t * q1, t * q2, correlation) - alpha, 0.0, 10.0
    )
    return c, c * q1, c * q2


def combo_reject(spec: ComboSpec, z1: float, z2: float, correlation: float) -> bool:
    """Rejection decision at level ``spec.alpha``, without solving for thresholds.

    Uses the monotone equivalence: z exceeds its threshold iff the union
    tail evaluated at the observed statistics (scaled onto the component
    quantiles) falls below alpha. Agrees with critical_values up to root
    tolerance at the boundary.
    """
    if spec.k2 == 0.0:
        return z1 > float(ndtri(1.0 - spec.alpha))
    if spec.k1 == spec.k2:
        zmax = max(z1, z2)
        return union_tail(zmax, zmax, correlation) < spec.alpha
    q1 = float(ndtri(1.0 - spec.k1 * spec.alpha))
    q2 = float(ndtri(1.0 - spec.k2 * spec.alpha))
    m = max(z1 / q1, z2 / q2)
    return union_tail(m * q1, m * q2, correlation) < spec.alpha


def combo_pvalue(spec: ComboSpec, z1: float, z2: float, correlation: float) -> float:
    """Smallest level at which the test would reject the observed statistics.

    For the equal split this is the union tail at max(z1, z2) evaluated
    directly; for unequal splits it is found by bisection over the level,
    to absolute tolerance 1e-10, clamped to (1e-12, 0.5].
    """
    if math.isnan(correlation) or not 0.0 <= correlation <= 1.0:
        raise ValueError(f"correlation must lie in [0, 1], got {correlation}")
    if spec.k2 == 0.0:
        return _clamp_p(_q(z1))
    if spec.k1 == spec.k2:
        zmax = max(z1, z2)
        return _clamp_p(union_tail(zmax, zmax, correlation))

    def rejects(alpha: float) -> bool:
        q1 = float(ndtri(1.0 - spec.k1 * alpha))
        q2 = float(ndtri(1.0 - spec.k2 * alpha))
        m = max(z1 / q1, z2 / q2)
        return union_tail(m * q1, m * q2, correlation) <= alpha

    lo, hi = 1e-12, 0.5
    if rejects(lo):
        return lo
    if not rejects(hi):
        return hi
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if rejects(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _clamp_p(p: float) -> float:
    return min(max(p, 1e-300), 1.0 - 1e-16)


def run_combo_test(spec: ComboSpec, table: Sequence[RiskTableRow]) -> ComboResult:
    """Run the full max-combo test on one risk table."""
    risk = rows_to_arrays(table)
    mean, var = moment_arrays(risk)
    wa = weights_from_km_left(spec.w1, risk.km_left)
    wb = weights_from_km_left(spec.w2, risk.km_left)
    _, _, z1 = statistic_from_arrays(wa, risk, mean, var)
    _, _, z2 = statistic_from_arrays(wb, risk, mean, var)
    correlation = _correlation_from_arrays(wa, wb, var)
    if correlation < 0.0:
        warnings.warn(
            f"estimated correlation {correlation:.6f} is negative; clamping to 0",
            RuntimeWarning,
            stacklevel=2,
        )
        correlation = 0.0
    correlation = min(correlation, 1.0)
    c, t1, t2 = critical_values(spec, correlation)
    return ComboResult(
        z1=z1,
        z2=z2,
        correlation=correlation,
        c=c,
        threshold1=t1,
        threshold2=t2,
        reject=bool(z1 > t1 or z2 > t2),
        p_value=combo_pvalue(spec, z1, z2, correlation),
    )
