"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written in a different style from the
package internals: pure-Python loops over per-subject dictionaries, exact
combinatorics via math.comb, and generic scipy quadrature. Slow is fine.
"""

import math
from collections import Counter

import numpy as np
from scipy import integrate


def risk_table_oracle(time, event, arm):
    """Per-event-time summaries computed by explicit counting.

    Returns a list of dicts with keys tau, n, n1, d, d1, km_left, in
    ascending tau order. km_left is the pooled Kaplan-Meier estimate just
    before tau.
    """
    subjects = list(zip(time, event, arm))
    taus = sorted({t for t, e, _ in subjects if e})
    rows = []
    surv = 1.0
    for tau in taus:
        n = sum(1 for t, _, _ in subjects if t >= tau)
        n1 = sum(1 for t, _, a in subjects if t >= tau and a == 1)
        d = sum(1 for t, e, _ in subjects if t == tau and e)
        d1 = sum(1 for t, e, a in subjects if t == tau and e and a == 1)
        rows.append({"tau": tau, "n": n, "n1": n1, "d": d, "d1": d1, "km_left": surv})
        surv *= 1.0 - d / n
    return rows


def weighted_logrank_oracle(time, event, arm, weight_of_km):
    """(g, variance, z) with weights given as a function of km_left.

    g sums w * (observed - expected) arm-1 events; z is the standardized
    statistic oriented so that fewer arm-1 events than expected gives
    z > 0 (arm 1 benefit).
    """
    g_terms, v_terms = [], []
    for row in risk_table_oracle(time, event, arm):
        w = weight_of_km(row["km_left"])
        n, n1, d, d1 = row["n"], row["n1"], row["d"], row["d1"]
        expected = n1 * d / n
        g_terms.append(w * (d1 - expected))
        if n > 1:
            v_terms.append(w * w * n1 * (n - n1) * d * (n - d) / (n * n * (n - 1)))
    g = math.fsum(g_terms)
    variance = math.fsum(v_terms)
    z = -g / math.sqrt(variance) if variance > 0.0 else math.nan
    return g, variance, z


def correlation_oracle(time, event, arm, weight1_of_km, weight2_of_km):
    """Null correlation of two weighted statistics by direct triple sum."""
    num, va, vb = [], [], []
    for row in risk_table_oracle(time, event, arm):
        n, n1, d = row["n"], row["n1"], row["d"]
        if n <= 1:
            continue
        v = n1 * (n - n1) * d * (n - d) / (n * n * (n - 1))
        w1 = weight1_of_km(row["km_left"])
        w2 = weight2_of_km(row["km_left"])
        num.append(w1 * w2 * v)
        va.append(w1 * w1 * v)
        vb.append(w2 * w2 * v)
    return math.fsum(num) / math.sqrt(math.fsum(va) * math.fsum(vb))


def bvn_upper_oracle(a, b, rho):
    """P(X > a, Y > b) by 2-D adaptive quadrature of the density.

    The upper limits are truncated at 9 standard deviations, which is far
    below the comparison tolerances used in the tests.
    """
    det = 1.0 - rho * rho

    def density(y, x):
        q = (x * x - 2.0 * rho * x * y + y * y) / det
        return math.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(det))

    value, _ = integrate.dblquad(
        density, a, 9.0, lambda _x: b, lambda _x: 9.0, epsabs=1e-13, epsrel=1e-11
    )
    return value


def hypergeometric_moments_oracle(n, n1, d):
    """Mean and variance of the arm-1 event count by full enumeration.

    The count of arm-1 events among d events drawn without replacement
    from n subjects of which n1 are in arm 1.
    """
    total = math.comb(n, d)
    mean_terms, sq_terms = [], []
    for k in range(max(0, d - (n - n1)), min(n1, d) + 1):
        p = math.comb(n1, k) * math.comb(n - n1, d - k) / total
        mean_terms.append(k * p)
        sq_terms.append(k * k * p)
    mean = math.fsum(mean_terms)
    return mean, math.fsum(sq_terms) - mean * mean


def expected_event_fraction(hazard_survival, study_length, recruit_duration):
    """P(event observed) for one arm: average the survivor function over
    uniform entry and complement.

    hazard_survival: callable t -> S(t) for that arm.
    """
    integral, _ = integrate.quad(
        lambda entry: hazard_survival(study_length - entry) / recruit_duration,
        0.0,
        recruit_duration,
        epsabs=1e-12,
    )
    return 1.0 - integral


def random_dataset(rng, max_n=50):
    """Small random two-arm dataset with ties, for oracle comparisons.

    Integer-valued times force heavy tying; both arms and at least one
    event are guaranteed.
    """
    while True:
        n = int(rng.integers(4, max_n + 1))
        time = rng.integers(1, 9, size=n).astype(float)
        event = (rng.random(n) < 0.7).astype(int)
        arm = (rng.random(n) < 0.5).astype(int)
        counts = Counter(arm.tolist())
        if event.sum() > 0 and counts[0] > 0 and counts[1] > 0:
            return time, event, arm


def constant_weight(_km):
    return 1.0


def modest_weight(s_star):
    return lambda km: 1.0 / max(km, s_star)


def fleming_harrington_weight(rho, gamma):
    def w(km):
        lead = 1.0 if rho == 0.0 else km**rho
        tail = 1.0 if gamma == 0.0 else (1.0 - km) ** gamma
        return lead * tail

    return w
