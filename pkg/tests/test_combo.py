"""Tests for the bivariate-normal kernel and max-combo inference."""

import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import ndtr, ndtri

import rmwtest.combo as combo_module
from rmwtest.combo import (
    ComboSpec,
    bvn_upper,
    combo_pvalue,
    combo_reject,
    critical_values,
    null_correlation,
    run_combo_test,
    union_tail,
)
from rmwtest.dataset import SurvivalRecord, build_risk_table
from rmwtest.errors import NumericalError
from rmwtest.simulator import BUILTIN_SCENARIOS, simulate_trial
from rmwtest.weights import WeightSpec

from oracles import (
    bvn_upper_oracle,
    constant_weight,
    correlation_oracle,
    fleming_harrington_weight,
    modest_weight,
    random_dataset,
)

LR = WeightSpec.constant()
MW = WeightSpec.modest(0.5)
FH = WeightSpec.fleming_harrington(0, 0.5)


class TestComboSpec:
    def test_defaults(self):
        spec = ComboSpec(LR, MW)
        assert spec.k1 == spec.k2 == 0.5
        assert spec.alpha == 0.025

    @pytest.mark.parametrize("k1,k2", [(0.4, 0.6), (1.1, -0.1), (0.3, 0.3)])
    def test_k_ordering_and_sum(self, k1, k2):
        with pytest.raises(ValueError):
            ComboSpec(LR, MW, k1=k1, k2=k2)

    @pytest.mark.parametrize("alpha", [0.0, 0.5, -0.01, 1.0])
    def test_alpha_open_interval(self, alpha):
        with pytest.raises(ValueError):
            ComboSpec(LR, MW, alpha=alpha)

    def test_single_test_encoding(self):
        spec = ComboSpec(LR, LR, k1=1.0, k2=0.0)
        assert spec.k2 == 0.0


class TestBvnUpper:
    def test_independence_factorizes(self):
        assert bvn_upper(0.3, -1.2, 0.0) == pytest.approx(
            ndtr(-0.3) * ndtr(1.2), abs=1e-15
        )

    def test_quadrant_closed_form(self):
        """P(X>0, Y>0) = 1/4 + asin(rho)/(2 pi)."""
        for rho in (-0.999999, -0.6, -0.2, 0.1, 0.5, 0.94, 0.999999):
            want = 0.25 + math.asin(rho) / (2.0 * math.pi)
            assert_allclose(bvn_upper(0.0, 0.0, rho), want, atol=1e-12)

    def test_perfect_correlation(self):
        assert bvn_upper(1.0, 2.0, 1.0) == pytest.approx(ndtr(-2.0), abs=1e-15)
        # Y = -X: event becomes a < X < -b
        assert bvn_upper(-1.0, -2.0, -1.0) == pytest.approx(ndtr(2.0) - ndtr(-1.0), abs=1e-15)
        assert bvn_upper(1.0, 0.0, -1.0) == 0.0

    def test_infinite_arguments(self):
        assert bvn_upper(math.inf, 0.0, 0.5) == 0.0
        assert bvn_upper(0.0, math.inf, 0.5) == 0.0
        assert bvn_upper(-math.inf, 1.3, 0.5) == pytest.approx(ndtr(-1.3), abs=1e-15)
        assert bvn_upper(-math.inf, -math.inf, 0.5) == 1.0

    def test_against_adaptive_quadrature(self):
        pts = [
            (0.5, 0.5, 0.9), (2.0, 2.0, 0.94), (1.0, -1.0, -0.5),
            (-2.0, 0.3, 0.7), (2.5, 1.5, 0.99), (0.0, 1.0, -0.99),
            (1.7, 2.3, 0.3), (-0.4, -0.9, 0.5),
        ]
        for a, b, rho in pts:
            assert_allclose(
                bvn_upper(a, b, rho), bvn_upper_oracle(a, b, rho), atol=1e-10,
                err_msg=f"bvn_upper({a}, {b}, {rho})",
            )

    def test_symmetry_in_arguments(self):
        assert bvn_upper(0.7, 1.9, 0.8) == pytest.approx(bvn_upper(1.9, 0.7, 0.8), abs=1e-13)

    @pytest.mark.parametrize("rho", [-1.0001, 1.0001, math.nan])
    def test_invalid_correlation(self, rho):
        with pytest.raises(ValueError):
            bvn_upper(0.0, 0.0, rho)

    def test_union_tail_complements(self):
        """P(Z1>t or Z2>t) + P(both <= t) = 1 (via the oracle for the joint CDF)."""
        t, rho = 1.3, 0.6
        both_low = 1.0 - 2.0 * ndtr(-t) + bvn_upper_oracle(t, t, rho)
        assert_allclose(union_tail(t, t, rho), 1.0 - both_low, atol=1e-10)


class TestNullCorrelation:
    def test_self_correlation_is_one(self):
        records = simulate_trial(BUILTIN_SCENARIOS["high_equal"], seed=4)
        table = build_risk_table(records)
        assert null_correlation(MW, MW, table) == pytest.approx(1.0, abs=1e-12)

    def test_matches_triple_sum_oracle(self):
        rng = np.random.default_rng(17)
        pairs = [
            (LR, MW, constant_weight, modest_weight(0.5)),
            (LR, FH, constant_weight, fleming_harrington_weight(0, 0.5)),
            (MW, FH, modest_weight(0.5), fleming_harrington_weight(0, 0.5)),
        ]
        for _ in range(50):
            time, event, arm = random_dataset(rng)
            table = build_risk_table(
                [SurvivalRecord(t, e, a) for t, e, a in zip(time, event, arm)]
            )
            for w1, w2, f1, f2 in pairs:
                try:
                    got = null_correlation(w1, w2, table)
                except NumericalError:
                    continue
                want = correlation_oracle(time, event, arm, f1, f2)
                assert_allclose(got, want, atol=1e-12)

    def test_nonnegative_for_supported_families(self):
        records = simulate_trial(BUILTIN_SCENARIOS["high_delayed"], seed=12)
        table = build_risk_table(records)
        for w2 in (MW, FH):
            rho = null_correlation(LR, w2, table)
            assert 0.0 <= rho <= 1.0


class TestCriticalValues:
    def test_perfect_correlation_collapses_to_single_test(self):
        spec = ComboSpec(LR, MW, 0.5, 0.5, alpha=0.025)
        c, t1, t2 = critical_values(spec, 1.0)
        assert_allclose(c, ndtri(0.975), atol=1e-9)
        assert t1 == t2 == c

    def test_independence_closed_form(self):
        """At rho = 0: 1 - (1 - Q(c))^2 = alpha, i.e. c = ndtri(sqrt(1 - alpha))."""
        spec = ComboSpec(LR, MW, 0.5, 0.5, alpha=0.025)
        c, _, _ = critical_values(spec, 0.0)
        assert_allclose(c, ndtri(math.sqrt(0.975)), atol=1e-9)

    def test_single_test_degenerates(self):
        spec = ComboSpec(LR, LR, k1=1.0, k2=0.0, alpha=0.025)
        c, t1, t2 = critical_values(spec, 0.4)
        assert c == 1.0
        assert_allclose(t1, ndtri(0.975), atol=1e-12)
        assert t2 == math.inf

    def test_solution_satisfies_defining_equation(self):
        for rho in (0.0, 0.3, 0.7, 0.94, 0.99):
            spec = ComboSpec(LR, MW, 0.5, 0.5, alpha=0.025)
            c, _, _ = critical_values(spec, rho)
            assert_allclose(union_tail(c, c, rho), 0.025, atol=1e-9)
            uneq = ComboSpec(LR, MW, 0.6, 0.4, alpha=0.025)
            _, t1, t2 = critical_values(uneq, rho)
            assert_allclose(union_tail(t1, t2, rho), 0.025, atol=1e-9)

    def test_unequal_split_orders_thresholds(self):
        """More alpha on component 1 lowers its threshold below component 2's."""
        spec = ComboSpec(LR, MW, 0.6, 0.4, alpha=0.025)
        _, t1, t2 = critical_values(spec, 0.9)
        assert t1 < t2

    def test_decreasing_in_alpha(self):
        rho = 0.9
        cs = [
            critical_values(ComboSpec(LR, MW, 0.5, 0.5, alpha=a), rho)[0]
            for a in (0.005, 0.01, 0.025, 0.05, 0.1)
        ]
        assert all(a > b for a, b in zip(cs, cs[1:]))

    def test_decreasing_in_correlation(self):
        spec = ComboSpec(LR, MW, 0.5, 0.5, alpha=0.025)
        cs = [critical_values(spec, rho)[0] for rho in (0.0, 0.25, 0.5, 0.75, 0.95, 1.0)]
        assert all(a > b for a, b in zip(cs, cs[1:]))

    def test_invalid_correlation_rejected(self):
        spec = ComboSpec(LR, MW)
        with pytest.raises(ValueError):
            critical_values(spec, -0.2)
        with pytest.raises(ValueError):
            critical_values(spec, 1.2)


class TestComboPvalue:
    def test_single_test_is_normal_tail(self):
        spec = ComboSpec(LR, LR, k1=1.0, k2=0.0)
        assert_allclose(combo_pvalue(spec, 1.96, 0.0, 0.5), ndtr(-1.96), rtol=1e-12)

    def test_equal_split_is_union_at_max(self):
        spec = ComboSpec(LR, MW, 0.5, 0.5)
        z1, z2, rho = 1.4, 2.1, 0.9
        assert combo_pvalue(spec, z1, z2, rho) == pytest.approx(
            union_tail(2.1, 2.1, rho), abs=1e-14
        )

    def test_unequal_p_matches_critical_value_search(self):
        """At level p, the larger scaled statistic sits exactly on its threshold."""
        spec = ComboSpec(LR, MW, 0.6, 0.4, alpha=0.025)
        z1, z2, rho = 2.2, 1.7, 0.95
        p = combo_pvalue(spec, z1, z2, rho)
        at_level_p = ComboSpec(LR, MW, 0.6, 0.4, alpha=p)
        _, t1, t2 = critical_values(at_level_p, rho)
        assert min(t1 - z1, t2 - z2) == pytest.approx(0.0, abs=1e-6)

    def test_p_and_reject_agree(self):
        rng = np.random.default_rng(5)
        specs = [
            ComboSpec(LR, MW, 0.5, 0.5),
            ComboSpec(LR, MW, 0.6, 0.4),
            ComboSpec(LR, FH, 0.75, 0.25),
        ]
        for _ in range(60):
            z1, z2 = rng.normal(1.9, 0.5, size=2)
            rho = rng.uniform(0.2, 0.99)
            for spec in specs:
                p = combo_pvalue(spec, z1, z2, rho)
                if abs(p - spec.alpha) > 1e-7:  # stay off the root tolerance
                    assert (p < spec.alpha) == combo_reject(spec, z1, z2, rho)

    def test_monotone_in_evidence(self):
        spec = ComboSpec(LR, MW, 0.6, 0.4)
        ps = [combo_pvalue(spec, z, z - 0.4, 0.9) for z in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)]
        assert all(a > b for a, b in zip(ps, ps[1:]))

    def test_weak_evidence_tops_out_at_half(self):
        spec = ComboSpec(LR, MW, 0.6, 0.4)
        assert combo_pvalue(spec, -3.0, -3.0, 0.9) == 0.5


class TestRunComboTest:
    def test_fields_cohere_on_simulated_data(self):
        records = simulate_trial(BUILTIN_SCENARIOS["high_delayed"], seed=3)
        table = build_risk_table(records)
        spec = ComboSpec(LR, MW, 0.5, 0.5, alpha=0.025)
        res = run_combo_test(spec, table)
        assert 0.0 <= res.correlation <= 1.0
        assert res.threshold1 == res.threshold2 == res.c
        assert res.reject == (res.z1 > res.threshold1 or res.z2 > res.threshold2)
        assert res.reject == (res.p_value < spec.alpha)
        assert 0.0 < res.p_value < 1.0

    def test_single_test_matches_wlrt(self):
        from rmwtest.wlrt import one_sided_p, weighted_logrank

        records = simulate_trial(BUILTIN_SCENARIOS["high_ph"], seed=8)
        table = build_risk_table(records)
        res = run_combo_test(ComboSpec(MW, MW, k1=1.0, k2=0.0), table)
        ref = weighted_logrank(MW, table)
        assert_allclose(res.z1, ref.z, rtol=1e-14)
        assert_allclose(res.p_value, one_sided_p(ref.z), rtol=1e-12)

    def test_negative_correlation_clamped_with_warning(self, monkeypatch):
        """Anti-correlated weight vectors trip the clamp (impossible with the
        built-in nonnegative families, so inject a signed weight vector)."""
        records = simulate_trial(BUILTIN_SCENARIOS["high_equal"], seed=6)
        table = build_risk_table(records)
        real = combo_module.weights_from_km_left
        state = {"calls": 0}

        def signed(spec, km_left):
            state["calls"] += 1
            w = real(spec, km_left)
            return -w if state["calls"] % 2 == 0 else w

        monkeypatch.setattr(combo_module, "weights_from_km_left", signed)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = run_combo_test(ComboSpec(LR, MW, 0.5, 0.5), table)
        assert res.correlation == 0.0
        assert any("clamping" in str(w.message) for w in caught)
