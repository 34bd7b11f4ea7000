import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from emp.bounds import (
    LossBoundInputs,
    approx_upper_gap,
    bound_report,
    epsilon_bound_asymptotic,
    epsilon_bound_lemma,
    exact_gap_bound,
    tight_lower_bound,
    trivial_bound,
)
from emp.core import emp_decide
from emp.errors import DomainError, MissingDeltaTheta


class TestTightLowerBound:
    def test_four_two(self):
        assert_allclose(tight_lower_bound(4, 2), 2 / 3, rtol=0, atol=1e-15)

    def test_four_three_radical_vanishes(self):
        assert tight_lower_bound(4, 3) == 0.75

    def test_five_two(self):
        # 0.4 + 0.6*sqrt(1/6), cross-checked by the brute-force oracle in
        # test_simplex / acceptance.
        assert_allclose(tight_lower_bound(5, 2), 0.6449489742783179, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("n", [2, 3, 10, 64, 1000])
    def test_full_keep_is_one(self, n):
        assert tight_lower_bound(n, n) == 1.0

    @pytest.mark.parametrize("n", [2, 5, 100])
    def test_single_keeper_is_half(self, n):
        assert tight_lower_bound(n, 1) == 0.5

    @pytest.mark.parametrize("n,nu", [(1, 1), (4, 0), (4, 5), (0, 0)])
    def test_domain(self, n, nu):
        with pytest.raises(DomainError):
            tight_lower_bound(n, nu)

    def test_dominates_trivial_with_known_equality_cases(self):
        for n in range(2, 65):
            for nu in range(1, n + 1):
                tight = tight_lower_bound(n, nu)
                triv = trivial_bound(n, nu)
                assert tight >= triv - 1e-15, (n, nu)
                if nu in (n - 1, n):
                    assert abs(tight - triv) <= 1e-15, (n, nu)
                else:
                    assert tight > triv + 1e-12, (n, nu)

    def test_shape_over_nu(self):
        # The curve is not monotone: it dips to an interior minimum and
        # then climbs to 1 (verified against the brute-force oracle, e.g.
        # n=10 has 0.6073 at nu=2 above 0.5858 at nu=3).  Assert the real
        # shape: non-decreasing from the interior minimum onward, ending
        # at exactly 1.
        for n in range(3, 65):
            values = [tight_lower_bound(n, nu) for nu in range(2, n + 1)]
            k = int(np.argmin(values))
            tail = values[k:]
            assert all(a <= b + 1e-15 for a, b in zip(tail, tail[1:])), n
            assert values[-1] == 1.0

    def test_documented_dip(self):
        assert tight_lower_bound(10, 2) > tight_lower_bound(10, 3)
        assert_allclose(tight_lower_bound(10, 2), 0.6073400617738525, rtol=0, atol=1e-15)
        assert_allclose(tight_lower_bound(10, 3), 0.5857738033247041, rtol=0, atol=1e-15)


class TestGapBounds:
    def test_exact_gap_four_two(self):
        assert_allclose(exact_gap_bound(4, 2), 1 / 3, rtol=0, atol=1e-15)

    def test_exact_gap_four_three(self):
        assert exact_gap_bound(4, 3) == 0.25

    def test_gap_complements_tight(self):
        for n in range(3, 65):
            for nu in range(2, n):
                assert abs(exact_gap_bound(n, nu) + tight_lower_bound(n, nu) - 1.0) <= 1e-12

    def test_approx_thousand(self):
        assert_allclose(approx_upper_gap(1000, 500), 0.4841886116991581, rtol=0, atol=1e-15)

    def test_approx_four_two(self):
        assert approx_upper_gap(4, 2) == 0.25

    def test_approx_monotone_decreasing_toward_full_keep(self):
        # The gap bound is unimodal in nu; near full keep it decreases to 0.
        for n in (10, 50, 1000):
            tail_start = max(2, int(0.8 * n))
            values = [approx_upper_gap(n, nu) for nu in range(tail_start, n)]
            assert all(a > b for a, b in zip(values, values[1:])), n
            assert values[-1] < 2.0 / n

    def test_gap_vanishes_near_full_keep(self):
        assert exact_gap_bound(1000, 999) < 1.1e-3
        assert approx_upper_gap(1000, 999) < 1.1e-3

    @pytest.mark.parametrize("fn", [exact_gap_bound, approx_upper_gap])
    @pytest.mark.parametrize("n,nu", [(4, 1), (4, 4), (3, 0)])
    def test_domain(self, fn, n, nu):
        with pytest.raises(DomainError):
            fn(n, nu)


class TestBoundReport:
    def test_fields(self):
        rep = bound_report(8, 3, observed_s_eff=0.7)
        assert rep.trivial_bound == 3 / 8
        assert rep.tight_bound == tight_lower_bound(8, 3)
        assert rep.approx_bound == 1.0 - approx_upper_gap(8, 3)
        assert_allclose(rep.slack, 0.7 - rep.tight_bound, rtol=0, atol=1e-15)

    def test_approx_undefined_at_edges(self):
        assert bound_report(8, 1).approx_bound is None
        assert bound_report(8, 8).approx_bound is None

    def test_slack_nonnegative_on_real_decisions(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            s = rng.lognormal(0.0, 1.5, size=rng.integers(2, 40))
            d = emp_decide(s, 1.0)
            rep = bound_report(s.size, d.n_eff, observed_s_eff=d.s_eff)
            assert rep.slack >= -1e-12


class TestLossBounds:
    def test_lemma_formula_value(self):
        # ((1-rho)/(2*N*rho)) * Tr(H) * delta^2 with rho=.5, N=100, Tr=10,
        # delta^2=4 evaluates to 0.2.
        inp = LossBoundInputs(rho=0.5, n=100, trace_h=10.0, delta_theta_sq=4.0)
        assert_allclose(epsilon_bound_lemma(inp), 0.2, rtol=0, atol=1e-15)

    def test_lemma_zero_displacement(self):
        inp = LossBoundInputs(rho=0.5, n=100, trace_h=10.0, delta_theta_sq=0.0)
        assert epsilon_bound_lemma(inp) == 0.0

    def test_lemma_vanishes_as_everything_kept(self):
        inp = LossBoundInputs(rho=1.0 - 1e-9, n=100, trace_h=10.0, delta_theta_sq=4.0)
        assert epsilon_bound_lemma(inp) < 1e-9

    def test_lemma_requires_displacement(self):
        with pytest.raises(MissingDeltaTheta):
            epsilon_bound_lemma(LossBoundInputs(rho=0.5, n=100, trace_h=10.0))

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.5, 1.5])
    def test_rho_domain(self, rho):
        with pytest.raises(DomainError):
            LossBoundInputs(rho=rho, n=100, trace_h=1.0)

    def test_asymptotic_half(self):
        inp = LossBoundInputs(rho=0.5, n=1000, theta_l1=1.0, trace_h=1.0)
        assert_allclose(epsilon_bound_asymptotic(inp), 0.05860965292478953, rtol=0, atol=1e-15)

    def test_asymptotic_point_two(self):
        inp = LossBoundInputs(rho=0.2, n=1000, theta_l1=1.0, trace_h=1.0)
        assert_allclose(epsilon_bound_asymptotic(inp), 0.8985691070395033, rtol=0, atol=1e-14)

    def test_asymptotic_vanishes_at_full_keep(self):
        vals = [
            epsilon_bound_asymptotic(LossBoundInputs(rho=1 - d, n=1000, theta_l1=1.0, trace_h=1.0))
            for d in (1e-2, 1e-4, 1e-6)
        ]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 1e-20

    def test_asymptotic_strictly_decreasing_past_point_two(self):
        # shape of the normalized curve at N=1000: rapid decay in rho
        rhos = np.linspace(0.2, 0.999, 250)
        vals = [
            epsilon_bound_asymptotic(LossBoundInputs(rho=float(r), n=1000, theta_l1=1.0, trace_h=1.0))
            for r in rhos
        ]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_prefactor_scales(self):
        base = LossBoundInputs(rho=0.4, n=500, theta_l1=2.0, trace_h=3.0)
        quad = LossBoundInputs(rho=0.4, n=500, theta_l1=4.0, trace_h=3.0)
        assert_allclose(
            epsilon_bound_asymptotic(quad), 4.0 * epsilon_bound_asymptotic(base), rtol=1e-14
        )

    def test_negative_trace_rejected(self):
        with pytest.raises(DomainError):
            LossBoundInputs(rho=0.5, n=10, trace_h=-1.0)


def test_trivial_bound_is_ratio():
    assert trivial_bound(8, 2) == 0.25
    assert trivial_bound(3, 3) == 1.0


def test_everything_finite_on_wide_grid():
    for n in (2, 3, 17, 256, 4096):
        for nu in (1, 2, n // 2 or 1, n - 1, n):
            if 1 <= nu <= n:
                assert math.isfinite(tight_lower_bound(n, nu))
