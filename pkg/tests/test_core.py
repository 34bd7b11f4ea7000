import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from emp.core import (
    Partition,
    SimplexPoint,
    combine_min,
    combined_mask,
    effective_number,
    emp_decide,
    emp_decide_partitioned,
    normalize,
    partition_sparsity,
    retained_mass,
)
from emp.errors import (
    IndexOutOfRange,
    LengthMismatch,
    NonFiniteScore,
    NonPositiveBeta,
    ZeroScoreVector,
)

finite_scores = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=48,
).filter(lambda xs: any(x != 0.0 for x in xs))


class TestNormalize:
    def test_basic_example(self):
        w = normalize([3, 1, 1, 1])
        assert_allclose(w.weights, [0.5, 1 / 6, 1 / 6, 1 / 6], rtol=0, atol=1e-15)
        assert not w.sorted_descending

    def test_single_nonzero(self):
        assert_array_equal(normalize([1, 0, 0, 0]).weights, [1.0, 0.0, 0.0, 0.0])

    def test_absolute_values(self):
        assert_array_equal(normalize([-2, 2]).weights, [0.5, 0.5])

    def test_keeps_input_order(self):
        w = normalize([1, 5, 2]).weights
        assert w[1] == max(w)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroScoreVector):
            normalize([0.0, 0.0, 0.0])

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(NonFiniteScore):
            normalize([1.0, bad])


class TestSimplexPoint:
    def test_sum_tolerance(self):
        with pytest.raises(ValueError):
            SimplexPoint(np.array([0.6, 0.6]))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            SimplexPoint(np.array([1.2, -0.2]))

    def test_sorted_flag_checked(self):
        with pytest.raises(ValueError):
            SimplexPoint(np.array([0.2, 0.8]), sorted_descending=True)

    def test_sorted_helper(self):
        w = SimplexPoint(np.array([0.2, 0.5, 0.3])).sorted()
        assert w.sorted_descending
        assert_array_equal(w.weights, [0.5, 0.3, 0.2])


class TestEffectiveNumber:
    def test_derived_example(self):
        # sum of squares is 1/3, so the index is 3 (floor guard handles the
        # float landing at 2.9999999999999996)
        assert effective_number(normalize([3, 1, 1, 1])) == 3

    def test_concentrated(self):
        assert effective_number(normalize([1, 0, 0, 0])) == 1

    @pytest.mark.parametrize("n", [2, 3, 6, 7, 17, 64])
    def test_uniform_gives_n(self, n):
        assert effective_number(normalize(np.ones(n))) == n

    def test_dominant_mass_gives_one(self):
        # sum(w^2) > 1/2 forces the index to 1
        w = normalize([0.9, 0.05, 0.05])
        assert float(w.weights @ w.weights) > 0.5
        assert effective_number(w) == 1


class TestRetainedMass:
    def test_derived_example(self):
        assert_allclose(retained_mass(normalize([3, 1, 1, 1]), 3), 5 / 6, rtol=0, atol=1e-15)

    def test_full_mass(self):
        w = normalize([0.3, 1.4, 0.2, 9.0, 2.2])
        assert abs(retained_mass(w, 5) - 1.0) <= 1e-12

    def test_uniform_half(self):
        assert retained_mass(normalize([1, 1, 1, 1]), 2) == 0.5

    def test_unsorted_input_sorted_internally(self):
        assert_allclose(retained_mass(normalize([1, 3, 1, 1]), 1), 0.5, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("k", [0, 5, -1])
    def test_out_of_range(self, k):
        with pytest.raises(IndexOutOfRange):
            retained_mass(normalize([1, 1, 1, 1]), k)


class TestEmpDecide:
    def test_example_beta_one(self):
        d = emp_decide([3, 1, 1, 1], beta=1.0)
        assert d.n_eff == 3
        assert d.keep_count == 3
        assert_allclose(d.s_eff, 5 / 6, rtol=0, atol=1e-15)
        assert_array_equal(d.mask, [True, True, True, False])
        assert_array_equal(d.kept_indices, [0, 1, 2])  # tie resolved to low indices

    def test_example_beta_half(self):
        d = emp_decide([3, 1, 1, 1], beta=0.5)
        assert d.keep_count == 1
        assert d.s_eff == 0.5

    def test_clip_to_n(self):
        d = emp_decide([1, 1], beta=2.0)
        assert d.keep_count == 2
        assert d.s_eff == 1.0

    def test_mask_mass_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = rng.standard_normal(rng.integers(1, 40))
            d = emp_decide(s, beta=float(rng.uniform(0.2, 3.0)))
            assert int(d.mask.sum()) == d.keep_count
            w = normalize(s).weights
            assert abs(float(w[d.kept_indices].sum()) - d.s_eff) <= 1e-12

    def test_kept_dropped_ordering(self):
        rng = np.random.default_rng(1)
        s = rng.standard_normal(25)
        d = emp_decide(s, beta=0.7)
        mag = np.abs(s)
        assert mag[d.mask].min() >= mag[~d.mask].max()

    def test_signs_never_matter(self):
        s = np.array([3.0, -1.0, 1.0, -1.0])
        d_pos = emp_decide(np.abs(s), 1.0)
        d_mix = emp_decide(s, 1.0)
        assert_array_equal(d_pos.mask, d_mix.mask)
        assert d_pos.s_eff == d_mix.s_eff

    @pytest.mark.parametrize("beta", [0.0, -1.0, float("nan")])
    def test_bad_beta(self, beta):
        with pytest.raises(NonPositiveBeta):
            emp_decide([1, 2, 3], beta)

    def test_zero_scores(self):
        with pytest.raises(ZeroScoreVector):
            emp_decide([0, 0], 1.0)

    def test_sparsity(self):
        d = emp_decide([3, 1, 1, 1], beta=1.0)
        assert d.sparsity == 0.25


class TestPartitioned:
    def test_two_group_example(self):
        p = Partition([np.arange(4), np.array([4, 5])])
        decisions = emp_decide_partitioned([3, 1, 1, 1, 5, 5], p, beta=1.0)
        assert [d.keep_count for d in decisions] == [3, 2]
        assert decisions[1].n_eff == 2  # uniform pair
        assert_allclose(partition_sparsity(decisions, 6), 1 - 5 / 6, rtol=0, atol=1e-15)

    def test_single_group_matches_plain(self):
        s = [3.0, 1.0, 4.0, 1.0, 5.0]
        p = Partition([np.arange(5)])
        d_part = emp_decide_partitioned(s, p, 1.0)[0]
        d_plain = emp_decide(s, 1.0)
        assert d_part.keep_count == d_plain.keep_count
        assert_array_equal(d_part.mask, d_plain.mask)
        assert d_part.s_eff == d_plain.s_eff

    def test_singletons_keep_everything(self):
        p = Partition([np.array([i]) for i in range(4)])
        decisions = emp_decide_partitioned([5.0, 0.1, 2.0, 9.0], p, 1.0)
        assert partition_sparsity(decisions, 4) == 0.0

    def test_zero_group_tagged(self):
        p = Partition([np.array([0, 1]), np.array([2, 3])])
        with pytest.raises(ZeroScoreVector) as excinfo:
            emp_decide_partitioned([1.0, 1.0, 0.0, 0.0], p, 1.0)
        assert excinfo.value.group == 1
        assert "group 1" in str(excinfo.value)

    def test_length_mismatch(self):
        p = Partition([np.arange(4)])
        with pytest.raises(LengthMismatch):
            emp_decide_partitioned([1.0, 2.0], p, 1.0)

    def test_combined_mask(self):
        p = Partition([np.array([3, 4, 5]), np.array([0, 1, 2])])
        decisions = emp_decide_partitioned([9, 9, 1, 7, 1, 1], p, 0.5)
        mask = combined_mask(decisions, p)
        expected = np.zeros(6, dtype=bool)
        expected[p.groups[0][decisions[0].kept_indices]] = True
        expected[p.groups[1][decisions[1].kept_indices]] = True
        assert_array_equal(mask, expected)


class TestPartitionValidation:
    def test_from_sizes(self):
        p = Partition.from_sizes([4, 2])
        assert [g.size for g in p.groups] == [4, 2]
        assert p.n == 6

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            Partition([np.array([0, 1]), np.array([1, 2])])

    def test_gap_rejected(self):
        with pytest.raises(ValueError):
            Partition([np.array([0, 1]), np.array([3])])

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            Partition([np.array([0]), np.array([], dtype=int)])


class TestCombineMin:
    def test_elementwise(self):
        assert_array_equal(combine_min([3, 1], [2, 5]), [2, 1])

    def test_idempotent_on_magnitudes(self):
        x = np.array([-3.0, 2.0, 0.5])
        assert_array_equal(combine_min(x, x), np.abs(x))

    def test_zero_propagates_to_decision_error(self):
        s = combine_min([0, 4], [1, 0])
        assert_array_equal(s, [0, 0])
        with pytest.raises(ZeroScoreVector):
            emp_decide(s, 1.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            combine_min([1, 2], [1, 2, 3])


class TestProperties:
    @given(finite_scores, st.randoms(use_true_random=False))
    def test_permutation_invariance(self, xs, rnd):
        s = np.array(xs)
        perm = list(range(len(s)))
        rnd.shuffle(perm)
        permuted = s[np.array(perm, dtype=int)]
        assert effective_number(normalize(permuted)) == effective_number(normalize(s))
        d1, d2 = emp_decide(s, 1.0), emp_decide(permuted, 1.0)
        assert d1.keep_count == d2.keep_count
        assert abs(d1.s_eff - d2.s_eff) <= 1e-12

    @given(finite_scores, st.sampled_from([0.25, 0.5, 2.0, -4.0, -0.5, 8.0]))
    def test_scale_invariance_exact_for_pow2(self, xs, c):
        # Power-of-two scaling is exact in binary floating point, so every
        # field of the decision must match bit for bit.
        s = np.array(xs)
        d1, d2 = emp_decide(s, 1.0), emp_decide(c * s, 1.0)
        assert d1.keep_count == d2.keep_count
        assert d1.n_eff == d2.n_eff
        assert_array_equal(d1.kept_indices, d2.kept_indices)
        assert d1.s_eff == d2.s_eff

    @given(finite_scores)
    def test_trivial_bound_exact(self, xs):
        d = emp_decide(np.array(xs), 1.0)
        assert d.s_eff >= d.n_eff / len(xs)

    @given(finite_scores)
    def test_range(self, xs):
        n_eff = effective_number(normalize(xs))
        assert 1 <= n_eff <= len(xs)

    @given(finite_scores)
    def test_beta_monotonicity(self, xs):
        s = np.array(xs)
        counts = [emp_decide(s, b).keep_count for b in (0.25, 0.5, 1.0, 1.5, 2.0, 4.0)]
        assert counts == sorted(counts)

    @given(st.integers(min_value=2, max_value=64))
    def test_uniform_iff_n(self, n):
        assert effective_number(normalize(np.ones(n))) == n
        # a visible perturbation must drop the index below n
        bumped = np.ones(n)
        bumped[0] = 2.0
        assert effective_number(normalize(bumped)) < n

    def test_determinism(self):
        s = np.random.default_rng(5).standard_normal(30)
        a, b = emp_decide(s, 1.3), emp_decide(s, 1.3)
        assert a.s_eff == b.s_eff
        assert_array_equal(a.mask, b.mask)


class TestFloorGuard:
    def test_near_integer_from_below_rounds_up(self):
        # (0.5, 1/6, 1/6, 1/6) lands at 2.9999999999999996 in floats; the
        # true value is exactly 3,so the guard must rescue the floor.
        w = normalize([3.0, 1.0, 1.0, 1.0])
        inv = 1.0 / float(w.weights @ w.weights)
        assert inv < 3.0
        assert effective_number(w) == 3

    def test_guard_does_not_overshoot(self):
        # 1/sum(w^2) genuinely below the next integer stays floored.
        w = normalize([2.0, 1.0, 1.0])  # inverse index = 8/3 = 2.67
        assert effective_number(w) == 2

    def test_beta_product(self):
        # keep_count floor also uses the guard: 0.75 * 4 is exactly 3.
        s = np.ones(4)
        assert emp_decide(s, 0.75).keep_count == 3
        assert emp_decide(s, 0.74).keep_count == 2


def test_scorevector_must_be_nonempty():
    with pytest.raises(ValueError):
        normalize([])


def test_combine_min_rejects_non_finite():
    with pytest.raises(NonFiniteScore):
        combine_min([1.0, math.nan], [1.0, 2.0])
