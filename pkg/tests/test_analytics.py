import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smpsim import analytics as A

from oracles import (
    binomial_cdf_direct,
    binomial_pmf_direct,
    comparison_direct,
    comparison_fraction,
    normal_cdf_quadrature,
)

# Frozen reference values, computed independently with 40-digit arithmetic.
PROP1_100_50 = 1.290950527245596e-3
PROP1_1E4_1E3 = 4.264626373434225e-18
PROP4_100_30 = 2.468196081733591e-4
PROP4_1E4_1E3 = 7.440151952041672e-44
PROP5_1E6_328 = 2.1245436915894767e-48
PHI_SQRT2 = 0.9213503964748574
KL_HALF_QUARTER = 0.14384103622589046


class TestBinomialLogPmf:
    def test_examples(self):
        assert A.binomial_log_pmf(2, 0.5, 1) == pytest.approx(math.log(0.5), abs=1e-14)
        assert A.binomial_log_pmf(4, 0.5, 2) == pytest.approx(math.log(0.375), abs=1e-14)
        assert A.binomial_log_pmf(3, 0.0, 0) == 0.0
        assert A.binomial_log_pmf(3, 0.0, 2) == -math.inf
        assert A.binomial_log_pmf(3, 1.0, 3) == 0.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            A.binomial_log_pmf(3, 0.5, 4)
        with pytest.raises(ValueError):
            A.binomial_log_pmf(3, 0.5, -1)
        with pytest.raises(ValueError):
            A.binomial_log_pmf(3, 1.5, 1)

    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.77, 0.99])
    @pytest.mark.parametrize("m", [1, 2, 7, 12])
    def test_against_direct_combinatorics(self, m, p):
        for k in range(m + 1):
            direct = binomial_pmf_direct(m, p, k)
            assert math.exp(A.binomial_log_pmf(m, p, k)) == pytest.approx(direct, rel=1e-12)

    def test_pmf_sums_to_one(self):
        # the log-factorial table carries absolute error ~ m log(m) * eps,
        # so the achievable relative accuracy degrades slowly with m
        for m, p, tol in [(10, 0.5, 1e-14), (1000, 0.3, 1e-12), (20_000, 0.9, 1e-10)]:
            total = np.exp(A._log_pmf_array(m, p)).sum()
            assert total == pytest.approx(1.0, rel=tol)


class TestBinomialLogCdf:
    def test_examples(self):
        assert A.binomial_log_cdf(5, 0.3, 5) == 0.0
        assert A.binomial_log_cdf(1, 0.5, 0) == pytest.approx(math.log(0.5), abs=1e-14)
        assert A.binomial_log_cdf(2, 0.5, 1) == pytest.approx(math.log(0.75), abs=1e-14)
        assert A.binomial_log_cdf(4, 0.2, -1) == -math.inf
        assert A.binomial_log_cdf(4, 0.2, 9) == 0.0

    @pytest.mark.parametrize("m,p", [(6, 0.25), (11, 0.6), (3, 0.5)])
    def test_against_direct(self, m, p):
        for k in range(m + 1):
            assert math.exp(A.binomial_log_cdf(m, p, k)) == pytest.approx(
                binomial_cdf_direct(m, p, k), rel=1e-12
            )


class TestComparisonProbability:
    def test_examples(self):
        assert A.comparison_probability(0, 0, 0.5, 0) == 1.0
        assert A.comparison_probability(1, 2, 0.5, 1) == pytest.approx(0.875, abs=1e-13)
        assert A.comparison_probability(0, 1, 0.5, 0) == pytest.approx(0.5, abs=1e-13)

    @pytest.mark.parametrize("p", [0.5, 0.3, 0.9])
    def test_exhaustive_small_systems(self, p):
        for m1 in range(0, 9):
            for m2 in range(0, 9):
                if m1 + m2 > 16:
                    continue
                for offset in (-2, -1, 0, 1, 2):
                    got = A.comparison_probability(m1, m2, p, offset)
                    want = comparison_direct(m1, m2, p, offset)
                    assert got == pytest.approx(want, abs=1e-12), (m1, m2, p, offset)

    def test_exact_rational_oracle(self):
        got = A.comparison_probability(5, 7, 0.5, 1)
        want = comparison_fraction(5, 7, Fraction(1, 2), 1)
        assert got == pytest.approx(float(want), rel=1e-13)

    def test_short_circuits_exact(self):
        assert A.comparison_probability(3, 2, 0.37, 2) == 1.0
        assert A.comparison_probability(3, 0, 0.37, 0) == 1.0
        assert A.comparison_probability(3, 9, 0.37, -4) == 0.0

    def test_degenerate_p(self):
        assert A.comparison_probability(4, 4, 0.0, 0) == 1.0
        assert A.comparison_probability(4, 4, 1.0, 0) == 1.0
        assert A.comparison_probability(4, 4, 1.0, -1) == 0.0

    @given(
        m1=st.integers(0, 6),
        m2=st.integers(0, 6),
        offsets=st.tuples(st.integers(-3, 3), st.integers(-3, 3)),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_offset(self, m1, m2, offsets):
        lo, hi = min(offsets), max(offsets)
        assert A.comparison_probability(m1, m2, 0.4, lo) <= A.comparison_probability(
            m1, m2, 0.4, hi
        ) + 1e-13


class TestTransitionProbabilities:
    def test_keep_examples(self):
        assert A.keep_zero_probability(1, 1, 0.5) == 1.0
        assert A.keep_zero_probability(2, 2, 0.5) == pytest.approx(0.875, abs=1e-13)
        for n in (1, 5, 40, 200):
            assert A.keep_zero_probability(n, n, 0.5) >= 0.5

    def test_adopt_examples(self):
        assert A.adopt_zero_probability(1, 1, 0.5) == 0.0
        assert A.adopt_zero_probability(0, 5, 0.3) == 0.0
        assert A.adopt_zero_probability(3, 1, 0.5) == pytest.approx(0.5, abs=1e-13)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            A.keep_zero_probability(0, 3, 0.5)
        with pytest.raises(ValueError):
            A.adopt_zero_probability(3, 0, 0.5)

    def test_keep_is_direct_comparison(self):
        for z, o, q in [(3, 4, 0.25), (6, 2, 0.7), (5, 5, 0.5)]:
            assert A.keep_zero_probability(z, o, q) == pytest.approx(
                comparison_direct(z - 1, o, 1.0 - q, 1), abs=1e-12
            )
            assert A.adopt_zero_probability(z, o, q) == pytest.approx(
                comparison_direct(z, o - 1, 1.0 - q, -2), abs=1e-12
            )

    def test_relabeling_symmetry(self):
        # probability a one-holder keeps 1 with counts (z, o) equals the
        # keep-zero probability with counts swapped
        for z, o, q in [(3, 5, 0.3), (7, 2, 0.6), (4, 4, 0.5)]:
            keep_one = comparison_direct(o - 1, z, 1.0 - q, 1)
            assert A.keep_zero_probability(o, z, q) == pytest.approx(keep_one, abs=1e-12)

    def test_consensus_side_is_certain(self):
        assert A.keep_zero_probability(6, 0, 0.42) == 1.0
        assert A.adopt_zero_probability(0, 6, 0.42) == 0.0

    def test_monotone_in_imbalance(self):
        for n in (50, 200):
            for q in (0.25, 0.5, 0.75):
                values = [
                    A.keep_zero_probability(n + a, n - a, q) for a in range(0, n + 1, 5)
                ]
                assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_transition_probabilities_type(self):
        t = A.transition_probabilities(4, 4, 0.5)
        assert t.p_keep_zero == pytest.approx(A.keep_zero_probability(4, 4, 0.5))
        assert t.p_adopt_zero == pytest.approx(A.adopt_zero_probability(4, 4, 0.5))
        with pytest.raises(ValueError):
            A.TransitionProbabilities(p_keep_zero=1.2, p_adopt_zero=0.0)


class TestTransitionCache:
    def test_cache_transparency(self):
        A.clear_transition_cache()
        cached = A.keep_zero_probability(13, 9, 0.35)
        try:
            A.configure_transition_cache(0)
            uncached = A.keep_zero_probability(13, 9, 0.35)
        finally:
            A.configure_transition_cache(A.DEFAULT_CACHE_CAPACITY)
        assert cached == uncached

    def test_cache_hits(self):
        A.clear_transition_cache()
        A.keep_zero_probability(11, 7, 0.4)
        A.keep_zero_probability(11, 7, 0.4)
        info = A.transition_cache_info()["keep_zero"]
        assert info["hits"] >= 1

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            A.configure_transition_cache(-1)

    def test_concurrent_access(self):
        from concurrent.futures import ThreadPoolExecutor

        A.clear_transition_cache()
        args = [(z, 24 - z, 0.4) for z in range(1, 24)] * 40
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda a: A.keep_zero_probability(*a), args))
        expected = {a: A._keep_zero_exact(*a) for a in set(args)}
        assert all(r == expected[a] for r, a in zip(results, args))


class TestKlBernoulli:
    def test_examples(self):
        assert A.kl_bernoulli(0.5, 0.5) == 0.0
        assert A.kl_bernoulli(0.5, 0.25) == pytest.approx(KL_HALF_QUARTER, rel=1e-12)
        assert A.kl_bernoulli(1.0, 0.5) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_boundary(self):
        assert A.kl_bernoulli(0.0, 0.0) == 0.0
        assert A.kl_bernoulli(1.0, 1.0) == 0.0
        assert A.kl_bernoulli(0.5, 0.0) == math.inf
        assert A.kl_bernoulli(0.5, 1.0) == math.inf
        with pytest.raises(ValueError):
            A.kl_bernoulli(-0.1, 0.5)

    def test_pinsker_and_reverse_coarse(self):
        grid = np.arange(0.05, 1.0, 0.05)
        for a in grid:
            for b in grid:
                kl = A.kl_bernoulli(float(a), float(b))
                gap = (a - b) ** 2
                assert kl >= 2.0 * gap - 1e-12
                assert kl <= (2.0 / min(b, 1.0 - b)) * gap + 1e-12


class TestNormalCdf:
    def test_symmetry(self):
        assert A.std_normal_cdf(0.0) == 0.5
        for t in (-3.0, -0.7, 0.4, 2.5, 8.0):
            assert A.std_normal_cdf(t) + A.std_normal_cdf(-t) == pytest.approx(1.0, abs=1e-14)
            assert A.q_function(t) == pytest.approx(1.0 - A.std_normal_cdf(t), abs=1e-14)

    def test_sqrt2_value(self):
        assert A.std_normal_cdf(math.sqrt(2.0)) == pytest.approx(PHI_SQRT2, abs=1e-12)

    @pytest.mark.parametrize("t", [-2.0, -0.5, 1.0, 3.0])
    def test_against_quadrature(self, t):
        assert A.std_normal_cdf(t) == pytest.approx(normal_cdf_quadrature(t), abs=1e-12)


class TestTZero:
    def test_examples(self):
        assert A.t_zero(1.0, 0.5) == pytest.approx(math.sqrt(2.0), rel=1e-14)
        assert A.t_zero(2.0, 0.5) == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-14)
        assert A.t_zero(1.0, 0.8) == pytest.approx(math.sqrt(0.5), rel=1e-14)

    def test_validation(self):
        with pytest.raises(ValueError):
            A.t_zero(0.0, 0.5)
        with pytest.raises(ValueError):
            A.t_zero(1.0, 0.0)
        with pytest.raises(ValueError):
            A.t_zero(1.0, 1.0)


class TestClosedFormBounds:
    def test_prop1(self):
        assert A.prop1_error_bound(100, 0, 0.5) == pytest.approx(200.0, rel=1e-14)
        assert A.prop1_error_bound(100, 50, 0.5) == pytest.approx(PROP1_100_50, rel=1e-12)
        assert A.prop1_error_bound(10_000, 1_000, 0.5) == pytest.approx(PROP1_1E4_1E3, rel=1e-12)
        with pytest.raises(ValueError):
            A.prop1_error_bound(100, 100, 0.5)
        with pytest.raises(ValueError):
            A.prop1_error_bound(100, 10, 1.0)

    def test_prop4(self):
        assert A.prop4_bound(100, 0) == 2.0
        assert A.prop4_bound(100, 30) == pytest.approx(PROP4_100_30, rel=1e-12)
        assert A.prop4_bound(10_000, 1_000) == pytest.approx(PROP4_1E4_1E3, rel=1e-12)

    def test_prop5(self):
        assert A.prop5_bound(100, 0, 0.5) == 1.0
        assert A.prop5_bound(10**6, 328, 0.5) == pytest.approx(PROP5_1E6_328, rel=1e-12)
        assert A.prop5_rate_constant(0.5) == 64.0
        assert A.envelope_exponent(0.5) == pytest.approx(1.0 / 128.0, rel=1e-14)
        assert A.theorem2_envelope(100, 0.5) == pytest.approx(
            3.0 / 100 ** (1.0 / 128.0), rel=1e-14
        )
        with pytest.raises(ValueError):
            A.prop5_bound(100, 100, 0.5)
        with pytest.raises(ValueError):
            A.prop5_rate_constant(0.0)


class TestPnSandwich:
    def test_lower_always_half(self):
        for n in (2, 17, 100, 10_000):
            lower, upper = A.pn_sandwich(n, 0.5)
            assert lower == 0.5
            assert upper >= lower

    def test_brackets_exact_value_at_large_n(self):
        p_n = A.keep_zero_probability(10_000, 10_000, 0.5)
        lower, upper = A.pn_sandwich(10_000, 0.5)
        assert lower <= p_n <= upper

    def test_upper_shrinks_with_n(self):
        uppers = [A.pn_sandwich(n, 0.5)[1] for n in (100, 1_000, 10_000, 100_000)]
        assert all(b < a for a, b in zip(uppers, uppers[1:]))
        # the closed form converges to 1/2 (slowly, like n^(-1/4))
        assert A.pn_sandwich(10**12, 0.5)[1] < 0.51

    def test_small_n_fallback(self):
        # eps_n >= min(q, 1-q) leaves the split formula undefined; the
        # bracket falls back to the always-valid collision bound
        assert A.pn_sandwich(16, 0.5) == (0.5, 2.0)
        assert A.pn_sandwich(200, 0.75) == (0.5, 2.0)

    def test_q_symmetry(self):
        assert A.pn_sandwich(400, 0.3) == A.pn_sandwich(400, 0.7)

    def test_validation(self):
        with pytest.raises(ValueError):
            A.pn_sandwich(1, 0.5)
        with pytest.raises(ValueError):
            A.pn_sandwich(10, 0.0)


class TestStirlingBounds:
    def test_bracket_examples(self):
        for m, p, k in [(10, 0.5, 5), (100, 0.3, 30), (37, 0.9, 33)]:
            lower, upper = A.pmf_stirling_bounds(m, p, k)
            exact = math.exp(A.binomial_log_pmf(m, p, k))
            assert lower <= exact <= upper

    def test_prefactor_ratio_constant(self):
        expected = math.e**3 / (math.sqrt(2.0 * math.pi) * 2.0 * math.pi)
        for m, p, k in [(10, 0.5, 5), (200, 0.2, 17), (55, 0.65, 30)]:
            lower, upper = A.pmf_stirling_bounds(m, p, k)
            assert upper / lower == pytest.approx(expected, rel=1e-12)

    def test_interior_only(self):
        with pytest.raises(ValueError):
            A.pmf_stirling_bounds(10, 0.5, 0)
        with pytest.raises(ValueError):
            A.pmf_stirling_bounds(10, 0.5, 10)
        with pytest.raises(ValueError):
            A.pmf_stirling_bounds(10, 0.0, 5)


class TestBoundReport:
    def test_satisfied_autofill(self):
        r = A.BoundReport(
            bound_name="prop4", parameters={"n": 10, "B": 3},
            bound_value=0.5, empirical_value=0.3,
        )
        assert r.satisfied is True
        r2 = A.BoundReport(
            bound_name="prop4", parameters={}, bound_value=0.1, empirical_value=0.3
        )
        assert r2.satisfied is False

    def test_validation(self):
        with pytest.raises(ValueError):
            A.BoundReport(bound_name="nope", parameters={}, bound_value=0.1)
        with pytest.raises(ValueError):
            A.BoundReport(bound_name="prop1", parameters={}, bound_value=-0.1)
