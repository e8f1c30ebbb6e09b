"""Tests for coefficient streams, the index law, and the scalar estimator."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisykernel import series
from noisykernel.errors import (IndexCapExceededError, InvalidParameterError,
                                NumericFaultError)
from noisykernel.series import (CoefficientStream, FixedIndexLaw, GeometricLaw,
                                compensated_product, estimate_scalar,
                                sample_geometric, second_moment_bound)
from noisykernel.stats import chi_square_gof

SQRT_PI = math.sqrt(math.pi)


class TestGeometricLaw:
    def test_rejects_p_at_most_one(self):
        for bad in (1.0, 0.5, 0.0, -2.0, math.nan, math.inf):
            with pytest.raises(InvalidParameterError):
                GeometricLaw(bad)

    def test_pmf_sums_to_one(self):
        law = GeometricLaw(1.7)
        assert math.fsum(law.pmf(n) for n in range(200)) == pytest.approx(1.0)

    def test_mean_and_tail_formulas(self):
        law = GeometricLaw(3.0)
        assert law.mean == pytest.approx(0.5)
        assert law.tail(2) == pytest.approx(1.0 / 9.0)
        assert law.weight(1) == pytest.approx(9.0 / 2.0)
        assert law.weight(0) * law.pmf(0) == pytest.approx(1.0)

    def test_tail_probabilities_p2(self):
        # Pr(N=0) = 1/2 and Pr(N >= 3) = 1/8 at p = 2.
        rng = np.random.default_rng(101)
        draws = sample_geometric(GeometricLaw(2.0), rng, 100_000)
        assert (draws == 0).mean() == pytest.approx(0.5, abs=0.01)
        assert (draws >= 3).mean() == pytest.approx(0.125, abs=0.01)

    def test_empirical_mean_p2(self):
        rng = np.random.default_rng(102)
        draws = sample_geometric(GeometricLaw(2.0), rng, 200_000)
        assert draws.mean() == pytest.approx(1.0, abs=0.02)

    def test_large_p_is_almost_always_zero(self):
        law = GeometricLaw(1000.0)
        assert law.pmf(0) == pytest.approx(0.999)
        rng = np.random.default_rng(103)
        draws = sample_geometric(law, rng, 20_000)
        assert (draws == 0).mean() > 0.99

    def test_scalar_and_vector_sampling_agree_on_formula(self):
        law = GeometricLaw(2.5)
        d1 = sample_geometric(law, np.random.default_rng(7), 64)
        d2 = np.array([sample_geometric(law, np.random.default_rng(7))
                       for _ in range(1)])
        assert d1[0] == d2[0]

    def test_goodness_of_fit(self):
        # Module invariant: GOF at significance 0.001, 1e6 draws.
        for p, seed in ((1.5, 11), (2.0, 12), (4.0, 13)):
            law = GeometricLaw(p)
            draws = sample_geometric(law, np.random.default_rng(seed), 1_000_000)
            _, pvalue = chi_square_gof(draws, law.pmf)
            assert pvalue > 0.001, f"p={p} GOF pvalue {pvalue}"

    def test_index_cap_aborts(self):
        class NearOneRNG:
            def random(self, size=None):
                return np.nextafter(1.0, 0.0)

        with pytest.raises(IndexCapExceededError):
            sample_geometric(GeometricLaw(1.0000001), NearOneRNG())


class TestFixedIndexLaw:
    def test_degenerate_draws(self):
        law = FixedIndexLaw(1)
        rng = np.random.default_rng(0)
        assert law.sample(rng) == 1
        assert law.weight(1) == 1.0

    def test_rejects_negative(self):
        with pytest.raises(InvalidParameterError):
            FixedIndexLaw(-1)


class TestEstimateScalar:
    def test_constant_series(self):
        # Only the N=0 draw contributes: theta = c * p/(p-1), else 0.
        c = 3.5
        law = GeometricLaw(2.0)
        f = series.constant(c)
        rng = np.random.default_rng(21)
        values = []
        for _ in range(50_000):
            theta, n = estimate_scalar(f, lambda r: r.random(), law, rng)
            assert theta == (c * 2.0 if n == 0 else 0.0)
            values.append(theta)
        assert np.mean(values) == pytest.approx(c, abs=4 * np.std(values) / 223.6)

    def test_identity_series_deterministic_draws(self):
        c = 0.7
        law = GeometricLaw(2.0)
        f = series.identity()
        rng = np.random.default_rng(22)
        values = []
        for _ in range(50_000):
            theta, n = estimate_scalar(f, lambda r: c, law, rng)
            assert theta == (4.0 * c if n == 1 else 0.0)
            values.append(theta)
        assert np.mean(values) == pytest.approx(c, rel=0.05)

    def test_exp_of_mean_unbiased(self):
        # Independent oracle: closed form f(E[X]) = exp(0.5).
        law = GeometricLaw(2.0)
        f = series.exp_series(1.0)
        rng = np.random.default_rng(23)
        src = lambda r: 0.4 if r.random() < 0.5 else 0.6
        values = np.array([estimate_scalar(f, src, law, rng)[0]
                           for _ in range(200_000)])
        target = math.exp(0.5)
        stderr = values.std(ddof=1) / math.sqrt(values.size)
        assert abs(values.mean() - target) < 4 * stderr

    def test_samples_used_equals_drawn_index(self):
        law = GeometricLaw(1.5)
        f = series.exp_series(1.0)
        rng = np.random.default_rng(24)
        for _ in range(2_000):
            count = 0

            def src(r):
                nonlocal count
                count += 1
                return r.random()
            _, n = estimate_scalar(f, src, law, rng)
            assert count == n

    def test_second_moment_within_bound(self):
        law = GeometricLaw(2.0)
        f = series.exp_series(1.0)
        rng = np.random.default_rng(25)
        src = lambda r: 0.4 if r.random() < 0.5 else 0.6
        sq = np.array([estimate_scalar(f, src, law, rng)[0] ** 2
                       for _ in range(200_000)])
        bound = second_moment_bound(lambda x: f.evaluate(x, absolute=True),
                                    law, 0.26)
        stderr = sq.std(ddof=1) / math.sqrt(sq.size)
        assert sq.mean() <= bound + 4 * stderr

    def test_non_finite_draw_raises(self):
        law = FixedIndexLaw(2)
        f = series.exp_series(1.0)
        rng = np.random.default_rng(26)
        with pytest.raises(NumericFaultError):
            estimate_scalar(f, lambda r: math.inf, law, rng)

    def test_shortcut_skips_sampling(self):
        law = FixedIndexLaw(3)
        f = series.monomial(1, 2.0)  # coefficient at 3 is zero
        calls = 0

        def src(r):
            nonlocal calls
            calls += 1
            return 1.0
        theta, used = estimate_scalar(f, src, law,
                                      np.random.default_rng(0),
                                      shortcut_zero=True)
        assert theta == 0.0 and used == 0 and calls == 0


class TestSecondMomentBound:
    def test_exp_case(self):
        law = GeometricLaw(2.0)
        f_plus = lambda x: math.exp(x)
        # Hand evaluation: 2 * exp(2 * sqrt(0.5)).
        assert second_moment_bound(f_plus, law, 0.25) == pytest.approx(
            2.0 * math.exp(2.0 * math.sqrt(0.5)), rel=1e-12)

    def test_zero_series(self):
        assert second_moment_bound(lambda x: 0.0, GeometricLaw(2.0), 1.0) == 0.0

    def test_identity_case(self):
        law = GeometricLaw(2.0)
        assert second_moment_bound(lambda x: x, law, 1.0) == pytest.approx(4.0)

    def test_rejects_negative_moment(self):
        with pytest.raises(InvalidParameterError):
            second_moment_bound(lambda x: x, GeometricLaw(2.0), -0.1)


class TestStreams:
    def test_erf_series_coefficients(self):
        erf = series.integrate(
            series.scale(series.gaussian_bump(1.0), 2.0 / SQRT_PI), 0.0)
        assert erf.coeff(0) == 0.0
        assert erf.coeff(1) == pytest.approx(2.0 / SQRT_PI, rel=1e-15)
        assert erf.coeff(2) == 0.0
        assert erf.coeff(3) == pytest.approx(-2.0 / (3.0 * SQRT_PI), rel=1e-15)

    def test_multiply_identity_squared(self):
        sq = series.multiply(series.identity(), series.identity())
        assert [sq.coeff(n) for n in range(5)] == [0.0, 0.0, 1.0, 0.0, 0.0]
        assert sq.known_finite_degree == 2

    def test_shifted_bump_matches_closed_form(self):
        import mpmath
        for s in (0.5, 1.0, 2.0):
            stream = series.shifted_gaussian_bump(s)
            got = stream.evaluate(0.5)
            exact = float(mpmath.exp(-(s ** 2) * mpmath.mpf("0.25")))
            assert got == pytest.approx(exact, rel=1e-12)

    def test_compose_affine_scale_only(self):
        f = series.exp_series(1.0)
        g = series.compose_affine(f, 2.0)
        assert g.coeff(3) == pytest.approx(8.0 / 6.0)
        assert g.evaluate(0.3) == pytest.approx(math.exp(0.6), rel=1e-12)

    def test_compose_affine_shift_needs_finite_degree(self):
        with pytest.raises(InvalidParameterError):
            series.compose_affine(series.exp_series(1.0), 1.0, shift=1.0)

    def test_compose_affine_finite_shift_exact(self):
        # (a + 1)^2 composed from the square monomial.
        f = series.monomial(2, 1.0)
        g = series.compose_affine(f, 1.0, shift=1.0)
        assert [g.coeff(n) for n in range(3)] == [1.0, 2.0, 1.0]

    def test_integrate_constant_term(self):
        f = series.integrate(series.constant(2.0), constant_term=5.0)
        assert f.coeff(0) == 5.0 and f.coeff(1) == 2.0

    def test_evaluate_detects_divergence(self):
        geom = series.from_function(lambda n: 1.0, name="1/(1-a)")
        with pytest.raises(NumericFaultError):
            geom.evaluate(1.5)

    def test_non_finite_coefficient_raises(self):
        bad = series.from_function(lambda n: math.inf if n == 2 else 1.0)
        with pytest.raises(NumericFaultError):
            bad.coeff(2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=5),
           st.lists(st.floats(-3, 3), min_size=1, max_size=5))
    def test_multiply_matches_polynomial_multiplication(self, ca, cb):
        a = series.from_function(lambda n: ca[n] if n < len(ca) else 0.0,
                                 len(ca) - 1)
        b = series.from_function(lambda n: cb[n] if n < len(cb) else 0.0,
                                 len(cb) - 1)
        prod = series.multiply(a, b)
        ref = np.polynomial.polynomial.polymul(ca, cb)  # trims trailing zeros
        for n in range(len(ca) + len(cb) - 1):
            expect = float(ref[n]) if n < len(ref) else 0.0
            assert prod.coeff(n) == pytest.approx(expect, rel=1e-12, abs=1e-12)

    def test_concurrent_readers_share_the_cache(self):
        import concurrent.futures

        stream = series.exp_series(0.5)

        def read_all(_):
            return [stream.coeff(n) for n in range(200)]

        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(read_all, range(16)))
        assert all(r == results[0] for r in results)

    def test_memoization_is_consistent(self):
        calls = []

        def fn(n, prev):
            calls.append(n)
            return float(n)
        stream = CoefficientStream(fn)
        assert stream.coeff(4) == 4.0
        assert stream.coeff(2) == 2.0
        assert calls == [0, 1, 2, 3, 4]


class TestCompensatedProduct:
    def test_empty_product_is_one(self):
        assert compensated_product([]) == 1.0

    def test_matches_exact_small_cases(self):
        vals = [1.25, -0.5, 3.0, 0.125]
        assert compensated_product(vals) == pytest.approx(math.prod(vals), rel=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.5, 2.0), min_size=1, max_size=30))
    def test_tracks_high_precision_reference(self, vals):
        from fractions import Fraction
        exact = Fraction(1)
        for v in vals:
            exact *= Fraction(v)
        got = compensated_product(vals)
        assert got == pytest.approx(float(exact), rel=1e-15)
