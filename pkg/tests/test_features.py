"""Tests for feature estimates, their products, and the noisy oracle."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisykernel import features, kernels
from noisykernel.errors import (DimensionMismatchError, EstimateMismatchError)
from noisykernel.features import (FeatureEstimate, NoisyInstanceOracle,
                                  feature_from_json, feature_to_json,
                                  map_estimate, map_estimate_dot,
                                  map_estimate_gaussian, prod_exact, prod_pair)
from noisykernel.series import GeometricLaw


def make_estimate(kernel, n, copies, p=2.0, exp_factor=1.0, dim=None):
    law = GeometricLaw(p)
    beta = kernel.beta(n)
    scale = math.sqrt(beta) * law.weight(n) if beta > 0 else 0.0
    if dim is None:
        dim = len(copies[0]) if len(copies) else 2
    return FeatureEstimate(kernel=kernel, p=p, degree_n=n,
                           copies=tuple(np.asarray(c, float) for c in copies),
                           scale=scale, exp_factor=exp_factor,
                           index_weight=law.weight(n), dim=dim)


def formal_vector(estimate):
    """Explicit coordinates of the degree block the estimate lives in."""
    vec = np.array([estimate.scale * estimate.exp_factor])
    for c in estimate.copies:
        vec = np.multiply.outer(vec, c).ravel()
    return vec


def formal_exact_block(kernel, x, n):
    """Coordinates of the exact feature image restricted to degree n."""
    if isinstance(kernel, kernels.GaussianKernel):
        beta = kernel.beta(n)
        head = kernel.norm_factor(x)
    else:
        beta = kernel.beta(n)
        head = 1.0
    vec = np.array([math.sqrt(beta) * head])
    for _ in range(n):
        vec = np.multiply.outer(vec, np.asarray(x, float)).ravel()
    return vec


class ZeroMeanUniform:
    """Test noise: independent coordinates uniform on [-r, r]."""

    def __init__(self, radius):
        self.radius = radius

    def draw(self, rng, dim):
        return rng.uniform(-self.radius, self.radius, size=dim)


class TestOracle:
    def test_exact_when_noiseless(self):
        oracle = NoisyInstanceOracle([1.0, -2.0])
        assert np.array_equal(oracle.query(), [1.0, -2.0])
        assert oracle.calls_made == 1

    def test_counts_every_query(self):
        oracle = NoisyInstanceOracle([0.0], noise=ZeroMeanUniform(1.0),
                                     rng=np.random.default_rng(0))
        for k in range(5):
            oracle.query()
        assert oracle.calls_made == 5

    def test_reveal_is_for_evaluation_only(self):
        oracle = NoisyInstanceOracle([3.0, 4.0])
        assert np.array_equal(oracle.reveal_true_instance(), [3.0, 4.0])


class TestProdPair:
    def test_mismatched_degrees_are_orthogonal(self):
        k = kernels.exponential_kernel()
        a = make_estimate(k, 1, [[1.0, 2.0]])
        b = make_estimate(k, 2, [[1.0, 0.0], [0.0, 1.0]])
        assert prod_pair(a, b) == 0.0

    def test_degree_one_hand_value(self):
        # beta_1 = 1, p = 2: 16 * <(1,2), (3,4)> = 176.
        k = kernels.linear_kernel()
        a = make_estimate(k, 1, [[1.0, 2.0]])
        b = make_estimate(k, 1, [[3.0, 4.0]])
        assert prod_pair(a, b) == pytest.approx(176.0)

    def test_zero_coefficient_degree(self):
        k = kernels.homogeneous_polynomial(2)
        a = make_estimate(k, 0, [])
        b = make_estimate(k, 0, [])
        assert prod_pair(a, b) == 0.0

    def test_kernel_mismatch_rejected(self):
        a = make_estimate(kernels.linear_kernel(), 1, [[1.0]])
        b = make_estimate(kernels.exponential_kernel(), 1, [[1.0]])
        with pytest.raises(EstimateMismatchError):
            prod_pair(a, b)

    def test_p_mismatch_rejected(self):
        k = kernels.linear_kernel()
        a = make_estimate(k, 1, [[1.0]], p=2.0)
        b = make_estimate(k, 1, [[1.0]], p=3.0)
        with pytest.raises(EstimateMismatchError):
            prod_pair(a, b)


class TestProdExact:
    def test_degree_one_hand_value(self):
        # beta_1 = 1, p = 2: 4 * <(1,2), (1,1)> = 12.
        k = kernels.linear_kernel()
        a = make_estimate(k, 1, [[1.0, 2.0]])
        assert prod_exact(a, [1.0, 1.0]) == pytest.approx(12.0)

    def test_degree_zero_empty_product(self):
        # beta_0 = c, p = 2 gives 2c regardless of the point.
        k = kernels.inhomogeneous_polynomial(2)  # beta_0 = 1
        a = make_estimate(k, 0, [])
        assert prod_exact(a, [5.0, -1.0]) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        a = make_estimate(kernels.linear_kernel(), 1, [[1.0, 2.0]])
        with pytest.raises(DimensionMismatchError):
            prod_exact(a, [1.0])

    def test_pairwise_product_unbiased_against_fixed_element(self):
        # For a fixed element b, the mean of <estimate of x, b> is
        # <image of x, b>, which prod_exact(b, x) computes exactly.
        k = kernels.inhomogeneous_polynomial(2)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(30)
        x = np.array([0.3, -0.4])
        b = make_estimate(k, 2, [[0.5, 0.1], [-0.2, 0.7]])
        target = prod_exact(b, x)
        oracle = NoisyInstanceOracle(x, noise=ZeroMeanUniform(0.8), rng=rng)
        vals = np.array([prod_pair(map_estimate_dot(oracle, k, law, rng), b)
                         for _ in range(200_000)])
        stderr = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - target) < 4 * stderr

    def test_monte_carlo_mean_reaches_kernel_value(self):
        # Zero-noise oracle: averaged products converge to k(x, x').
        k = kernels.exponential_kernel()
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(31)
        x = np.array([0.4, -0.3])
        xp = np.array([0.2, 0.6])
        oracle = NoisyInstanceOracle(x)
        vals = np.array([prod_exact(map_estimate_dot(oracle, k, law, rng), xp)
                         for _ in range(200_000)])
        target = kernels.eval_kernel(k, x, xp)
        stderr = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - target) < 4 * stderr


class TestBruteForceEquivalence:
    def test_products_match_explicit_vectors(self):
        rng = np.random.default_rng(32)
        law = GeometricLaw(2.0)
        kernel_pool = [kernels.linear_kernel(), kernels.homogeneous_polynomial(2),
                       kernels.inhomogeneous_polynomial(3),
                       kernels.exponential_kernel(), kernels.gaussian_kernel(1.5)]
        for _ in range(300):
            k = kernel_pool[int(rng.integers(len(kernel_pool)))]
            d = int(rng.integers(1, 4))
            n = int(rng.integers(0, 5))
            n2 = int(rng.integers(0, 5))
            exp_a = float(rng.uniform(0.5, 1.5)) if isinstance(
                k, kernels.GaussianKernel) else 1.0
            exp_b = float(rng.uniform(0.5, 1.5)) if isinstance(
                k, kernels.GaussianKernel) else 1.0
            a = make_estimate(k, n, rng.uniform(-1, 1, size=(n, d)),
                              exp_factor=exp_a, dim=d)
            b = make_estimate(k, n2, rng.uniform(-1, 1, size=(n2, d)),
                              exp_factor=exp_b, dim=d)
            va, vb = formal_vector(a), formal_vector(b)
            brute_pair = float(np.dot(va, vb)) if n == n2 else 0.0
            got_pair = prod_pair(a, b)
            assert got_pair == pytest.approx(brute_pair, rel=1e-12, abs=1e-12)

            xp = rng.uniform(-1, 1, size=d)
            brute_exact = float(np.dot(va, formal_exact_block(k, xp, n)))
            assert prod_exact(a, xp) == pytest.approx(brute_exact,
                                                      rel=1e-12, abs=1e-12)


class TestMapEstimateDot:
    def test_call_count_equals_drawn_degree(self):
        k = kernels.exponential_kernel()
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(33)
        for _ in range(2_000):
            oracle = NoisyInstanceOracle([0.5, 0.5])
            est = map_estimate_dot(oracle, k, law, rng)
            assert oracle.calls_made == est.degree_n
            assert len(est.copies) == est.degree_n

    def test_mean_call_count(self):
        k = kernels.exponential_kernel()
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(34)
        oracle = NoisyInstanceOracle([0.5, 0.5])
        reps = 100_000
        for _ in range(reps):
            map_estimate_dot(oracle, k, law, rng)
        assert oracle.calls_made / reps == pytest.approx(1.0, rel=0.02)

    def test_formal_coordinates_unbiased(self):
        # Homogeneous quadratic in d=2 at x=(1,2): exact image (1,2,2,4).
        k = kernels.homogeneous_polynomial(2)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(35)
        x = np.array([1.0, 2.0])
        noise = ZeroMeanUniform(0.5)
        reps = 200_000
        acc = np.zeros((2, 2))
        acc_sq = np.zeros((2, 2))
        for _ in range(reps):
            oracle = NoisyInstanceOracle(x, noise=noise, rng=rng)
            est = map_estimate_dot(oracle, k, law, rng)
            if est.degree_n == 2 and est.scale != 0.0:
                block = est.scale * np.multiply.outer(est.copies[0], est.copies[1])
                acc += block
                acc_sq += block**2
        mean = acc / reps
        stderr = np.sqrt((acc_sq / reps - mean**2) / reps)
        target = np.outer(x, x)
        assert np.all(np.abs(mean - target) < 4 * stderr + 1e-12)

    def test_zero_instance_zero_noise(self):
        k = kernels.homogeneous_polynomial(2)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(36)
        oracle = NoisyInstanceOracle([0.0, 0.0])
        probe = make_estimate(k, 2, [[1.0, 0.0], [0.0, 1.0]])
        for _ in range(200):
            est = map_estimate_dot(oracle, k, law, rng)
            if est.degree_n >= 1:
                assert all(np.all(c == 0.0) for c in est.copies)
            assert prod_pair(est, probe) == 0.0

    def test_shortcut_skips_zero_coefficient_queries(self):
        k = kernels.homogeneous_polynomial(2)  # beta_n = 0 except n = 2
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(37)
        oracle = NoisyInstanceOracle([1.0, 1.0])
        for _ in range(500):
            est = map_estimate_dot(oracle, k, law, rng, shortcut_zero_beta=True)
            if est.scale == 0.0:
                assert est.copies == ()
        # Only degree-2 draws consume queries now.
        assert oracle.calls_made % 2 == 0

    def test_second_moment_within_norm_bound(self):
        # Mean squared norm of the estimate against (p/(p-1)) Q(p B).
        k = kernels.homogeneous_polynomial(2)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(38)
        x = np.array([1.0, 2.0])
        noise = ZeroMeanUniform(math.sqrt(0.75))  # E||Z||^2 = 0.5 in d=2
        b_noisy = 5.0 + 0.5
        norms = []
        for _ in range(100_000):
            oracle = NoisyInstanceOracle(x, noise=noise, rng=rng)
            norms.append(map_estimate_dot(oracle, k, law, rng).squared_norm())
        norms = np.array(norms)
        bound = 2.0 * k.q_at(2.0 * b_noisy)
        stderr = norms.std(ddof=1) / math.sqrt(norms.size)
        assert norms.mean() <= bound + 4 * stderr


class TestMapEstimateGaussian:
    def test_exp_factor_at_origin(self):
        k = kernels.gaussian_kernel(1.0)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(39)
        oracle = NoisyInstanceOracle([0.0, 0.0])
        vals = [map_estimate_gaussian(oracle, k, law, rng).exp_factor
                for _ in range(20_000)]
        arr = np.array(vals)
        assert abs(arr.mean() - 1.0) < 4 * arr.std(ddof=1) / math.sqrt(arr.size)

    def test_exp_factor_matches_norm_factor(self):
        # Zero noise, x = (1, 0), sigma_sq = 2: mean exp(-1/2).
        k = kernels.gaussian_kernel(2.0)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(40)
        oracle = NoisyInstanceOracle([1.0, 0.0])
        vals = np.array([map_estimate_gaussian(oracle, k, law, rng).exp_factor
                         for _ in range(100_000)])
        target = math.exp(-0.5)
        stderr = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - target) < 4 * stderr

    def test_mean_call_count_is_three(self):
        # 1/(p-1) polynomial queries plus 2/(p-1) paired queries at p=2.
        k = kernels.gaussian_kernel(1.0)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(41)
        oracle = NoisyInstanceOracle([0.3, 0.4])
        reps = 100_000
        for _ in range(reps):
            map_estimate_gaussian(oracle, k, law, rng)
        assert oracle.calls_made / reps == pytest.approx(3.0, rel=0.02)

    def test_dispatch(self):
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(42)
        est = map_estimate(NoisyInstanceOracle([1.0]), kernels.gaussian_kernel(1.0),
                           law, rng)
        assert isinstance(est.kernel, kernels.GaussianKernel)
        est = map_estimate(NoisyInstanceOracle([1.0]), kernels.linear_kernel(),
                           law, rng)
        assert est.exp_factor == 1.0


class TestSerialization:
    def test_round_trip_bit_exact(self):
        k = kernels.gaussian_kernel(1.5)
        law = GeometricLaw(2.0)
        rng = np.random.default_rng(43)
        oracle = NoisyInstanceOracle([0.1, -0.7],
                                     noise=ZeroMeanUniform(0.3), rng=rng)
        for _ in range(50):
            est = map_estimate_gaussian(oracle, k, law, rng)
            text = feature_to_json(est)
            back = feature_from_json(text)
            assert back.degree_n == est.degree_n
            assert back.scale == est.scale
            assert back.exp_factor == est.exp_factor
            assert back.index_weight == est.index_weight
            assert all(np.array_equal(a, b)
                       for a, b in zip(back.copies, est.copies))
            assert feature_to_json(back) == text

    @settings(max_examples=60, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False, width=64))
    def test_awkward_floats_round_trip(self, value):
        k = kernels.linear_kernel()
        est = make_estimate(k, 1, [[value]])
        back = feature_from_json(feature_to_json(est))
        assert back.copies[0][0] == value or (math.isnan(value))

    def test_schema_fields(self):
        est = make_estimate(kernels.linear_kernel(), 1, [[1.0, 2.0]])
        payload = json.loads(feature_to_json(est))
        assert set(payload) == {"kernel", "p", "n", "scale", "exp_factor",
                                "copies", "dim"}
