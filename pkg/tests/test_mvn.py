import math

import numpy as np
import pytest
from scipy import stats

from fblsi.second_order.mvn import bvn_cdf, mvn_lower_orthant, numerical_rank, qfunc, qinv

from oracles import bvn_by_quadrature


def random_cov(rng, k):
    a = rng.normal(size=(k, k))
    return a @ a.T + 0.05 * np.eye(k)


class TestQ:
    @pytest.mark.parametrize("eps", [0.5, 0.1, 0.01, 0.001, 1e-9])
    def test_round_trip(self, eps):
        assert float(qfunc(qinv(eps))) == pytest.approx(eps, rel=1e-12)

    def test_known_values(self):
        assert qinv(0.5) == 0.0
        assert qinv(0.1) == pytest.approx(1.2815515655446004, abs=1e-12)
        assert qinv(0.001) == pytest.approx(3.090232306167813, abs=1e-12)

    def test_vectorized(self):
        np.testing.assert_allclose(qinv(np.array([0.1, 0.9])), [qinv(0.1), -qinv(0.1)])

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
    def test_domain(self, eps):
        with pytest.raises(ValueError):
            qinv(eps)


class TestBivariate:
    def test_independent_origin(self):
        assert mvn_lower_orthant(np.eye(2), [0.0, 0.0]) == pytest.approx(0.25, abs=1e-15)

    def test_one_dimensional_half(self):
        assert mvn_lower_orthant([[1.0]], [0.0]) == pytest.approx(0.5, abs=1e-15)

    def test_origin_closed_form(self):
        # Pr(Z1 <= 0, Z2 <= 0) = 1/4 + asin(rho) / (2 pi)
        for rho in (-0.9, -0.3, 0.5, 0.99):
            assert float(bvn_cdf(0.0, 0.0, rho)) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-14)

    def test_against_quadrature_on_random_covariances(self):
        rng = np.random.default_rng(20)
        for _ in range(50):
            v = random_cov(rng, 2)
            z = rng.normal(0, 1.5, 2)
            s = np.sqrt(np.diag(v))
            ref = bvn_by_quadrature(z[0] / s[0], z[1] / s[1], v[0, 1] / (s[0] * s[1]))
            assert mvn_lower_orthant(v, z) == pytest.approx(ref, abs=1e-8)

    def test_sign_changes_of_arguments(self):
        for h, k in [(-1.0, 2.0), (1.5, -0.3), (-0.7, -2.2), (0.0, -1.0), (1.0, 0.0)]:
            assert float(bvn_cdf(h, k, 0.6)) == pytest.approx(bvn_by_quadrature(h, k, 0.6), abs=1e-10)

    def test_perfect_correlation(self):
        assert float(bvn_cdf(0.3, 1.0, 1.0)) == pytest.approx(stats.norm.cdf(0.3))
        assert float(bvn_cdf(0.3, 1.0, -1.0)) == pytest.approx(stats.norm.cdf(0.3) + stats.norm.cdf(1.0) - 1)

    def test_infinite_coordinates(self):
        v = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert mvn_lower_orthant(v, [math.inf, 0.4]) == pytest.approx(stats.norm.cdf(0.4))
        assert mvn_lower_orthant(v, [-math.inf, 0.4]) == 0.0
        assert mvn_lower_orthant(v, [math.inf, math.inf]) == 1.0


class TestSingular:
    def test_rank_one_reduces_to_scalar(self):
        a = np.array([1.0, 2.0])
        v = np.outer(a, a)
        assert numerical_rank(v) == 1
        # {w <= 0.5} and {2w <= 3} with w standard normal
        assert mvn_lower_orthant(v, [0.5, 3.0]) == pytest.approx(stats.norm.cdf(0.5), abs=1e-14)

    def test_anti_aligned_rank_one(self):
        v = np.array([[1.0, -1.0], [-1.0, 1.0]])
        # w <= 1 and -w <= 0.5
        assert mvn_lower_orthant(v, [1.0, 0.5]) == pytest.approx(stats.norm.cdf(1.0) - stats.norm.cdf(-0.5))

    def test_zero_covariance(self):
        assert mvn_lower_orthant(np.zeros((2, 2)), [0.0, 1.0]) == 1.0
        assert mvn_lower_orthant(np.zeros((2, 2)), [-1e-3, 1.0]) == 0.0

    def test_point_mass_coordinate_tolerates_round_off(self):
        v = np.diag([0.89, 0.0])
        expect = stats.norm.cdf(1.0 / math.sqrt(0.89))
        assert mvn_lower_orthant(v, [1.0, -1e-15]) == pytest.approx(expect, abs=1e-14)
        assert mvn_lower_orthant(v, [1.0, -1e-6]) == 0.0
        assert mvn_lower_orthant(np.zeros((2, 2)), [-1e-15, 0.0]) == 1.0

    def test_rank_two_in_three_dimensions(self):
        # Z3 = Z1 + Z2 with Z1, Z2 independent
        a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        v = a @ a.T
        rng = np.random.default_rng(5)
        w = rng.standard_normal((2_000_000, 2))
        z = np.array([0.3, -0.2, 0.5])
        hit = np.all(w @ a.T <= z, axis=1)
        mc, se = hit.mean(), hit.std() / math.sqrt(hit.size)
        assert abs(mvn_lower_orthant(v, z) - mc) <= 5 * se


class TestTrivariate:
    def test_independent_product(self):
        z = np.array([0.2, -0.5, 1.1])
        assert mvn_lower_orthant(np.eye(3), z) == pytest.approx(np.prod(stats.norm.cdf(z)), abs=1e-10)

    def test_against_scipy(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            v = random_cov(rng, 3)
            z = rng.normal(0, 1.0, 3)
            ref = stats.multivariate_normal.cdf(z, cov=v, abseps=1e-8, releps=1e-8, maxpts=5_000_000)
            assert mvn_lower_orthant(v, z) == pytest.approx(ref, abs=1e-6)

    def test_too_many_dimensions(self):
        with pytest.raises(ValueError):
            mvn_lower_orthant(np.eye(4), np.zeros(4))

    def test_input_checks(self):
        with pytest.raises(ValueError):
            mvn_lower_orthant([[1.0, 0.2], [0.3, 1.0]], [0, 0])
        with pytest.raises(ValueError):
            mvn_lower_orthant([[1.0, 2.0], [2.0, 1.0]], [0, 0])
        with pytest.raises(ValueError):
            mvn_lower_orthant(np.eye(2), [0.0, math.nan])
