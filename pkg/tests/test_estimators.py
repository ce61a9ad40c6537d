import math

import numpy as np
import pytest

from modules import estimators
from modules.distributions import DistributionFamily
from modules.estimators import TruncationConfig
from modules.linalg import SymMatrix
from utils.errors import DomainError, MomentDoesNotExist, ShapeError


class TestTruncationFunctions:
    @pytest.mark.parametrize("x,expected", [(0.5, 0.5), (3.0, 1.0), (-2.0, -1.0), (0.0, 0.0)])
    def test_psi(self, x, expected):
        assert estimators.psi(x) == expected

    def test_psi_vectorized(self):
        np.testing.assert_array_equal(estimators.psi(np.array([-5.0, 0.2, 9.0])), [-1.0, 0.2, 1.0])

    @pytest.mark.parametrize("x,expected", [(0.0, 0.0), (-0.3, -0.3), (-7.0, -1.0)])
    def test_psi_lower(self, x, expected):
        assert estimators.psi_lower(x) == pytest.approx(expected)

    def test_psi_lower_positive(self):
        with pytest.raises(DomainError):
            estimators.psi_lower(0.1)

    def test_psi_is_odd(self):
        x = np.linspace(-20.0, 20.0, 40_001)
        np.testing.assert_array_equal(estimators.psi(-x), -estimators.psi(x))

    def test_psi_lower_sandwich(self):
        x = np.linspace(-50.0, 0.0, 100_001)
        lower = estimators.psi_lower(x)
        assert np.all(x <= lower)
        assert np.all(lower <= np.log1p(x + x * x / 2.0) + 1e-15)

    def test_psi_almost_convex(self, rng):
        # 1-Lipschitz
        a = rng.uniform(-3, 3, 1000)
        b = rng.uniform(-3, 3, 1000)
        assert np.all(np.abs(estimators.psi(a) - estimators.psi(b)) <= np.abs(a - b) + 1e-15)


class TestSampleCovariance:
    def test_single_basis_rows(self):
        np.testing.assert_allclose(estimators.sample_covariance(np.array([[1.0, 0.0]] * 3)).entries,
                                   [[1.0, 0.0], [0.0, 0.0]])

    def test_two_rows(self):
        S = estimators.sample_covariance(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(S.entries, np.diag([0.5, 0.5]))

    def test_consistency(self):
        f = DistributionFamily.from_dict({"kind": "gaussian", "sigma": {"kind": "diag", "values": [2.0, 1.0]}})
        X = f.sample(100_000, 3)
        assert estimators.covariance_deviation(X, f.sigma_matrix) < 0.1


class TestDeviations:
    def test_exact_match_gives_zero(self):
        # Rows sqrt(d) * sqrt(lambda_j) * u_j have sample covariance Sigma
        values = np.array([3.0, 1.0])
        X = np.sqrt(2.0) * np.diag(np.sqrt(values))
        Sigma = SymMatrix.diagonal(values)
        assert estimators.covariance_deviation(X, Sigma) == pytest.approx(0.0, abs=1e-12)

    def test_single_sample_against_zero(self):
        x = np.array([[1.0, 2.0, 2.0]])
        assert estimators.covariance_deviation(x, np.zeros((3, 3))) == pytest.approx(9.0)

    def test_one_sided(self):
        X = np.array([[2.0, 0.0], [0.0, 0.0]])
        # S = diag(2, 0), Sigma = I: S - Sigma = diag(1, -1)
        assert estimators.upper_covariance_deviation(X, np.eye(2)) == pytest.approx(1.0)
        assert estimators.lower_covariance_deviation(X, np.eye(2)) == pytest.approx(1.0)
        X = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert estimators.lower_covariance_deviation(X, np.eye(2)) == pytest.approx(1.0)
        assert estimators.upper_covariance_deviation(X, np.eye(2)) == pytest.approx(0.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            estimators.covariance_deviation(np.ones((3, 2)), np.eye(3))


class TestTruncationLevel:
    def test_substitution(self):
        assert estimators.truncation_level(1.0, 2, SymMatrix.identity(4), 100, 5.0) == pytest.approx(0.3)

    def test_eta_scaling(self):
        assert estimators.truncation_level(2.0, 2, SymMatrix.identity(4), 100, 5.0) == pytest.approx(0.075)

    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_sigma_homogeneity(self, s):
        Sigma = SymMatrix.diagonal([3.0, 1.0, 0.5])
        base = estimators.truncation_level(1.5, s, Sigma, 200, 2.0)
        scaled = estimators.truncation_level(1.5, s, 4.0 * Sigma, 200, 2.0)
        assert scaled == pytest.approx(base * 4.0 ** (-s / 2.0))

    def test_invalid(self):
        with pytest.raises(DomainError):
            estimators.truncation_level(1.0, 2, SymMatrix.identity(2), 100, 0.0)

    def test_eta_formulas(self):
        assert estimators.eta_from_psi2(1.0, 2) == pytest.approx(6.0)
        assert estimators.eta_from_psi1(0.5, 3) == pytest.approx(6.0)

    def test_logconcave_level(self):
        lam = estimators.logconcave_truncation_level(1.0, SymMatrix.identity(2), 8)
        assert lam == pytest.approx(math.sqrt(4.0 / (8.0 * 8.0 ** 4)))


class TestTruncatedEstimate:
    def test_inside_unclipped_region(self):
        X = np.array([[0.5, 0.0]])
        cfg = TruncationConfig(lam=1.0, s=2, t=1.0)
        assert estimators.truncated_moment_estimate(X, [1.0, 0.0], cfg) == pytest.approx(0.25)

    def test_clipped(self):
        X = np.array([[2.0, 0.0]])
        cfg = TruncationConfig(lam=0.5, s=2, t=1.0)
        assert estimators.truncated_moment_estimate(X, [1.0, 0.0], cfg) == pytest.approx(2.0)

    def test_bounded_by_inverse_level(self, rng):
        X = 100.0 * rng.standard_normal((50, 3))
        cfg = TruncationConfig(lam=0.2, s=3, t=1.0)
        v = np.array([0.0, 0.6, 0.8])
        assert abs(estimators.truncated_moment_estimate(X, v, cfg)) <= 1.0 / 0.2 + 1e-12

    def test_record(self):
        X = np.array([[2.0, 0.0], [0.5, 0.0]])
        record = estimators.truncated_moment_record(X, [1.0, 0.0], TruncationConfig(0.5, 2, 1.0))
        assert record["clipped_fraction"] == pytest.approx(0.5)
        assert record["estimate"] == pytest.approx((1.0 + 0.125) / 2 / 0.5)
        assert record["lambda"] == 0.5

    def test_non_unit_direction(self):
        with pytest.raises(DomainError):
            estimators.truncated_moment_estimate(np.ones((2, 2)), [1.0, 1.0], TruncationConfig(1.0, 2, 1.0))

    @pytest.mark.parametrize("lam,s,t", [(0.0, 2, 1.0), (1.0, 0, 1.0), (1.0, 2, 0.0), (math.inf, 2, 1.0)])
    def test_config_validation(self, lam, s, t):
        with pytest.raises(DomainError):
            TruncationConfig(lam, s, t)

    def test_concentrates_on_true_moment(self):
        f = DistributionFamily.from_dict({"kind": "gaussian", "sigma": {"kind": "identity", "d": 4}})
        X = f.sample(10_000, 17)
        eta = f.eta(2)
        lam = estimators.truncation_level(eta, 2, f.sigma_matrix, 10_000, 5.0)
        v = np.array([1.0, 0.0, 0.0, 0.0])
        estimate = estimators.truncated_moment_estimate(X, v, TruncationConfig(lam, 2, 5.0))
        assert estimate == pytest.approx(1.0, abs=0.1)


class TestTrueMoment:
    def test_gaussian_odd(self, gaussian_identity_family):
        assert estimators.true_moment(gaussian_identity_family, [0.5, 0.5, 0.5, 0.5], 3) == pytest.approx(0.0)

    def test_gaussian_fourth(self, gaussian_identity_family):
        assert estimators.true_moment(gaussian_identity_family, [0.0, 0.6, 0.8, 0.0], 4) == pytest.approx(3.0)

    def test_rademacher_second(self):
        f = DistributionFamily.from_dict({"kind": "rademacher-mix", "sigma": {"kind": "identity", "d": 1}})
        assert estimators.true_moment(f, [1.0], 2) == pytest.approx(1.0)

    def test_student_t_missing_moment(self):
        f = DistributionFamily.from_dict({"kind": "student-t", "sigma": {"kind": "identity", "d": 2}, "nu": 5})
        with pytest.raises(MomentDoesNotExist):
            estimators.true_moment(f, [1.0, 0.0], 6)

    def test_monte_carlo_agrees(self, gaussian_identity_family):
        mean, se = estimators.monte_carlo_moment(gaussian_identity_family, [1.0, 0.0, 0.0, 0.0], 4,
                                                 draws=200_000, seed=4)
        assert abs(mean - 3.0) < 5 * se


class TestCalibration:
    def test_empirical_cs(self):
        errors = np.full(100, 0.2)
        # eta = 1, s = 2, Sigma = I_4, n = 100, t near 0: scale sqrt(4/100) = 0.2
        assert estimators.empirical_cs(errors, 1.0, 2, SymMatrix.identity(4), 100, 1e-9) == pytest.approx(1.0)

    def test_scalar_lower_tail(self):
        assert estimators.scalar_lower_tail(2.0, 1.0) == pytest.approx(math.exp(-2.0))
        with pytest.raises(DomainError):
            estimators.scalar_lower_tail(-1.0, 1.0)


def _random_discrete(rng, max_support=8, scale=3.0):
    size = int(rng.integers(1, max_support + 1))
    values = scale * rng.standard_normal(size)
    weights = rng.dirichlet(np.ones(size))
    return values, weights


class TestTruncationInequalities:
    def test_psi_below_log_quadratic(self, rng):
        grid = np.concatenate([np.linspace(-100.0, 100.0, 100_000), rng.uniform(-50.0, 50.0, 10_000)])
        assert np.all(estimators.psi(grid) <= np.log1p(grid + grid ** 2) + 1e-12)

    def test_psi_of_mean(self, rng):
        for _ in range(1000):
            z, p = _random_discrete(rng)
            lhs = estimators.psi(float(p @ z))
            rhs = float(p @ np.log1p(z + z ** 2)) + min(1.0, float(p @ z ** 2) / 6.0)
            assert lhs <= rhs + 1e-12

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    def test_absorbing_the_clipped_square(self, rng, a):
        inflation = 1.0 + (7.0 + math.sqrt(6.0)) * (math.exp(a) - 1.0) / 6.0
        for _ in range(1000):
            z, p = _random_discrete(rng)
            lhs = float(p @ np.log1p(z + z ** 2)) + a * float(p @ np.minimum(1.0, z ** 2 / 6.0))
            rhs = float(p @ np.log1p(z + inflation * z ** 2))
            assert lhs <= rhs + 1e-12
