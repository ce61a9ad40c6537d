import numpy as np
import pytest

from modules.linalg import (
    SymMatrix,
    effective_rank,
    ensure_unit,
    lambda_max,
    load_sym_matrix,
    norm_and_rank,
    operator_norm,
    psd_sqrt,
    save_sym_matrix,
    sym_eigen,
)
from tests.conftest import random_orthogonal
from utils.errors import DegenerateMatrix, DomainError, InvalidMatrix, NotPSD, ShapeError


class TestSymMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidMatrix):
            SymMatrix([[1.0, 2.0], [0.0, 1.0]])

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidMatrix):
            SymMatrix([[1.0, np.nan], [np.nan, 1.0]])

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            SymMatrix(np.ones((2, 3)))

    def test_entries_are_read_only(self):
        A = SymMatrix.identity(3)
        with pytest.raises(ValueError):
            A.entries[0, 0] = 5.0

    def test_arithmetic(self):
        A = SymMatrix.diagonal([1.0, 2.0])
        B = SymMatrix.identity(2)
        np.testing.assert_allclose((A - B).entries, np.diag([0.0, 1.0]))
        np.testing.assert_allclose((2 * A).entries, np.diag([2.0, 4.0]))
        with pytest.raises(ShapeError):
            A + SymMatrix.identity(3)


class TestEigen:
    def test_diagonal_values_sorted(self):
        eig = sym_eigen(np.diag([2.0, -5.0, 1.0]))
        np.testing.assert_allclose(eig.eigenvalues, [2.0, 1.0, -5.0])
        assert eig.converged

    @pytest.mark.parametrize("d", [1, 2, 5, 12])
    def test_matches_numpy(self, rng, d):
        M = rng.standard_normal((d, d))
        A = 0.5 * (M + M.T)
        eig = sym_eigen(A)
        np.testing.assert_allclose(eig.eigenvalues, np.sort(np.linalg.eigvalsh(A))[::-1], atol=1e-10)
        np.testing.assert_allclose(eig.reconstruct(), A, atol=1e-10)
        np.testing.assert_allclose(eig.eigenvectors.T @ eig.eigenvectors, np.eye(d), atol=1e-10)

    def test_zero_matrix(self):
        eig = sym_eigen(np.zeros((3, 3)))
        np.testing.assert_allclose(eig.eigenvalues, 0.0)
        assert eig.converged

    def test_rotated_spectrum(self, rng):
        Q = random_orthogonal(6, rng)
        values = np.array([10.0, 4.0, 1.0, 0.5, -2.0, -3.0])
        A = (Q * values) @ Q.T
        A = 0.5 * (A + A.T)
        np.testing.assert_allclose(sym_eigen(A).eigenvalues, values, atol=1e-10)


class TestNorms:
    def test_operator_norm_negative_dominant(self):
        assert operator_norm(np.diag([2.0, -5.0])) == pytest.approx(5.0)

    def test_lambda_max_signed(self):
        assert lambda_max(np.diag([-1.0, -5.0])) == pytest.approx(-1.0)

    def test_operator_norm_matches_numpy(self, rng):
        M = rng.standard_normal((7, 7))
        A = M + M.T
        assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-10)

    def test_operator_norm_triangle_inequality(self, rng):
        for _ in range(200):
            M = rng.standard_normal((5, 5))
            N = rng.standard_normal((5, 5)) * rng.uniform(0.1, 10.0)
            A, B = M + M.T, N + N.T
            assert operator_norm(A + B) <= (operator_norm(A) + operator_norm(B)) * (1.0 + 1e-9)


class TestEffectiveRank:
    def test_identity(self):
        assert effective_rank(SymMatrix.identity(5)) == pytest.approx(5.0)

    def test_rank_one(self):
        u = np.array([1.0, 2.0, 3.0])
        assert effective_rank(np.outer(u, u)) == pytest.approx(1.0)

    def test_two_level(self):
        assert effective_rank(np.diag([1.0, 0.5])) == pytest.approx(1.5)

    def test_invariant_under_scaling(self):
        S = np.diag([3.0, 2.0, 1.0])
        assert effective_rank(7.5 * S) == pytest.approx(effective_rank(S))

    def test_bounded_by_dimension(self, rng):
        M = rng.standard_normal((6, 6))
        r = effective_rank(M @ M.T)
        assert 1.0 <= r <= 6.0 + 1e-12

    def test_zero_matrix(self):
        with pytest.raises(DegenerateMatrix):
            effective_rank(np.zeros((3, 3)))

    def test_not_psd(self):
        with pytest.raises(NotPSD):
            effective_rank(np.diag([1.0, -1.0]))

    def test_norm_and_rank_together(self):
        norm, rank = norm_and_rank(np.diag([4.0, 2.0]))
        assert norm == pytest.approx(4.0)
        assert rank == pytest.approx(1.5)


class TestPsdSqrt:
    def test_diagonal(self):
        np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])).entries, np.diag([2.0, 3.0]), atol=1e-12)

    def test_squares_back(self, rng):
        M = rng.standard_normal((5, 5))
        S = M @ M.T
        R = psd_sqrt(S).entries
        np.testing.assert_allclose(R @ R, S, atol=1e-9)
        np.testing.assert_allclose(R, R.T)

    def test_tiny_negative_eigenvalue_clamped(self):
        R = psd_sqrt(np.diag([1.0, -1e-13]))
        np.testing.assert_allclose(R.entries, np.diag([1.0, 0.0]), atol=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(NotPSD):
            psd_sqrt(np.diag([1.0, -0.1]))


class TestEnsureUnit:
    def test_accepts_unit(self):
        v = ensure_unit([0.6, 0.8])
        np.testing.assert_allclose(v, [0.6, 0.8])

    def test_renormalizes_near_unit(self):
        v = ensure_unit([1.0 + 1e-8, 0.0])
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-15)

    def test_rejects_far_from_sphere(self):
        with pytest.raises(DomainError):
            ensure_unit([2.0, 0.0])


def test_csv_round_trip(tmp_path, rng):
    M = rng.standard_normal((4, 4))
    A = SymMatrix(M + M.T)
    path = tmp_path / "sigma.csv"
    save_sym_matrix(path, A)
    np.testing.assert_array_equal(load_sym_matrix(path).entries, A.entries)
