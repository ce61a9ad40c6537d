"""
Dense Symmetric Linear Algebra
Cyclic Jacobi eigensolver, operator norm, effective rank and PSD square root
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Tuple, Union

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except Exception:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore
        def deco(fn):
            return fn
        return deco

import config
from utils.data_io import read_matrix_csv, write_matrix_csv
from utils.errors import DegenerateMatrix, DomainError, InvalidMatrix, NotPSD, ShapeError

logger = logging.getLogger(__name__)


class SymMatrix:
    """
    Immutable dense symmetric d x d matrix

    Entries are copied on construction and stored read-only, so instances can be
    shared across threads.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ShapeError(f"Expected a nonempty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidMatrix("Matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a))))
        asymmetry = float(np.max(np.abs(a - a.T)))
        if asymmetry > config.SYMMETRY_TOLERANCE * scale:
            raise InvalidMatrix(f"Matrix is not symmetric (max |A - A^T| = {asymmetry:.3e})")
        a.setflags(write=False)
        self._entries = a

    @classmethod
    def identity(cls, d: int) -> "SymMatrix":
        if d < 1:
            raise ShapeError(f"Dimension must be positive, got {d}")
        return cls(np.eye(d))

    @classmethod
    def diagonal(cls, values: Iterable[float]) -> "SymMatrix":
        return cls(np.diag(np.asarray(list(values), dtype=float)))

    @property
    def d(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    def to_array(self) -> np.ndarray:
        return self._entries.copy()

    def trace(self) -> float:
        return float(np.trace(self._entries))

    def _check_same_dimension(self, other: "SymMatrix"):
        if other.d != self.d:
            raise ShapeError(f"Dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        self._check_same_dimension(other)
        return SymMatrix(self._entries + other._entries)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        self._check_same_dimension(other)
        return SymMatrix(self._entries - other._entries)

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self._entries)

    def __mul__(self, scalar: float) -> "SymMatrix":
        return SymMatrix(float(scalar) * self._entries)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SymMatrix(d={self.d})"


MatrixLike = Union[SymMatrix, np.ndarray, list]


def as_sym(A: MatrixLike) -> SymMatrix:
    return A if isinstance(A, SymMatrix) else SymMatrix(A)


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigenvalues sorted descending and the matching orthonormal eigenvector columns"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int
    converged: bool

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


@njit(cache=True, nogil=True)
def _jacobi_sweeps(a, tol, max_sweeps):
    """
    Cyclic Jacobi rotations applied in place to a symmetric array

    Returns the rotated array (diagonal holds eigenvalues), the accumulated rotation,
    the number of sweeps and the final off-diagonal Frobenius norm.
    """
    d = a.shape[0]
    v = np.eye(d)
    previous = np.inf
    off = 0.0
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(d):
            for j in range(d):
                if i != j:
                    off += a[i, j] * a[i, j]
        off = np.sqrt(off)
        # Converged, or stuck at the rounding floor
        if off <= tol or off >= previous:
            return a, v, sweep, off
        if sweep == max_sweeps:
            break
        previous = off
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # Columns p, q of A J
                for k in range(d):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                # Rows p, q of J^T (A J)
                for k in range(d):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(d):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return a, v, max_sweeps, off


def sym_eigen(A: MatrixLike) -> EigenDecomposition:
    """
    Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations

    Args:
        A: Symmetric matrix (validated into a SymMatrix when given as an array)

    Returns:
        EigenDecomposition with eigenvalues in descending order
    """
    A = as_sym(A)
    work = np.array(A.entries, dtype=np.float64)
    work = 0.5 * (work + work.T)
    scale = float(np.linalg.norm(work))
    tol = config.JACOBI_TOLERANCE * scale

    rotated, vectors, sweeps, off = _jacobi_sweeps(work, tol, config.JACOBI_MAX_SWEEPS)
    converged = bool(off <= 100.0 * tol) or scale == 0.0
    if not converged:
        logger.warning(f"Jacobi stopped after {sweeps} sweeps with off-diagonal norm {off:.3e} (d={A.d})")

    values = np.diag(rotated).copy()
    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(
        eigenvalues=values[order],
        eigenvectors=np.ascontiguousarray(vectors[:, order]),
        sweeps=int(sweeps),
        converged=converged,
    )


def operator_norm(A: MatrixLike) -> float:
    """Largest absolute eigenvalue"""
    values = sym_eigen(A).eigenvalues
    return float(max(abs(values[0]), abs(values[-1])))


def lambda_max(A: MatrixLike) -> float:
    """Largest signed eigenvalue"""
    return float(sym_eigen(A).eigenvalues[0])


def _check_psd(eig: EigenDecomposition) -> float:
    norm = float(max(abs(eig.eigenvalues[0]), abs(eig.eigenvalues[-1])))
    smallest = float(eig.eigenvalues[-1])
    if smallest < -config.PSD_TOLERANCE * norm:
        raise NotPSD(f"Smallest eigenvalue {smallest:.3e} is below -{config.PSD_TOLERANCE:g}*||S|| ({norm:.3e})")
    return norm


def norm_and_rank(S: MatrixLike) -> Tuple[float, float]:
    """
    Operator norm and effective rank of a nonzero PSD matrix from one eigendecomposition

    Raises:
        NotPSD: eigenvalue below -tol*||S||
        DegenerateMatrix: S is zero
    """
    S = as_sym(S)
    norm = _check_psd(sym_eigen(S))
    if norm == 0.0:
        raise DegenerateMatrix("Effective rank is undefined for the zero matrix")
    return norm, S.trace() / norm


def effective_rank(S: MatrixLike) -> float:
    """
    Effective rank tr(S) / ||S|| of a nonzero PSD matrix

    Args:
        S: PSD matrix

    Returns:
        Effective rank, between 1 and d
    """
    return norm_and_rank(S)[1]


def ensure_unit(v) -> np.ndarray:
    """
    Validate a unit vector

    Vectors within the renormalize tolerance are normalized with a warning; anything
    further from the sphere is rejected.
    """
    v = np.asarray(v, dtype=float).ravel()
    length = float(np.linalg.norm(v))
    deviation = abs(length - 1.0)
    if deviation <= config.UNIT_TOLERANCE:
        return v
    if deviation <= config.UNIT_RENORMALIZE_TOLERANCE:
        logger.warning(f"Renormalizing direction with norm {length:.12f}")
        return v / length
    raise DomainError(f"Expected a unit vector, got norm {length:.6g}")


def psd_sqrt(S: MatrixLike) -> SymMatrix:
    """
    Symmetric PSD square root

    Eigenvalues in [-tol*||S||, 0) are clamped to zero; anything lower is rejected.
    """
    S = as_sym(S)
    eig = sym_eigen(S)
    _check_psd(eig)
    roots = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    v = eig.eigenvectors
    root = (v * roots) @ v.T
    return SymMatrix(0.5 * (root + root.T))


def load_sym_matrix(path) -> SymMatrix:
    """Read a symmetric matrix from the CSV convention"""
    return SymMatrix(read_matrix_csv(path))


def save_sym_matrix(path, A: MatrixLike):
    write_matrix_csv(path, as_sym(A).entries)
