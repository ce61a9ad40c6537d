"""
Tensor Deviation Forms
Empirical s-linear deviation forms, their operator norm by shifted power iteration,
and a grid-search oracle for d <= 3
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

import config
from modules.linalg import MatrixLike, as_sym, ensure_unit, operator_norm
from utils.errors import DomainError, ShapeError
from utils.rng import as_seed

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class ZeroCentering:
    """Centering E<X, v>^s = 0"""

    s = None

    def value(self, V):
        V = np.asarray(V, dtype=float)
        return 0.0 if V.ndim == 1 else np.zeros(V.shape[1])

    def gradient(self, V):
        return np.zeros_like(np.asarray(V, dtype=float))

    def abs_moment_bound(self) -> float:
        return 0.0


class QuadraticCentering:
    """Centering v^T C v for s = 2"""

    s = 2

    def __init__(self, C: MatrixLike):
        self.C = as_sym(C).to_array()
        self._norm = operator_norm(self.C)

    def value(self, V):
        V = np.asarray(V, dtype=float)
        values = np.sum(V * (self.C @ V), axis=0)
        return float(values) if V.ndim == 1 else values

    def gradient(self, V):
        return 2.0 * self.C @ np.asarray(V, dtype=float)

    def abs_moment_bound(self) -> float:
        return self._norm


class EmpiricalTensorForm:
    """
    v -> (1/n) sum <X_i, v>^s - E<X, v>^s, evaluated in O(nd) without the d^s tensor

    Args:
        samples: n x d sample matrix
        s: Order, at least 2
        centering: Object with value(V), gradient(V) and abs_moment_bound(); None means zero
    """

    def __init__(self, samples, s: int, centering=None):
        X = np.asarray(samples, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ShapeError(f"Expected an n x d sample matrix, got shape {X.shape}")
        if int(s) != s or s < 2:
            raise DomainError(f"Order s must be an integer >= 2, got {s}")
        centering = centering if centering is not None else ZeroCentering()
        if getattr(centering, "s", None) not in (None, s):
            raise DomainError(f"Centering is for order {centering.s}, form has order {s}")

        self.samples = X
        self.s = int(s)
        self.centering = centering
        self._shift = None

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def values(self, V: np.ndarray) -> np.ndarray:
        """Form values at each column of V"""
        P = self.samples @ V
        return np.mean(P ** self.s, axis=0) - self.centering.value(V)

    def gradients(self, V: np.ndarray) -> np.ndarray:
        P = self.samples @ V
        n = self.samples.shape[0]
        return (self.s / n) * (self.samples.T @ P ** (self.s - 1)) - self.centering.gradient(V)

    def shift(self) -> float:
        """
        Bound on the spectral radius of the Hessian over s, on the unit sphere

        With this shift each power step cannot decrease the objective.
        """
        if self._shift is None:
            norms = np.linalg.norm(self.samples, axis=1)
            bound = (self.s - 1) * (float(np.mean(norms ** self.s)) + self.centering.abs_moment_bound())
            self._shift = bound * (1.0 + 1e-6) + 1e-12
        return self._shift


def form_value(F: EmpiricalTensorForm, v) -> float:
    """(1/n) sum <X_i, v>^s - E<X, v>^s at a unit vector"""
    v = ensure_unit(v)
    if v.size != F.d:
        raise ShapeError(f"Direction has dimension {v.size}, form has {F.d}")
    return float(F.values(v[:, None])[0])


@dataclass(frozen=True, eq=False)
class TensorNormResult:
    value: float
    argmax: np.ndarray
    converged: bool
    iterations: int
    starts: int

    def to_dict(self):
        return {
            "value": self.value,
            "argmax": [float(x) for x in self.argmax],
            "converged": self.converged,
            "iterations": self.iterations,
            "starts": self.starts,
        }


def _starting_points(d: int, restarts: int, seed, antipodal: bool) -> np.ndarray:
    # One draw per restart so that fewer restarts give a prefix of the same starts
    rng = as_seed(seed).generator()
    starts = []
    for _ in range(restarts):
        z = rng.standard_normal(d)
        norm = np.linalg.norm(z)
        while norm == 0.0:
            z = rng.standard_normal(d)
            norm = np.linalg.norm(z)
        starts.append(z / norm)
    V = np.array(starts).T
    if antipodal:
        V = np.hstack([V, -V])
    return V


def _ascend(F: EmpiricalTensorForm, V0: np.ndarray, sign: float, tol: float,
            max_iterations: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """
    Shifted power iteration maximizing sign * form on the sphere, one column per start

    Returns final iterates, sign * form values, per-column convergence and iterations used.
    """
    V = V0.copy()
    m = V.shape[1]
    alpha = np.full(m, F.shift())
    objective = sign * F.values(V)
    done = np.zeros(m, dtype=bool)
    iterations = 0

    for iteration in range(max_iterations):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        iterations = iteration + 1

        current = V[:, active]
        step = sign * F.gradients(current) / F.s + alpha[active] * current
        proposal = step / np.linalg.norm(step, axis=0)
        proposed = sign * F.values(proposal)

        # A decrease means the shift was too small for that column: double and retry
        worse = proposed < objective[active] - 1e-12 * np.maximum(1.0, np.abs(objective[active]))
        if np.any(worse):
            alpha[active[worse]] *= 2.0
        accepted = active[~worse]
        movement = np.linalg.norm(proposal[:, ~worse] - current[:, ~worse], axis=0)
        V[:, accepted] = proposal[:, ~worse]
        objective[accepted] = proposed[~worse]
        done[accepted[movement <= tol]] = True

    return V, objective, done, iterations


def _run(F: EmpiricalTensorForm, signs, restarts, tol, max_iterations, seed, antipodal):
    restarts = config.TENSOR_RESTARTS if restarts is None else int(restarts)
    if restarts < 1:
        raise DomainError(f"restarts must be >= 1, got {restarts}")
    tol = config.TENSOR_TOLERANCE if tol is None else tol
    max_iterations = config.TENSOR_MAX_ITERATIONS if max_iterations is None else max_iterations

    V0 = _starting_points(F.d, restarts, seed, antipodal)
    runs = [(sign,) + _ascend(F, V0, sign, tol, max_iterations) for sign in signs]
    converged = all(bool(np.all(done)) for _, _, _, done, _ in runs)
    iterations = max(it for _, _, _, _, it in runs)
    if not converged:
        logger.warning(f"Power iteration hit {max_iterations} iterations before every start converged (s={F.s}, d={F.d})")
    return runs, converged, iterations, V0.shape[1]


def operator_norm_sup(F: EmpiricalTensorForm, restarts: Optional[int] = None, tol: Optional[float] = None,
                      max_iterations: Optional[int] = None, seed=0, antipodal: bool = True) -> TensorNormResult:
    """
    Lower bound on sup over unit v of |form(v)|, maximizing the form and its negation

    Args:
        F: Empirical tensor form
        restarts: Random starting points (antipodes added on top when antipodal)
        tol: Stop a start once its iterate moves less than this
        max_iterations: Cap per start
        seed: SeedSpec or integer seed of the starting points
        antipodal: Also start from -v for every random v

    Returns:
        TensorNormResult; value is |form| evaluated exactly at the returned unit vector
    """
    runs, converged, iterations, starts = _run(F, (1.0, -1.0), restarts, tol, max_iterations, seed, antipodal)
    best_value = -np.inf
    best_vector = None
    for sign, V, objective, _, _ in runs:
        magnitudes = np.abs(objective)
        column = int(np.argmax(magnitudes))
        if magnitudes[column] > best_value:
            best_value = float(magnitudes[column])
            best_vector = V[:, column].copy()
    return TensorNormResult(best_value, best_vector, converged, iterations, starts)


def signed_sup(F: EmpiricalTensorForm, sign: float, restarts: Optional[int] = None, tol: Optional[float] = None,
               max_iterations: Optional[int] = None, seed=0, antipodal: bool = True) -> TensorNormResult:
    """One-sided supremum of sign * form over the sphere (sign -1 gives the lower deviation)"""
    if sign not in (1, -1, 1.0, -1.0):
        raise DomainError(f"sign must be +1 or -1, got {sign}")
    runs, converged, iterations, starts = _run(F, (float(sign),), restarts, tol, max_iterations, seed, antipodal)
    _, V, objective, _, _ = runs[0]
    column = int(np.argmax(objective))
    return TensorNormResult(float(objective[column]), V[:, column].copy(), converged, iterations, starts)


def fibonacci_sphere(m: int) -> np.ndarray:
    """m nearly uniform points on S^2, shape (3, m)"""
    i = np.arange(m, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / m
    radius = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.vstack([radius * np.cos(phi), radius * np.sin(phi), z])


def circle_grid(m: int) -> np.ndarray:
    """m equally spaced points on S^1, shape (2, m)"""
    theta = 2.0 * math.pi * np.arange(m) / m
    return np.vstack([np.cos(theta), np.sin(theta)])


def oracle_points(d: int, m: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0, -1.0]])
    if d == 2:
        return circle_grid(m)
    if d == 3:
        return fibonacci_sphere(m)
    raise DomainError(f"Grid oracle is available for d <= 3 only, got d={d}")


def grid_sup(F: EmpiricalTensorForm, m: int = 1_000_000, chunk: int = 50_000) -> TensorNormResult:
    """Max of |form| over a fixed grid of the sphere"""
    points = oracle_points(F.d, m)
    best_value = -np.inf
    best_vector = None
    for start in range(0, points.shape[1], chunk):
        block = points[:, start:start + chunk]
        magnitudes = np.abs(F.values(block))
        column = int(np.argmax(magnitudes))
        if magnitudes[column] > best_value:
            best_value = float(magnitudes[column])
            best_vector = block[:, column].copy()
    return TensorNormResult(best_value, best_vector, True, 0, points.shape[1])
