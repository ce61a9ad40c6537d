"""
Estimators
Sample covariance, deviation statistics and the truncated moment estimator
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

import config
from modules.distributions import DistributionFamily
from modules.linalg import (
    MatrixLike,
    SymMatrix,
    as_sym,
    ensure_unit,
    lambda_max,
    norm_and_rank,
    operator_norm,
)
from utils.errors import DomainError, ShapeError
from utils.rng import as_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TruncationConfig:
    """Truncation level lam, moment order s and confidence parameter t"""

    lam: float
    s: int
    t: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"Truncation level must be positive and finite, got {self.lam}")
        if int(self.s) != self.s or self.s < 1:
            raise DomainError(f"Moment order must be an integer >= 1, got {self.s}")
        if not self.t > 0:
            raise DomainError(f"Confidence parameter t must be positive, got {self.t}")


def psi(x):
    """Truncation function: identity on [-1, 1], sign(x) outside"""
    clipped = np.clip(x, -1.0, 1.0)
    return float(clipped) if np.ndim(clipped) == 0 else clipped


def psi_lower(x):
    """
    Negative part of the truncation function: x on [-1, 0], -1 below

    Raises:
        DomainError: any x > 0
    """
    array = np.asarray(x, dtype=float)
    if np.any(array > 0):
        raise DomainError("psi_lower is defined for x <= 0 only")
    clipped = np.maximum(array, -1.0)
    return float(clipped) if clipped.ndim == 0 else clipped


def _as_samples(samples) -> np.ndarray:
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeError(f"Expected an n x d sample matrix with n >= 1, got shape {X.shape}")
    return X


def sample_covariance(samples) -> SymMatrix:
    """(1/n) sum X_i X_i^T"""
    X = _as_samples(samples)
    S = X.T @ X / X.shape[0]
    return SymMatrix(0.5 * (S + S.T))


def _check_dimensions(X: np.ndarray, Sigma: SymMatrix):
    if X.shape[1] != Sigma.d:
        raise ShapeError(f"Samples have dimension {X.shape[1]} but Sigma is {Sigma.d}x{Sigma.d}")


def covariance_deviation(samples, Sigma: MatrixLike) -> float:
    """||sample_covariance - Sigma|| in operator norm"""
    X = _as_samples(samples)
    Sigma = as_sym(Sigma)
    _check_dimensions(X, Sigma)
    return operator_norm(sample_covariance(X) - Sigma)


def lower_covariance_deviation(samples, Sigma: MatrixLike) -> float:
    """sup over unit v of v^T Sigma v - v^T S v, i.e. lambda_max(Sigma - S)"""
    X = _as_samples(samples)
    Sigma = as_sym(Sigma)
    _check_dimensions(X, Sigma)
    return lambda_max(Sigma - sample_covariance(X))


def upper_covariance_deviation(samples, Sigma: MatrixLike) -> float:
    """lambda_max(S - Sigma)"""
    X = _as_samples(samples)
    Sigma = as_sym(Sigma)
    _check_dimensions(X, Sigma)
    return lambda_max(sample_covariance(X) - Sigma)


def truncation_level(eta: float, s: int, Sigma: MatrixLike, n: int, t: float) -> float:
    """
    Truncation level sqrt((r(Sigma) + t) / (n eta^{2s} ||Sigma||^s))

    Args:
        eta: L_{2s}-L_2 constant
        s: Moment order
        Sigma: Covariance matrix
        n: Sample size
        t: Confidence parameter

    Returns:
        lambda
    """
    if not eta > 0 or s < 1 or n < 1 or not t > 0:
        raise DomainError(f"Invalid truncation inputs eta={eta}, s={s}, n={n}, t={t}")
    norm, rank = norm_and_rank(Sigma)
    return math.sqrt((rank + t) / (n * eta ** (2 * s) * norm ** s))


def logconcave_truncation_level(kappa: float, Sigma: MatrixLike, n: int) -> float:
    """Level (1/||Sigma||) sqrt(2 r / (n (8 kappa)^4)) used for log-concave covariance estimation"""
    if not kappa > 0 or n < 1:
        raise DomainError(f"Invalid inputs kappa={kappa}, n={n}")
    norm, rank = norm_and_rank(Sigma)
    return math.sqrt(2.0 * rank / (n * (8.0 * kappa) ** 4)) / norm


def eta_from_psi2(kappa: float, s: int) -> float:
    """eta = 3 kappa sqrt(2s), from q-th moments of a psi_2 variable"""
    return 3.0 * kappa * math.sqrt(2.0 * s)


def eta_from_psi1(kappa: float, s: int) -> float:
    """eta = 4 kappa s, from q-th moments of a psi_1 variable"""
    return 4.0 * kappa * s


def _truncated_terms(samples, v, cfg: TruncationConfig) -> np.ndarray:
    X = _as_samples(samples)
    v = ensure_unit(v)
    if X.shape[1] != v.size:
        raise ShapeError(f"Direction has dimension {v.size}, samples have {X.shape[1]}")
    return cfg.lam * (X @ v) ** int(cfg.s)


def truncated_moment_estimate(samples, v, cfg: TruncationConfig) -> float:
    """
    (1/(n lam)) sum psi(lam <v, X_i>^s)

    The result is bounded by 1/lam in absolute value.
    """
    terms = _truncated_terms(samples, v, cfg)
    return float(np.mean(psi(terms)) / cfg.lam)


def truncated_moment_record(samples, v, cfg: TruncationConfig) -> Dict[str, Any]:
    """Estimate plus the share of clipped terms, ready for JSON"""
    terms = _truncated_terms(samples, v, cfg)
    return {
        "v": [float(x) for x in ensure_unit(v)],
        "s": int(cfg.s),
        "lambda": float(cfg.lam),
        "estimate": float(np.mean(psi(terms)) / cfg.lam),
        "clipped_fraction": float(np.mean(np.abs(terms) > 1.0)),
    }


def true_moment(family: DistributionFamily, v, s: int) -> float:
    """
    E<X, v>^s in closed form

    Raises:
        MomentDoesNotExist: s >= nu for student-t
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size != family.d:
        raise ShapeError(f"Direction has dimension {v.size}, family has {family.d}")
    return family.moment_provider(s).value(v)


def monte_carlo_moment(family: DistributionFamily, v, s: int, draws: int = None, seed=0,
                       chunk: int = 100_000) -> Tuple[float, float]:
    """
    Monte Carlo E<X, v>^s with its standard error

    Returns:
        (estimate, standard error)
    """
    draws = draws or config.MOMENT_ORACLE_DRAWS
    v = np.asarray(v, dtype=float).ravel()
    rng = as_seed(seed).generator()
    total = 0.0
    total_sq = 0.0
    remaining = draws
    while remaining > 0:
        size = min(chunk, remaining)
        values = (family.core_sample(size, rng) @ family.root @ v) ** s
        total += float(np.sum(values))
        total_sq += float(np.sum(values * values))
        remaining -= size
    mean = total / draws
    variance = max(total_sq / draws - mean * mean, 0.0)
    return mean, math.sqrt(variance / draws)


def empirical_cs(errors, eta: float, s: int, Sigma: MatrixLike, n: int, t: float) -> float:
    """
    Calibrated C_s: the (1 - 2e^{-t}) quantile of observed errors over eta^s ||Sigma||^{s/2} sqrt((r + t)/n)
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise DomainError("No errors to calibrate from")
    norm, rank = norm_and_rank(Sigma)
    level = min(max(1.0 - 2.0 * math.exp(-t), 0.0), 1.0)
    scale = eta ** s * norm ** (s / 2.0) * math.sqrt((rank + t) / n)
    return float(np.quantile(errors, level)) / scale


def scalar_lower_tail(t: float, second_moment: float) -> float:
    """exp(-t^2 / (2 E Z^2)): bound on Pr(E Z - Z >= t) for nonnegative Z"""
    if t < 0 or not second_moment > 0:
        raise DomainError(f"Need t >= 0 and E Z^2 > 0, got t={t}, E Z^2={second_moment}")
    return math.exp(-t * t / (2.0 * second_moment))
