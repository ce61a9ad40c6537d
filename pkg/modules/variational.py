"""
Variational Duality
Entropy/log-MGF duality and the PAC-Bayes certificate on finite probability spaces
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy import special

from utils.errors import DomainError, NotAbsolutelyContinuous, ShapeError
from utils.rng import DUALITY_STREAM, as_seed

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


def _as_weights(weights, name: str) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise DomainError(f"{name} must have at least one point")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError(f"{name} weights must be finite and nonnegative")
    total = float(np.sum(w))
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise DomainError(f"{name} weights must sum to 1, got {total:.15g}")
    return w


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Finite probability space: k labels and their weights"""

    weights: np.ndarray
    points: Optional[Sequence[Any]] = None

    def __post_init__(self):
        w = _as_weights(self.weights, "mu")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.points is None:
            object.__setattr__(self, "points", tuple(range(w.size)))
        elif len(self.points) != w.size:
            raise ShapeError(f"{len(self.points)} points but {w.size} weights")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def support(self) -> np.ndarray:
        return self.weights > 0


def _weights_of(measure) -> np.ndarray:
    return measure.weights if isinstance(measure, DiscreteSpace) else np.asarray(measure, dtype=float).ravel()


@dataclass(frozen=True, eq=False)
class DiscreteMeasurePair:
    """
    mu and a second measure rho on the same points, with rho << mu

    Raises:
        NotAbsolutelyContinuous: rho puts mass on a point where mu has none
    """

    mu: DiscreteSpace
    rho: np.ndarray

    def __post_init__(self):
        rho = _as_weights(_weights_of(self.rho), "rho")
        if rho.size != self.mu.k:
            raise ShapeError(f"rho has {rho.size} points, mu has {self.mu.k}")
        offending = np.flatnonzero((rho > 0) & ~self.mu.support)
        if offending.size:
            raise NotAbsolutelyContinuous(f"rho charges points {offending.tolist()} where mu vanishes")
        object.__setattr__(self, "rho", rho)


def _values(mu: DiscreteSpace, g) -> np.ndarray:
    g = np.asarray(g, dtype=float).ravel()
    if g.size != mu.k:
        raise ShapeError(f"g has {g.size} values, mu has {mu.k} points")
    return g


def kl_divergence(pair: DiscreteMeasurePair) -> float:
    """sum rho_i log(rho_i / mu_i), with 0 log 0 = 0"""
    value = float(np.sum(special.rel_entr(pair.rho, pair.mu.weights)))
    return max(value, 0.0)


def log_mgf(mu: DiscreteSpace, g) -> float:
    """
    log sum mu_i exp(g_i) over the support of mu

    Args:
        mu: Base measure
        g: One value per point (ignored where mu vanishes)

    Returns:
        Log moment generating value, overflow-safe through log-sum-exp
    """
    g = _values(mu, g)
    support = mu.support
    return float(special.logsumexp(g[support], b=mu.weights[support]))


def gibbs_posterior(mu: DiscreteSpace, g) -> np.ndarray:
    """Weights proportional to mu_i exp(g_i), zero off the support of mu"""
    g = _values(mu, g)
    support = mu.support
    rho = np.zeros(mu.k)
    rho[support] = special.softmax(g[support] + np.log(mu.weights[support]))
    return rho


def duality_gap(mu: DiscreteSpace, g, rho) -> float:
    """
    log E_mu exp(g) - (E_rho g - KL(rho, mu)), nonnegative with equality at the Gibbs posterior

    Raises:
        NotAbsolutelyContinuous: rho is not dominated by mu
    """
    g = _values(mu, g)
    pair = DiscreteMeasurePair(mu, rho)
    charged = pair.rho > 0
    expectation = float(np.dot(pair.rho[charged], g[charged]))
    return log_mgf(mu, g) - (expectation - kl_divergence(pair))


@dataclass(frozen=True)
class DualityCheck:
    size: int
    reps: int
    max_gibbs_gap: float
    min_random_gap: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "size": self.size,
            "reps": self.reps,
            "max_gibbs_gap": self.max_gibbs_gap,
            "min_random_gap": self.min_random_gap,
        }


def random_instance(size: int, rng: np.random.Generator, scale: float = 5.0):
    """Random (mu, g, rho) with Dirichlet weights; rho lives on the support of mu"""
    weights = rng.dirichlet(np.ones(size))
    if size > 2:
        # Knock out some points so the support restriction gets exercised
        dropped = rng.random(size) < 0.2
        dropped[int(np.argmax(weights))] = False
        weights[dropped] = 0.0
        weights /= weights.sum()
    mu = DiscreteSpace(weights)
    g = scale * rng.standard_normal(size)
    rho = np.zeros(size)
    rho[mu.support] = rng.dirichlet(np.ones(int(mu.support.sum())))
    return mu, g, rho


def duality_check(size: int, seed, reps: int) -> DualityCheck:
    """
    Gap at the Gibbs posterior and at random rho over reps random instances

    Args:
        size: Number of points
        seed: Integer master seed or SeedSpec
        reps: Random instances, at least 1

    Returns:
        DualityCheck with max |gap at Gibbs| and min gap at random rho
    """
    if size < 1:
        raise DomainError(f"size must be >= 1, got {size}")
    if reps < 1:
        raise DomainError(f"reps must be >= 1, got {reps}")
    rng = as_seed(seed).child(DUALITY_STREAM).generator()

    max_gibbs = 0.0
    min_random = math.inf
    for _ in range(reps):
        mu, g, rho = random_instance(size, rng)
        max_gibbs = max(max_gibbs, abs(duality_gap(mu, g, gibbs_posterior(mu, g))))
        min_random = min(min_random, duality_gap(mu, g, rho))
    logger.info(f"Duality check over {reps} instances of size {size}: max Gibbs gap {max_gibbs:.3e}")
    return DualityCheck(size, reps, max_gibbs, min_random)


class FiniteExperiment:
    """
    f(x, theta) on a finite X-alphabet with known probabilities, so E_X exp f is exact

    Args:
        f: m x k table, rows indexed by x, columns by theta
        x_probabilities: Law of X over the m letters
    """

    def __init__(self, f, x_probabilities):
        self.f = np.asarray(f, dtype=float)
        if self.f.ndim != 2:
            raise ShapeError(f"f must be an m x k table, got shape {self.f.shape}")
        self.p = _as_weights(x_probabilities, "X law")
        if self.p.size != self.f.shape[0]:
            raise ShapeError(f"X law has {self.p.size} letters, f has {self.f.shape[0]} rows")
        support = self.p > 0
        # log E_X exp f(X, theta), one value per theta
        self.log_mgf_x = special.logsumexp(self.f[support], b=self.p[support, None], axis=0)

    @property
    def k(self) -> int:
        return self.f.shape[1]

    def draw_counts(self, n: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """Letter counts of n iid draws of X (one row per resample when size is given)"""
        return rng.multinomial(n, self.p, size=size)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.p.size, size=n, p=self.p)


@dataclass(frozen=True)
class Certificate:
    holds: bool
    lhs: float
    rhs: float
    slack: float
    kl: float

    def to_dict(self) -> Dict[str, Any]:
        return {"holds": self.holds, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack, "kl": self.kl}


def pacbayes_certificate(sample, experiment: FiniteExperiment, mu: DiscreteSpace, rho, t: float) -> Certificate:
    """
    Check (1/n) sum_i E_rho f(X_i, theta) <= E_rho log E_X exp f(X, theta) + (KL(rho, mu) + t) / n

    Args:
        sample: n letter indices
        experiment: Finite f table and X law
        mu: Prior on theta
        rho: Posterior weights on theta
        t: Confidence parameter

    Returns:
        Certificate with both sides evaluated exactly
    """
    sample = np.asarray(sample, dtype=int).ravel()
    n = sample.size
    if n < 1:
        raise DomainError("Sample must have at least one draw")
    if mu.k != experiment.k:
        raise ShapeError(f"mu has {mu.k} points, f has {experiment.k} columns")
    pair = DiscreteMeasurePair(mu, rho)
    kl = kl_divergence(pair)

    charged = pair.rho > 0
    empirical = np.mean(experiment.f[sample], axis=0)
    lhs = float(np.dot(pair.rho[charged], empirical[charged]))
    rhs = float(np.dot(pair.rho[charged], experiment.log_mgf_x[charged])) + (kl + t) / n
    return Certificate(lhs <= rhs, lhs, rhs, rhs - lhs, kl)


def certificate_failure_rate(experiment: FiniteExperiment, mu: DiscreteSpace, n: int, t: float,
                             resamples: int, seed, rho=None) -> float:
    """
    Fraction of resampled X-draws on which the certificate fails

    With rho given the check is for that posterior. Without it the failure is uniform
    over every rho << mu, which by duality happens exactly when
    log E_mu exp(sum_i f(X_i, theta) - n log E_X exp f(X, theta)) > t.
    """
    if resamples < 1:
        raise DomainError(f"resamples must be >= 1, got {resamples}")
    rng = as_seed(seed).generator()
    counts = experiment.draw_counts(n, rng, size=resamples)
    sums = counts @ experiment.f  # resamples x k
    centered = sums - n * experiment.log_mgf_x

    support = mu.support
    if rho is None:
        exponents = special.logsumexp(centered[:, support], b=mu.weights[support], axis=1)
        return float(np.mean(exponents > t))

    pair = DiscreteMeasurePair(mu, rho)
    charged = pair.rho > 0
    excess = centered[:, charged] @ pair.rho[charged] - kl_divergence(pair)
    return float(np.mean(excess > t))
