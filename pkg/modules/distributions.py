"""
Distribution Families
Seeded samplers X = Sigma^(1/2) Z and the moment-equivalence constants of each core
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special, stats

import config
from modules.linalg import SymMatrix, psd_sqrt, sym_eigen
from utils.errors import (
    ConfigError,
    DegenerateMatrix,
    DomainError,
    MomentDoesNotExist,
    NotPSD,
    NotSubExponential,
    NotSubGaussian,
)
from utils.rng import as_seed

logger = logging.getLogger(__name__)

COVARIANCE_KINDS = ("identity", "polydecay", "expdecay", "spiked", "diag", "explicit")
FAMILY_KINDS = ("gaussian", "rademacher-mix", "laplace-product", "uniform-ball", "student-t")

# Families whose core has iid coordinates (moments of linear forms via cumulants)
PRODUCT_CORES = ("rademacher-mix", "laplace-product", "student-t")

LAPLACE_SCALE = 1.0 / math.sqrt(2.0)  # b with 2b^2 = 1
DEFAULT_NU = 5.0


@dataclass(frozen=True)
class CovarianceSpec:
    """
    Declarative covariance: kind plus the parameters that kind needs

    spiked takes either a strength (first k entries = strength, rest 1) or a target
    effective_rank, in which case the matrix is normalized to unit operator norm.
    """

    kind: str
    d: int
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    k: Optional[int] = None
    strength: Optional[float] = None
    effective_rank: Optional[float] = None
    values: Optional[Tuple[float, ...]] = None
    matrix: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ConfigError(f"Unknown covariance kind {self.kind!r}; expected one of {', '.join(COVARIANCE_KINDS)}", field="sigma.kind")
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ConfigError(f"Dimension must be a positive integer, got {self.d!r}", field="sigma.d")
        if self.kind == "polydecay" and (self.alpha is None or not math.isfinite(self.alpha)):
            raise ConfigError("polydecay needs a finite alpha", field="sigma.alpha")
        if self.kind == "expdecay" and (self.gamma is None or not math.isfinite(self.gamma)):
            raise ConfigError("expdecay needs a finite gamma", field="sigma.gamma")
        if self.kind == "spiked":
            self._validate_spiked()
        if self.kind == "diag" and (self.values is None or len(self.values) != self.d):
            raise ConfigError(f"diag needs exactly d={self.d} values", field="sigma.values")
        if self.kind == "explicit":
            if self.matrix is None or len(self.matrix) != self.d or any(len(row) != self.d for row in self.matrix):
                raise ConfigError(f"explicit needs a {self.d}x{self.d} matrix", field="sigma.matrix")

    def _validate_spiked(self):
        if self.k is None or not 1 <= self.k <= self.d:
            raise ConfigError(f"spiked needs 1 <= k <= d, got k={self.k}", field="sigma.k")
        if (self.strength is None) == (self.effective_rank is None):
            raise ConfigError("spiked needs exactly one of strength or effective_rank", field="sigma.strength")
        if self.strength is not None and not self.strength > 0:
            raise ConfigError(f"strength must be positive, got {self.strength}", field="sigma.strength")
        if self.effective_rank is not None:
            r = self.effective_rank
            if self.k == self.d and r != self.d:
                raise ConfigError(f"With k = d the effective rank is d={self.d}", field="sigma.effective_rank")
            if not self.k <= r <= self.d:
                raise ConfigError(f"effective_rank must lie in [k, d] = [{self.k}, {self.d}], got {r}", field="sigma.effective_rank")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CovarianceSpec":
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError("Covariance spec must be a mapping with a 'kind'", field="sigma")
        known = {"kind", "d", "alpha", "gamma", "k", "strength", "effective_rank", "values", "matrix"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown keys {sorted(unknown)}", field="sigma")

        kwargs = dict(data)
        if kwargs.get("values") is not None:
            kwargs["values"] = tuple(float(v) for v in kwargs["values"])
            kwargs.setdefault("d", len(kwargs["values"]))
        if kwargs.get("matrix") is not None:
            kwargs["matrix"] = tuple(tuple(float(v) for v in row) for row in kwargs["matrix"])
            kwargs.setdefault("d", len(kwargs["matrix"]))
        if "d" not in kwargs:
            raise ConfigError("Missing dimension", field="sigma.d")
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "d": int(self.d)}
        for name in ("alpha", "gamma", "k", "strength", "effective_rank"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.values is not None:
            out["values"] = list(self.values)
        if self.matrix is not None:
            out["matrix"] = [list(row) for row in self.matrix]
        return out

    def with_dimension(self, d: int) -> "CovarianceSpec":
        """Same covariance family at another dimension (not defined for diag/explicit)"""
        if self.kind in ("diag", "explicit"):
            raise ConfigError(f"Cannot change the dimension of a {self.kind} covariance", field="sigma.d")
        return replace(self, d=int(d))


def materialize_sigma(spec: CovarianceSpec) -> SymMatrix:
    """
    Realize a covariance spec as a matrix

    Raises:
        NotPSD: explicit or diag input with a negative eigenvalue
        DegenerateMatrix: realized matrix is zero
    """
    d = spec.d
    j = np.arange(1, d + 1, dtype=float)

    if spec.kind == "identity":
        matrix = SymMatrix.identity(d)
    elif spec.kind == "polydecay":
        matrix = SymMatrix.diagonal(j ** (-spec.alpha))
    elif spec.kind == "expdecay":
        matrix = SymMatrix.diagonal(np.exp(-spec.gamma * (j - 1.0)))
    elif spec.kind == "spiked":
        if spec.strength is not None:
            top, bulk = spec.strength, 1.0
        else:
            top = 1.0
            bulk = (spec.effective_rank - spec.k) / (d - spec.k) if d > spec.k else 0.0
        values = np.full(d, bulk)
        values[: spec.k] = top
        matrix = SymMatrix.diagonal(values)
    elif spec.kind == "diag":
        values = np.asarray(spec.values, dtype=float)
        if np.any(values < 0):
            raise NotPSD(f"diag covariance has negative entries: {values[values < 0].tolist()}")
        matrix = SymMatrix.diagonal(values)
    else:
        matrix = SymMatrix(np.asarray(spec.matrix, dtype=float))
        eigenvalues = sym_eigen(matrix).eigenvalues
        norm = max(abs(eigenvalues[0]), abs(eigenvalues[-1]))
        if eigenvalues[-1] < -config.PSD_TOLERANCE * norm:
            raise NotPSD(f"explicit covariance has eigenvalue {eigenvalues[-1]:.3e}")

    if not np.any(matrix.entries):
        raise DegenerateMatrix("Covariance matrix is zero")
    return matrix


def _double_factorial(k: int) -> float:
    """(k)!! for odd k >= -1"""
    result = 1.0
    while k > 1:
        result *= k
        k -= 2
    return result


def gaussian_abs_moment(p: float) -> float:
    """E|N|^p for a standard normal N"""
    return math.exp(0.5 * p * math.log(2.0) + special.gammaln((p + 1.0) / 2.0)) / math.sqrt(math.pi)


def _find_psi_root(excess, start: float) -> float:
    """Root of a decreasing function c -> E exp(|Y|^a / c^a) - 2 by bracketing then Brent"""
    hi = start
    while excess(hi) >= 0:
        hi *= 2.0
    lo = hi / 2.0
    while excess(lo) < 0:
        lo /= 2.0
    return float(optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-13))


def empirical_psi_norm(values, alpha: float) -> float:
    """
    psi_alpha norm of a sample: smallest c with mean exp(|y|^alpha / c^alpha) <= 2

    Args:
        values: 1-d sample
        alpha: 1 for psi_1, 2 for psi_2

    Returns:
        Norm of the empirical distribution
    """
    y = np.abs(np.asarray(values, dtype=float).ravel())
    if y.size == 0:
        raise DomainError("Empty sample")
    top = float(np.max(y))
    if top == 0.0:
        return 0.0
    log_n = math.log(y.size)

    def excess(c):
        return float(special.logsumexp((y / c) ** alpha) - log_n - math.log(2.0))

    # At c = max|y| / ln(2)^(1/alpha) every term is <= 2
    return _find_psi_root(excess, top / math.log(2.0) ** (1.0 / alpha))


def psi1_mgf_bound(lam: float, K: float) -> float:
    """
    exp(4 lam^2 K^2), the MGF bound of a zero-mean variable with psi_1 norm K

    Raises:
        DomainError: |lam| > 1/(2K)
    """
    if K <= 0:
        raise DomainError(f"psi_1 norm must be positive, got {K}")
    if abs(lam) > 1.0 / (2.0 * K) * (1.0 + 1e-12):
        raise DomainError(f"|lambda| must be at most 1/(2K) = {1.0 / (2.0 * K):.6g}, got {lam}")
    return math.exp(4.0 * lam * lam * K * K)


class DistributionFamily:
    """
    Zero-mean family X = Sigma^(1/2) Z with identity-covariance core Z

    The covariance matrix and its square root are computed once and shared by all draws.
    """

    def __init__(self, kind: str, sigma: CovarianceSpec, nu: Optional[float] = None):
        if kind not in FAMILY_KINDS:
            raise ConfigError(f"Unknown family {kind!r}; expected one of {', '.join(FAMILY_KINDS)}", field="family.kind")
        if kind == "student-t":
            nu = DEFAULT_NU if nu is None else float(nu)
            if not nu > 2:
                raise ConfigError(f"student-t needs nu > 2 for a unit-variance core, got {nu}", field="family.nu")
        elif nu is not None:
            raise ConfigError(f"nu only applies to student-t, not {kind}", field="family.nu")

        self.kind = kind
        self.sigma = sigma
        self.nu = nu
        self.sigma_matrix = materialize_sigma(sigma)
        self.root = psd_sqrt(self.sigma_matrix).to_array()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DistributionFamily":
        if not isinstance(data, dict) or "kind" not in data:
            raise ConfigError("Family must be a mapping with a 'kind'", field="family")
        if "sigma" not in data:
            raise ConfigError("Missing covariance spec", field="family.sigma")
        sigma = data["sigma"]
        if not isinstance(sigma, CovarianceSpec):
            sigma = CovarianceSpec.from_dict(sigma)
        return cls(data["kind"], sigma, data.get("nu"))

    def to_dict(self) -> Dict[str, Any]:
        out = {"kind": self.kind, "sigma": self.sigma.to_dict()}
        if self.nu is not None:
            out["nu"] = self.nu
        return out

    def with_dimension(self, d: int) -> "DistributionFamily":
        return DistributionFamily(self.kind, self.sigma.with_dimension(d), self.nu)

    @property
    def d(self) -> int:
        return self.sigma.d

    def __repr__(self):
        return f"DistributionFamily({self.kind}, sigma={self.sigma.kind}, d={self.d})"

    # Core draws and core moments

    def core_sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.d
        if self.kind == "gaussian":
            return rng.standard_normal((n, d))
        if self.kind == "rademacher-mix":
            return 2.0 * rng.integers(0, 2, size=(n, d)).astype(float) - 1.0
        if self.kind == "laplace-product":
            return rng.laplace(0.0, LAPLACE_SCALE, size=(n, d))
        if self.kind == "student-t":
            return rng.standard_t(self.nu, size=(n, d)) * math.sqrt((self.nu - 2.0) / self.nu)

        # Uniform on the ball of radius sqrt(d + 2), which has identity covariance
        directions = rng.standard_normal((n, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = math.sqrt(d + 2.0) * rng.random(n) ** (1.0 / d)
        return directions * radii[:, None]

    def core_abs_moment(self, p: float) -> float:
        """
        E|Z_1|^p of one core coordinate (the marginal along any direction for uniform-ball)

        Raises:
            MomentDoesNotExist: p >= nu for student-t
        """
        if self.kind == "gaussian":
            return gaussian_abs_moment(p)
        if self.kind == "rademacher-mix":
            return 1.0
        if self.kind == "laplace-product":
            return math.exp(special.gammaln(p + 1.0) + p * math.log(LAPLACE_SCALE))
        if self.kind == "student-t":
            nu = self.nu
            if p >= nu:
                raise MomentDoesNotExist(f"E|Z|^{p:g} is infinite for student-t with nu={nu:g}")
            log_value = (
                0.5 * p * math.log(nu - 2.0)
                + special.gammaln((p + 1.0) / 2.0)
                + special.gammaln((nu - p) / 2.0)
                - 0.5 * math.log(math.pi)
                - special.gammaln(nu / 2.0)
            )
            return math.exp(log_value)

        # Uniform-ball marginal: density proportional to (1 - x^2/R^2)^((d-1)/2)
        d = self.d
        b = (d + 1.0) / 2.0
        log_value = 0.5 * p * math.log(d + 2.0) + special.betaln((p + 1.0) / 2.0, b) - special.betaln(0.5, b)
        return math.exp(log_value)

    def core_moment(self, k: int) -> float:
        """Raw moment E Z_1^k of the symmetric core"""
        if k == 0:
            return 1.0
        if self.kind == "student-t" and k >= self.nu:
            raise MomentDoesNotExist(f"E Z^{k} does not exist for student-t with nu={self.nu:g}")
        if k % 2 == 1:
            return 0.0
        if self.kind == "gaussian":
            return _double_factorial(k - 1)
        return self.core_abs_moment(k)

    def directional_abs_moment(self, p: float) -> float:
        """
        Upper bound on sup over unit w of E|<Z, w>|^p, p >= 2

        For iid scale-mixture cores the coordinate direction is worst; for Rademacher
        sums the Gaussian limit is.
        """
        core = self.core_abs_moment(p)
        if self.kind in PRODUCT_CORES:
            return max(core, gaussian_abs_moment(p))
        return core

    def _marginal_pdf(self, x):
        d = self.d
        radius = math.sqrt(d + 2.0)
        norm = radius * math.exp(special.betaln(0.5, (d + 1.0) / 2.0))
        return np.clip(1.0 - (x / radius) ** 2, 0.0, None) ** ((d - 1.0) / 2.0) / norm

    def _ball_psi_norm(self, alpha: float) -> float:
        radius = math.sqrt(self.d + 2.0)

        def excess(c):
            value, _ = integrate.quad(
                lambda x: np.exp((x / c) ** alpha) * self._marginal_pdf(x), 0.0, radius, limit=200
            )
            return 2.0 * value - 2.0

        return _find_psi_root(excess, radius)

    # Moment-equivalence constants

    def kappa_psi2(self) -> float:
        """psi_2 norm of a unit-variance core coordinate"""
        if self.kind == "gaussian":
            return math.sqrt(8.0 / 3.0)
        if self.kind == "rademacher-mix":
            return 1.0 / math.sqrt(math.log(2.0))
        if self.kind == "uniform-ball":
            return self._ball_psi_norm(2.0)
        raise NotSubGaussian(f"{self.kind} has no finite psi_2 norm")

    def kappa_psi1(self) -> float:
        """psi_1 norm of a unit-variance core coordinate"""
        if self.kind == "rademacher-mix":
            return 1.0 / math.log(2.0)
        if self.kind == "laplace-product":
            return 2.0 * LAPLACE_SCALE
        if self.kind == "uniform-ball":
            return self._ball_psi_norm(1.0)
        if self.kind == "gaussian":
            # E exp(|N|/c) = 2 exp(1/(2c^2)) Phi(1/c)
            def excess(c):
                return 2.0 * math.exp(0.5 / (c * c)) * stats.norm.cdf(1.0 / c) - 2.0

            return _find_psi_root(excess, 1.0)
        raise NotSubExponential(f"{self.kind} has no finite psi_1 norm")

    def eta(self, s: int) -> float:
        """L_{2s}-L_2 constant (E|Z_1|^{2s})^{1/(2s)} of the core"""
        if s < 1:
            raise DomainError(f"Moment order s must be >= 1, got {s}")
        return self.core_abs_moment(2.0 * s) ** (1.0 / (2.0 * s))

    def lowertail_kappa(self) -> float:
        """kappa with sqrt(E<x,X>^4) <= kappa^2 x^T Sigma x over every direction x"""
        return self.directional_abs_moment(4.0) ** 0.25

    # Sampling

    def sample(self, n: int, seed) -> np.ndarray:
        """
        n independent draws of X, deterministic given the seed

        Args:
            n: Number of rows
            seed: SeedSpec or integer master seed

        Returns:
            n x d array
        """
        if n < 1:
            raise DomainError(f"Sample size must be >= 1, got {n}")
        rng = as_seed(seed).generator()
        return self.core_sample(n, rng) @ self.root

    def moment_provider(self, s: int) -> "LinearFormMoments":
        return LinearFormMoments(self, s)


class LinearFormMoments:
    """
    Exact E<X, v>^s and its gradient in v, batched over the columns of V

    Gaussian and uniform-ball cores are spherical: E<Z, w>^s = m_s |w|^s. Product cores
    go through cumulants, which are additive over coordinates: k_j(<Z, w>) = k_j sum_i w_i^j.
    """

    def __init__(self, family: DistributionFamily, s: int):
        if s < 1:
            raise DomainError(f"Moment order s must be >= 1, got {s}")
        self.family = family
        self.s = int(s)
        self.root = family.root
        moments = [family.core_moment(k) for k in range(self.s + 1)]
        self.spherical = family.kind not in PRODUCT_CORES
        self.coefficient = moments[self.s]
        self.cumulants = self._cumulants(moments)

    def _cumulants(self, moments):
        s = self.s
        cumulants = [0.0] * (s + 1)
        for order in range(1, s + 1):
            value = moments[order]
            for j in range(1, order):
                value -= math.comb(order - 1, j - 1) * cumulants[j] * moments[order - j]
            cumulants[order] = value
        return cumulants

    def _in_core_coordinates(self, V):
        V = np.asarray(V, dtype=float)
        single = V.ndim == 1
        W = self.root @ (V[:, None] if single else V)
        return W, single

    def _spherical(self, W):
        s = self.s
        if s % 2 == 1:
            return np.zeros(W.shape[1]), np.zeros_like(W)
        q = np.sum(W * W, axis=0)
        value = self.coefficient * q ** (s // 2)
        grad = self.coefficient * s * q ** (s // 2 - 1) * W
        return value, grad

    def _product(self, W):
        s = self.s
        m = W.shape[1]
        active = [j for j in range(1, s + 1) if self.cumulants[j] != 0.0]
        K = {}
        dK = {}
        for j in active:
            power = W ** (j - 1)
            K[j] = self.cumulants[j] * np.sum(power * W, axis=0)
            dK[j] = self.cumulants[j] * j * power

        # Moments from cumulants: M_n = sum_j C(n-1, j-1) K_j M_{n-j}
        M = [np.ones(m)]
        G = [np.zeros_like(W)]
        for order in range(1, s + 1):
            value = np.zeros(m)
            grad = np.zeros_like(W)
            for j in active:
                if j > order:
                    break
                coef = math.comb(order - 1, j - 1)
                value += coef * K[j] * M[order - j]
                grad += coef * (dK[j] * M[order - j] + K[j] * G[order - j])
            M.append(value)
            G.append(grad)
        return M[s], G[s]

    def _evaluate(self, V):
        W, single = self._in_core_coordinates(V)
        value, grad_w = self._spherical(W) if self.spherical else self._product(W)
        grad = self.root @ grad_w
        if single:
            return float(value[0]), grad[:, 0]
        return value, grad

    def value(self, V):
        """E<X, v>^s for a vector v or each column of a matrix"""
        return self._evaluate(V)[0]

    def gradient(self, V):
        return self._evaluate(V)[1]

    def value_and_gradient(self, V):
        return self._evaluate(V)

    def abs_moment_bound(self) -> float:
        """Upper bound on sup over unit v of E|<X, v>|^s"""
        s = self.s
        norm = float(np.max(np.abs(sym_eigen(self.family.sigma_matrix).eigenvalues)))
        return norm ** (s / 2.0) * self.family.directional_abs_moment(max(float(s), 2.0))


def sample(family: DistributionFamily, n: int, seed) -> np.ndarray:
    """Module-level alias of DistributionFamily.sample"""
    return family.sample(n, seed)


def kappa_psi2(family: DistributionFamily) -> float:
    return family.kappa_psi2()


def kappa_psi1(family: DistributionFamily) -> float:
    return family.kappa_psi1()


def eta(family: DistributionFamily, s: int) -> float:
    return family.eta(s)
