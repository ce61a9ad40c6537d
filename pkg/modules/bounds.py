"""
Deviation Bounds
Closed-form bound calculators with validity flags, and the key registry used by experiments
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional

from modules.linalg import MatrixLike, as_sym, norm_and_rank
from utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

REGIMES = ("standard", "subgaussian-sharp")


@dataclass
class BoundResult:
    """Bound value, validity of the statement's hypotheses and the constants that went in"""

    key: str
    value: float
    valid: bool
    condition_text: Optional[str] = None
    constants_used: Dict[str, float] = field(default_factory=dict)
    failure_probability: Optional[float] = None
    variants: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "key": self.key,
            "value": self.value,
            "valid": self.valid,
            "condition_text": self.condition_text,
            "constants_used": dict(self.constants_used),
            "failure_probability": self.failure_probability,
            "variants": dict(self.variants),
        }


class NormBound(NamedTuple):
    exact: float
    relaxed: float


def _result(key, value, failed: List[str], constants, failure_probability=None, variants=None) -> BoundResult:
    return BoundResult(
        key=key,
        value=float(value),
        valid=not failed,
        condition_text="; ".join(failed) if failed else None,
        constants_used={name: float(v) for name, v in constants.items()},
        failure_probability=None if failure_probability is None else min(1.0, failure_probability),
        variants=variants or {},
    )


def _spectrum(Sigma: MatrixLike):
    """(||Sigma||, r(Sigma), tr(Sigma))"""
    norm, rank = norm_and_rank(as_sym(Sigma))
    return norm, rank, norm * rank


def thm1_bound(kappa: float, Sigma: MatrixLike, n: int, t: float) -> BoundResult:
    """
    20 kappa^2 ||Sigma|| sqrt((4 r + t) / n), valid when n >= 4 r + t

    Args:
        kappa: psi_2 constant of the rows
        Sigma: Covariance matrix
        n: Sample size
        t: Confidence parameter; the bound fails with probability at most e^{-t}

    Returns:
        BoundResult
    """
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if kappa < 1:
        failed.append(f"kappa >= 1 (kappa = {kappa:g})")
    if not t > 0:
        failed.append(f"t > 0 (t = {t:g})")
    if n < 4 * rank + t:
        failed.append(f"n >= 4 r(Sigma) + t ({n} < {4 * rank + t:.6g})")
    value = 20.0 * kappa ** 2 * norm * math.sqrt(max(4.0 * rank + t, 0.0) / n)
    return _result("thm1", value, failed, {"kappa": kappa, "r": rank, "norm": norm}, math.exp(-t))


def prop1_bound(kappa: float, d: int, n: int, t: float) -> BoundResult:
    """52 kappa^2 sqrt((d + t) / n) for isotropic rows, valid when n >= d + t"""
    failed = []
    if kappa < 1:
        failed.append(f"kappa >= 1 (kappa = {kappa:g})")
    if not t > 0:
        failed.append(f"t > 0 (t = {t:g})")
    if n < d + t:
        failed.append(f"n >= d + t ({n} < {d + t:.6g})")
    value = 52.0 * kappa ** 2 * math.sqrt(max(d + t, 0.0) / n)
    return _result("prop1", value, failed, {"kappa": kappa, "d": d}, math.exp(-t))


def norm_bound_subgaussian(kappa: float, Sigma: MatrixLike, t: float) -> NormBound:
    """
    Bound on ||X||^2 holding with probability 1 - e^{-t}

    Returns:
        NormBound(exact=36 kappa^2 (tr/2 + sqrt(2 t tr ||Sigma||) + t ||Sigma||),
                  relaxed=36 kappa^2 (tr + 2 t ||Sigma||))
    """
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    norm, _, trace = _spectrum(Sigma)
    exact = 36.0 * kappa ** 2 * (trace / 2.0 + math.sqrt(2.0 * t * trace * norm) + t * norm)
    relaxed = 36.0 * kappa ** 2 * (trace + 2.0 * t * norm)
    return NormBound(exact, relaxed)


def norm_bound_gaussian_exact(Sigma: MatrixLike, t: float) -> float:
    """tr + 2 sqrt(2 t tr ||Sigma||) + 2 t ||Sigma||, the Gaussian bound on ||X||^2"""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    norm, _, trace = _spectrum(Sigma)
    return trace + 2.0 * math.sqrt(2.0 * t * trace * norm) + 2.0 * t * norm


def subexp_norm_bound(kappa: float, Sigma: MatrixLike, t: float) -> BoundResult:
    """8 kappa (sqrt(t tr) + t sqrt(||Sigma||)) on ||X||, valid for t >= 1"""
    norm, _, trace = _spectrum(Sigma)
    failed = []
    if t < 1:
        failed.append(f"t >= 1 (t = {t:g})")
    value = 8.0 * kappa * (math.sqrt(max(t, 0.0) * trace) + t * math.sqrt(norm))
    return _result("prop-subexp-norm", value, failed, {"kappa": kappa}, math.exp(-t))


def lowertail_bound(kappa: float, Sigma: MatrixLike, n: int, t: float) -> BoundResult:
    """7 kappa^2 ||Sigma|| sqrt((r + t) / n) on the lower deviation, valid for t > log 2"""
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if not t > math.log(2.0):
        failed.append(f"t > log 2 (t = {t:g})")
    value = 7.0 * kappa ** 2 * norm * math.sqrt(max(rank + t, 0.0) / n)
    return _result("prop-lowertail", value, failed, {"kappa": kappa, "r": rank, "norm": norm}, 2.0 * math.exp(-t))


def thm2_sample_condition(c_s: float, s: int, Sigma: MatrixLike, n: int, regime: str = "standard") -> bool:
    """n >= c_s r^{s-1}, or n >= c_s r^{s+1} in the sharper sub-Gaussian regime"""
    if regime not in REGIMES:
        raise ConfigError(f"Unknown regime {regime!r}; expected one of {', '.join(REGIMES)}", field="regime")
    _, rank, _ = _spectrum(Sigma)
    exponent = s - 1 if regime == "standard" else s + 1
    return n >= c_s * rank ** exponent


def thm2_bound(C: float, s: int, Sigma: MatrixLike, n: int, c_s: float = 1.0,
               regime: str = "standard") -> BoundResult:
    """C ||Sigma||^{s/2} sqrt(r / n) for the order-s tensor deviation"""
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if int(s) != s or s < 2:
        failed.append(f"integer s >= 2 (s = {s})")
    if not thm2_sample_condition(c_s, s, Sigma, n, regime):
        exponent = "s-1" if regime == "standard" else "s+1"
        needed = c_s * rank ** (s - 1 if regime == "standard" else s + 1)
        failed.append(f"n >= c_s r(Sigma)^({exponent}) ({n} < {needed:.6g})")
    value = C * norm ** (s / 2.0) * math.sqrt(rank / n)
    return _result("thm2", value, failed, {"C": C, "c_s": c_s, "s": s, "r": rank, "norm": norm})


def thm3_bound(c2: float, Sigma: MatrixLike, n: int, c3: float = 1.0) -> BoundResult:
    """c2 ||Sigma|| sqrt(r / n) for log-concave rows, valid when n >= c3 r"""
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if n < c3 * rank:
        failed.append(f"n >= c3 r(Sigma) ({n} < {c3 * rank:.6g})")
    value = c2 * norm * math.sqrt(rank / n)
    return _result("thm3", value, failed, {"c2": c2, "c3": c3, "r": rank, "norm": norm})


def logconcave_tail_bound(c2: float, kappa: float, Sigma: MatrixLike, n: int, t: float,
                          c3: float = 1.0) -> BoundResult:
    """c2 kappa^2 ||Sigma|| (sqrt((r + t)/n) + t^2/n), valid when n >= c3 (r + t)"""
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if t < 0:
        failed.append(f"t >= 0 (t = {t:g})")
    if n < c3 * (rank + t):
        failed.append(f"n >= c3 (r(Sigma) + t) ({n} < {c3 * (rank + t):.6g})")
    value = c2 * kappa ** 2 * norm * (math.sqrt((rank + max(t, 0.0)) / n) + t * t / n)
    return _result("cor-logconcave", value, failed, {"c2": c2, "c3": c3, "kappa": kappa, "r": rank, "norm": norm},
                   math.exp(-t))


def ellipsoid_gaussian_complexity(Sigma: MatrixLike) -> float:
    """sqrt(tr Sigma), bounding E sup over v in Sigma^{1/2} S^{d-1} of <Z, v>"""
    _, _, trace = _spectrum(Sigma)
    return math.sqrt(trace)


def truncation_lemma_bound(C_s: float, eta: float, s: int, Sigma: MatrixLike, n: int, t: float) -> BoundResult:
    """C_s eta^s ||Sigma||^{s/2} sqrt((r + t) / n) on the truncated moment estimator's error"""
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if eta < 1:
        failed.append(f"eta >= 1 (eta = {eta:g})")
    if not t > 0:
        failed.append(f"t > 0 (t = {t:g})")
    value = C_s * eta ** s * norm ** (s / 2.0) * math.sqrt(max(rank + t, 0.0) / n)
    return _result("lemma-truncation", value, failed, {"C_s": C_s, "eta": eta, "s": s, "r": rank, "norm": norm},
                   2.0 * math.exp(-t))


def moment_lowertail_bound(c_s: float, eta: float, s: int, Sigma: MatrixLike, n: int, t: float) -> BoundResult:
    """c_s eta^s ||Sigma||^{s/2} sqrt((r + t) / n) on the one-sided lower deviation, even s"""
    norm, rank, _ = _spectrum(Sigma)
    failed = []
    if int(s) != s or s < 2 or s % 2 == 1:
        failed.append(f"even s >= 2 (s = {s})")
    if eta < 1:
        failed.append(f"eta >= 1 (eta = {eta:g})")
    if not t > math.log(2.0):
        failed.append(f"t > log 2 (t = {t:g})")
    value = c_s * eta ** s * norm ** (s / 2.0) * math.sqrt(max(rank + t, 0.0) / n)
    return _result("moment-lowertail", value, failed, {"c_s": c_s, "eta": eta, "s": s, "r": rank, "norm": norm},
                   2.0 * math.exp(-t))


def max_norm_bound(kappa: float, Sigma: MatrixLike, n: int, t: float) -> BoundResult:
    """
    kappa sqrt(108 tr Sigma) on max_i ||X_i||, valid when t <= r(Sigma)

    Fails with probability at most n e^{-t}; the un-relaxed level is kept as a variant.
    """
    norm, rank, trace = _spectrum(Sigma)
    failed = []
    if not 0 <= t <= rank:
        failed.append(f"0 <= t <= r(Sigma) (t = {t:g}, r = {rank:.6g})")
    value = kappa * math.sqrt(108.0 * trace)
    sharp = math.sqrt(36.0 * kappa ** 2 * (trace + 2.0 * max(t, 0.0) * norm))
    return _result("max-norm-subg", value, failed, {"kappa": kappa, "r": rank}, n * math.exp(-t), {"sharp": sharp})


@dataclass
class BoundParams:
    """Named inputs for a registry lookup; constants holds C, c_s, c2, c3 and regime"""

    sigma: Any
    n: Optional[int] = None
    t: Optional[float] = None
    s: Optional[int] = None
    kappa: Optional[float] = None
    eta: Optional[float] = None
    d: Optional[int] = None
    constants: Dict[str, Any] = field(default_factory=dict)

    def need(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"This bound needs {name}", field=name)
        return value

    def constant(self, name: str, default=1.0):
        return self.constants.get(name, default)


def _norm_subg(p: BoundParams) -> BoundResult:
    t = p.need("t")
    exact, relaxed = norm_bound_subgaussian(p.need("kappa"), p.sigma, max(t, 0.0))
    failed = [] if t >= 0 else [f"t >= 0 (t = {t:g})"]
    return _result("lemma-norm-subg", exact, failed, {"kappa": p.kappa}, math.exp(-t), {"relaxed": relaxed})


def _norm_gauss(p: BoundParams) -> BoundResult:
    t = p.need("t")
    value = norm_bound_gaussian_exact(p.sigma, max(t, 0.0))
    failed = [] if t >= 0 else [f"t >= 0 (t = {t:g})"]
    return _result("lemma-norm-gauss-exact", value, failed, {}, math.exp(-t))


def _ellipsoid(p: BoundParams) -> BoundResult:
    return _result("ellipsoid", ellipsoid_gaussian_complexity(p.sigma), [], {})


BOUNDS: Dict[str, Callable[[BoundParams], BoundResult]] = {
    "thm1": lambda p: thm1_bound(p.need("kappa"), p.sigma, p.need("n"), p.need("t")),
    "prop1": lambda p: prop1_bound(p.need("kappa"), p.d or as_sym(p.sigma).d, p.need("n"), p.need("t")),
    "lemma-norm-subg": _norm_subg,
    "lemma-norm-gauss-exact": _norm_gauss,
    "prop-subexp-norm": lambda p: subexp_norm_bound(p.need("kappa"), p.sigma, p.need("t")),
    "prop-lowertail": lambda p: lowertail_bound(p.need("kappa"), p.sigma, p.need("n"), p.need("t")),
    "thm2": lambda p: thm2_bound(p.constant("C"), p.need("s"), p.sigma, p.need("n"), p.constant("c_s"),
                                 p.constant("regime", "standard")),
    "thm3": lambda p: thm3_bound(p.constant("c2"), p.sigma, p.need("n"), p.constant("c3")),
    "cor-logconcave": lambda p: logconcave_tail_bound(p.constant("c2"), p.need("kappa"), p.sigma, p.need("n"),
                                                      p.need("t"), p.constant("c3")),
    "ellipsoid": _ellipsoid,
    "lemma-truncation": lambda p: truncation_lemma_bound(p.constant("C_s"), p.need("eta"), p.need("s"), p.sigma,
                                                         p.need("n"), p.need("t")),
    "moment-lowertail": lambda p: moment_lowertail_bound(p.constant("c_s"), p.need("eta"), p.need("s"), p.sigma,
                                                         p.need("n"), p.need("t")),
    "max-norm-subg": lambda p: max_norm_bound(p.need("kappa"), p.sigma, p.need("n"), p.need("t")),
}


def bound_keys() -> List[str]:
    return sorted(BOUNDS)


def compute_bound(key: str, params: BoundParams) -> BoundResult:
    """
    Look up a bound by key and evaluate it

    Raises:
        ConfigError: unknown key or a missing input
    """
    if key not in BOUNDS:
        raise ConfigError(f"Unknown bound {key!r}; valid keys: {', '.join(bound_keys())}", field="bound")
    result = BOUNDS[key](params)
    if not result.valid:
        logger.warning(f"Bound {key} outside its regime: {result.condition_text}")
    return result
