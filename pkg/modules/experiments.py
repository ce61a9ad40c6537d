"""
Experiments
Seeded Monte Carlo trials of a deviation statistic against a bound, sweeps over (n, d, t, s)
and the reports they produce
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from modules import estimators
from modules.bounds import BoundParams, BoundResult, compute_bound
from modules.distributions import DistributionFamily, empirical_psi_norm
from modules.linalg import HAVE_NUMBA, SymMatrix, sym_eigen
from modules.tensor_ops import EmpiricalTensorForm, operator_norm_sup, signed_sup
from utils.errors import ConfigError, LabError, NotSubGaussian
from utils.report_store import RunTracker, save_report, save_sweep
from utils.rng import DIRECTION_STREAM, MASK64, PSI_NORM_STREAM, SeedSpec, mix64
from utils.worker_pool import run_trials

logger = logging.getLogger(__name__)

# Statistic -> bounds it can be compared against
COMPATIBILITY: Dict[str, Tuple[str, ...]] = {
    "cov-deviation": ("thm1", "prop1", "thm3", "cor-logconcave"),
    "cov-lower-deviation": ("prop-lowertail", "thm1"),
    "trunc-moment-error": ("lemma-truncation", "thm2"),
    "tensor-deviation": ("thm2",),
    "tensor-lower-deviation": ("moment-lowertail",),
    "norm": ("prop-subexp-norm", "ellipsoid"),
    "subexp-norm": ("prop-subexp-norm",),
    "norm-squared": ("lemma-norm-subg", "lemma-norm-gauss-exact"),
    "max-norm": ("max-norm-subg",),
}
STATISTICS = tuple(COMPATIBILITY)

# Statistics computed from a single draw of X per trial
SINGLE_DRAW = ("norm", "subexp-norm", "norm-squared")
NEEDS_S = ("trunc-moment-error", "tensor-deviation", "tensor-lower-deviation")

# Which moment-equivalence constant each bound's kappa is
KAPPA_KIND = {
    "thm1": "psi2",
    "prop1": "psi2",
    "lemma-norm-subg": "psi2",
    "max-norm-subg": "psi2",
    "prop-subexp-norm": "psi1",
    "cor-logconcave": "psi1",
    "prop-lowertail": "l4",
}
LOGCONCAVE_FAMILIES = ("gaussian", "laplace-product", "uniform-ball")
LOGCONCAVE_BOUNDS = ("thm3", "cor-logconcave")
ETA_METHODS = ("exact", "psi2", "psi1")
CONFIG_KEYS = {
    "name", "family", "n", "s", "t", "trials", "master_seed", "statistic", "bound",
    "constants", "tensor_restarts", "threads", "sweep",
}
SWEEP_AXES = ("n", "d", "t", "s")
PSI_NORM_DRAWS = 20_000


def _require_int(data, key, minimum=1, default=None):
    value = data.get(key, default)
    if value is None:
        raise ConfigError("Missing value", field=key)
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) and not (
            isinstance(value, float) and value.is_integer()):
        raise ConfigError(f"Expected an integer, got {value!r}", field=key)
    value = int(value)
    if value < minimum:
        raise ConfigError(f"Must be >= {minimum}, got {value}", field=key)
    return value


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """
    One experiment: family, statistic and bound, sample size, trial count and seed

    Raises:
        ConfigError: unknown statistic or bound, incompatible pair, or invalid counts
    """

    family: DistributionFamily
    statistic: str
    bound: str
    trials: int
    n: int = 1
    t: Optional[float] = None
    s: Optional[int] = None
    master_seed: int = 0
    constants: Dict[str, Any] = field(default_factory=dict)
    tensor_restarts: int = config.TENSOR_RESTARTS
    threads: int = config.DEFAULT_THREADS
    name: Optional[str] = None
    grid: Dict[str, List[Any]] = field(default_factory=dict)

    def __post_init__(self):
        if self.statistic not in COMPATIBILITY:
            raise ConfigError(f"Unknown statistic {self.statistic!r}; expected one of {', '.join(STATISTICS)}",
                              field="statistic")
        if self.bound not in COMPATIBILITY[self.statistic]:
            raise ConfigError(
                f"{self.statistic} does not pair with {self.bound!r}; compatible bounds: "
                f"{', '.join(COMPATIBILITY[self.statistic])}",
                field="bound",
            )
        if self.trials < 1:
            raise ConfigError(f"Must be >= 1, got {self.trials}", field="trials")
        if self.n < 1:
            raise ConfigError(f"Must be >= 1, got {self.n}", field="n")
        if self.t is not None and not math.isfinite(self.t):
            raise ConfigError(f"Must be finite, got {self.t}", field="t")
        if not 0 <= self.master_seed <= MASK64:
            raise ConfigError("Must be a 64-bit unsigned integer", field="master_seed")
        if self.statistic in NEEDS_S:
            if self.s is None:
                raise ConfigError(f"{self.statistic} needs a moment order", field="s")
            minimum = 1 if self.statistic == "trunc-moment-error" else 2
            if self.s < minimum:
                raise ConfigError(f"Must be >= {minimum} for {self.statistic}, got {self.s}", field="s")
            if self.statistic == "tensor-lower-deviation" and self.s % 2 == 1:
                raise ConfigError(f"tensor-lower-deviation needs an even s, got {self.s}", field="s")
        if self.tensor_restarts < 1:
            raise ConfigError(f"Must be >= 1, got {self.tensor_restarts}", field="tensor_restarts")
        if self.threads < 1:
            raise ConfigError(f"Must be >= 1, got {self.threads}", field="threads")
        for key, value in self.constants.items():
            if key in ("eta_method", "regime"):
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"Expected a finite number, got {value!r}", field=f"constants.{key}")
        method = self.constants.get("eta_method", "exact")
        if method not in ETA_METHODS:
            raise ConfigError(f"Unknown eta_method {method!r}; expected one of {', '.join(ETA_METHODS)}",
                              field="constants.eta_method")
        unknown_axes = set(self.grid) - set(SWEEP_AXES)
        if unknown_axes:
            raise ConfigError(f"Unknown sweep axes {sorted(unknown_axes)}; expected a subset of n, d, t, s",
                              field="sweep")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Build a config from its JSON/YAML mapping

        Args:
            data: Parsed config file

        Returns:
            ExperimentConfig
        """
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"Unknown keys {sorted(unknown)}", field="config")
        for key in ("family", "statistic", "bound", "trials"):
            if key not in data:
                raise ConfigError("Missing value", field=key)

        family = data["family"]
        if not isinstance(family, DistributionFamily):
            family = DistributionFamily.from_dict(family)

        constants = data.get("constants") or {}
        if not isinstance(constants, dict):
            raise ConfigError("Must be a mapping of names to values", field="constants")
        grid = data.get("sweep") or {}
        if not isinstance(grid, dict) or any(not isinstance(v, list) for v in grid.values()):
            raise ConfigError("Must map axis names to lists of values", field="sweep")

        t = data.get("t")
        if t is not None:
            try:
                t = float(t)
            except (TypeError, ValueError):
                raise ConfigError(f"Expected a number, got {t!r}", field="t")

        return cls(
            family=family,
            statistic=data["statistic"],
            bound=data["bound"],
            trials=_require_int(data, "trials"),
            n=_require_int(data, "n", default=1),
            t=t,
            s=None if data.get("s") is None else _require_int(data, "s"),
            master_seed=_require_int(data, "master_seed", minimum=0, default=0),
            constants=dict(constants),
            tensor_restarts=_require_int(data, "tensor_restarts", default=config.TENSOR_RESTARTS),
            threads=_require_int(data, "threads", default=config.DEFAULT_THREADS),
            name=data.get("name"),
            grid=dict(grid),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Config echo for reports (thread count excluded: it does not change results)"""
        out = {
            "family": self.family.to_dict(),
            "statistic": self.statistic,
            "bound": self.bound,
            "trials": self.trials,
            "n": self.n,
            "t": self.t,
            "s": self.s,
            "master_seed": self.master_seed,
            "constants": dict(self.constants),
            "tensor_restarts": self.tensor_restarts,
        }
        if self.name:
            out["name"] = self.name
        if self.grid:
            out["sweep"] = {axis: list(values) for axis, values in self.grid.items()}
        return out

    @property
    def d(self) -> int:
        return self.family.d

    @property
    def report_name(self) -> str:
        return self.name or f"{self.statistic}_{self.bound}"

    def at_point(self, **point) -> "ExperimentConfig":
        """Same experiment at one grid point (any of n, d, t, s), without the grid"""
        changes: Dict[str, Any] = {"grid": {}}
        for axis, value in point.items():
            if axis == "d":
                changes["family"] = self.family.with_dimension(int(value))
            elif axis in ("n", "s"):
                changes[axis] = int(value)
            elif axis == "t":
                changes[axis] = float(value)
            else:
                raise ConfigError(f"Unknown sweep axis {axis!r}", field="sweep")
        return replace(self, **changes)


def allowed_violation_rate(t: float, trials: int, slack_se: float = None) -> float:
    """min(1, e^{-t}) plus slack_se binomial standard errors"""
    slack_se = config.VIOLATION_SLACK_SE if slack_se is None else slack_se
    p = math.exp(-max(t, 0.0))
    return p + slack_se * math.sqrt(p * (1.0 - p) / trials)


def rate_slope(ns: Sequence[float], medians: Sequence[float]) -> float:
    """Least-squares slope of log(median) against log(n)"""
    ns = np.asarray(ns, dtype=float)
    medians = np.asarray(medians, dtype=float)
    if ns.size != medians.size or ns.size < 2:
        raise ConfigError("Need at least two (n, median) pairs of equal length", field="sweep")
    if np.any(ns <= 0) or np.any(medians <= 0):
        raise ConfigError("n and medians must be positive for a log-log fit", field="sweep")
    slope, _ = np.polyfit(np.log(ns), np.log(medians), 1)
    return float(slope)


@dataclass
class ExperimentReport:
    config: Dict[str, Any]
    per_trial: List[float]
    bound: BoundResult
    violation_rate: float
    violations: int
    empirical_quantile: Optional[float]
    median: float
    mean: float
    std: float
    allowed_violation_rate: Optional[float]
    passed: Optional[bool]
    constants_used: Dict[str, Any]
    annotations: Dict[str, Any]
    trial_aux: List[Dict[str, Any]] = field(default_factory=list)
    wall_time: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def bound_value(self) -> float:
        return self.bound.value

    @property
    def valid(self) -> bool:
        return self.bound.valid

    @property
    def trials(self) -> int:
        return len(self.per_trial)

    def to_dict(self, include_metadata: bool = True) -> Dict[str, Any]:
        out = {
            "schema_version": config.REPORT_SCHEMA_VERSION,
            "config": self.config,
            "per_trial": list(self.per_trial),
            "bound": self.bound.to_dict(),
            "bound_value": self.bound_value,
            "valid": self.valid,
            "violation_rate": self.violation_rate,
            "violations": self.violations,
            "trials": self.trials,
            "empirical_quantile": self.empirical_quantile,
            "median": self.median,
            "mean": self.mean,
            "std": self.std,
            "allowed_violation_rate": self.allowed_violation_rate,
            "failure_probability": self.bound.failure_probability,
            "passed": self.passed,
            "constants_used": self.constants_used,
            "annotations": self.annotations,
        }
        if include_metadata:
            out["metadata"] = dict(self.metadata, wall_time=self.wall_time)
        return out

    def trial_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for i, value in enumerate(self.per_trial):
            row = {"trial": i, "statistic": value}
            if i < len(self.trial_aux):
                row.update(self.trial_aux[i])
            rows.append(row)
        return rows

    def save(self, out_dir: Optional[str] = None, name: Optional[str] = None) -> Dict[str, str]:
        return save_report(self.to_dict(), out_dir, name or self.config.get("name") or "report",
                           per_trial=self.trial_rows())


class Resolved:
    """Constants resolved for one run, each with the place it came from"""

    def __init__(self):
        self.values: Dict[str, float] = {}
        self.sources: Dict[str, str] = {}

    def set(self, name: str, value: float, source: str) -> float:
        self.values[name] = float(value)
        self.sources[name] = source
        return float(value)


def resolve_kappa(cfg: ExperimentConfig, resolved: Resolved) -> Optional[float]:
    """constants.kappa, else the family constant matching the bound (psi_2, psi_1 or L4-L2)"""
    if "kappa" in cfg.constants:
        return resolved.set("kappa", cfg.constants["kappa"], "override")
    kind = KAPPA_KIND.get(cfg.bound)
    if kind is None:
        return None
    try:
        if kind == "psi2":
            value = cfg.family.kappa_psi2()
        elif kind == "psi1":
            value = cfg.family.kappa_psi1()
        else:
            value = cfg.family.lowertail_kappa()
    except NotSubGaussian as e:
        raise ConfigError(f"{str(e)}; set constants.kappa to run {cfg.bound}", field="constants.kappa")
    return resolved.set("kappa", value, kind)


def resolve_eta(cfg: ExperimentConfig, resolved: Resolved) -> float:
    """constants.eta, else by constants.eta_method: exact core moment, 3 kappa sqrt(2s) or 4 kappa s"""
    if "eta" in cfg.constants:
        return resolved.set("eta", cfg.constants["eta"], "override")
    method = cfg.constants.get("eta_method", "exact")
    try:
        if method == "exact":
            value = cfg.family.eta(cfg.s)
        elif method == "psi2":
            value = estimators.eta_from_psi2(cfg.family.kappa_psi2(), cfg.s)
        else:
            value = estimators.eta_from_psi1(cfg.family.kappa_psi1(), cfg.s)
    except NotSubGaussian as e:
        raise ConfigError(f"{str(e)}; choose another eta_method or set constants.eta", field="constants.eta_method")
    return resolved.set("eta", value, method)


def probe_directions(Sigma: SymMatrix, count: int, master_seed: int) -> np.ndarray:
    """
    Fixed unit directions for trunc-moment-error: leading eigendirections, then random ones

    Returns:
        d x count matrix of unit columns
    """
    d = Sigma.d
    eig = sym_eigen(Sigma)
    k = min(d, count // 2)
    columns = [eig.eigenvectors[:, j] for j in range(k)]
    rng = SeedSpec(master_seed, DIRECTION_STREAM).generator()
    while len(columns) < count:
        z = rng.standard_normal(d)
        norm = np.linalg.norm(z)
        if norm > 0:
            columns.append(z / norm)
    return np.array(columns).T


class TrialRunner:
    """
    Prepared statistic for one experiment; calling it with i runs trial i

    Trial i draws its samples from stream i of the master seed, and the tensor
    maximizer's starting points from stream i of a second, mixed seed.
    """

    def __init__(self, cfg: ExperimentConfig, resolved: Resolved):
        self.cfg = cfg
        self.family = cfg.family
        self.Sigma = cfg.family.sigma_matrix
        self.fn: Callable[[np.ndarray, int], Tuple[float, Dict[str, Any]]] = getattr(
            self, "_" + cfg.statistic.replace("-", "_")
        )
        self.rows = 1 if cfg.statistic in SINGLE_DRAW else cfg.n
        self.restart_master = mix64(cfg.master_seed)

        if cfg.statistic == "trunc-moment-error":
            if cfg.t is None or not cfg.t > 0:
                raise ConfigError("trunc-moment-error needs t > 0 for the truncation level", field="t")
            eta = resolve_eta(cfg, resolved)
            lam = estimators.truncation_level(eta, cfg.s, self.Sigma, cfg.n, cfg.t)
            resolved.set("lambda", lam, "truncation level")
            self.truncation = estimators.TruncationConfig(lam, cfg.s, cfg.t)
            self.directions = probe_directions(self.Sigma, config.TRUNCATION_DIRECTIONS, cfg.master_seed)
            self.true_moments = np.atleast_1d(self.family.moment_provider(cfg.s).value(self.directions))
        if cfg.statistic in ("tensor-deviation", "tensor-lower-deviation"):
            self.centering = self.family.moment_provider(cfg.s)

    def __call__(self, i: int) -> Tuple[float, Dict[str, Any]]:
        X = self.family.sample(self.rows, SeedSpec(self.cfg.master_seed, i))
        return self.fn(X, i)

    def _cov_deviation(self, X, i):
        return estimators.covariance_deviation(X, self.Sigma), {}

    def _cov_lower_deviation(self, X, i):
        values = sym_eigen(estimators.sample_covariance(X) - self.Sigma).eigenvalues
        return float(-values[-1]), {"upper_deviation": float(values[0])}

    def _trunc_moment_error(self, X, i):
        errors = np.array([
            abs(estimators.truncated_moment_estimate(X, self.directions[:, j], self.truncation) - self.true_moments[j])
            for j in range(self.directions.shape[1])
        ])
        return float(np.max(errors)), {"mean_error": float(np.mean(errors))}

    def _tensor(self, X, i, sign=None):
        F = EmpiricalTensorForm(X, self.cfg.s, self.centering)
        seed = SeedSpec(self.restart_master, i)
        if sign is None:
            result = operator_norm_sup(F, restarts=self.cfg.tensor_restarts, seed=seed)
        else:
            result = signed_sup(F, sign, restarts=self.cfg.tensor_restarts, seed=seed)
        return result.value, {"converged": result.converged, "iterations": result.iterations}

    def _tensor_deviation(self, X, i):
        return self._tensor(X, i)

    def _tensor_lower_deviation(self, X, i):
        return self._tensor(X, i, sign=-1.0)

    def _norm(self, X, i):
        return float(np.linalg.norm(X[0])), {}

    _subexp_norm = _norm

    def _norm_squared(self, X, i):
        return float(np.dot(X[0], X[0])), {}

    def _max_norm(self, X, i):
        return float(np.max(np.linalg.norm(X, axis=1))), {}


def evaluate_bound(cfg: ExperimentConfig, resolved: Resolved) -> BoundResult:
    """The configured bound with experiment-level hypotheses folded into its validity"""
    kappa = resolved.values.get("kappa")
    if kappa is None:
        kappa = resolve_kappa(cfg, resolved)
    eta = resolved.values.get("eta")
    if eta is None and cfg.bound in ("lemma-truncation", "moment-lowertail"):
        eta = resolve_eta(cfg, resolved)

    knobs = {k: v for k, v in cfg.constants.items() if k not in ("kappa", "eta", "eta_method")}
    params = BoundParams(sigma=cfg.family.sigma_matrix, n=cfg.n, t=cfg.t, s=cfg.s, kappa=kappa, eta=eta,
                         d=cfg.d, constants=knobs)
    result = compute_bound(cfg.bound, params)

    extra = []
    if cfg.bound == "prop1" and not np.allclose(cfg.family.sigma_matrix.entries, np.eye(cfg.d)):
        extra.append("isotropic rows (Sigma = I)")
    if cfg.bound in LOGCONCAVE_BOUNDS and cfg.family.kind not in LOGCONCAVE_FAMILIES:
        extra.append(f"log-concave family ({cfg.family.kind} is not)")
    if cfg.bound == "lemma-norm-gauss-exact" and cfg.family.kind != "gaussian":
        extra.append(f"gaussian family ({cfg.family.kind} is not)")
    if extra:
        conditions = [result.condition_text] if result.condition_text else []
        result = replace(result, valid=False, condition_text="; ".join(conditions + extra))
        logger.warning(f"Bound {cfg.bound} outside its regime: {'; '.join(extra)}")
    return result


def _annotations(cfg: ExperimentConfig, values: np.ndarray, aux: List[Dict[str, Any]], bound: BoundResult,
                 resolved: Resolved) -> Dict[str, Any]:
    notes: Dict[str, Any] = {}
    if cfg.statistic == "cov-lower-deviation":
        upper = np.array([row["upper_deviation"] for row in aux])
        notes["upper_tail_violation_rate"] = float(np.mean(upper > bound.value))
        notes["upper_tail_median"] = float(np.median(upper))
    if cfg.statistic == "trunc-moment-error":
        notes["directions"] = config.TRUNCATION_DIRECTIONS
        notes["mean_over_directions_median"] = float(np.median([row["mean_error"] for row in aux]))
        if cfg.t is not None and 1.0 - 2.0 * math.exp(-cfg.t) > 0:
            notes["empirical_C_s"] = estimators.empirical_cs(values, resolved.values["eta"], cfg.s,
                                                             cfg.family.sigma_matrix, cfg.n, cfg.t)
    if cfg.statistic in ("tensor-deviation", "tensor-lower-deviation"):
        notes["non_converged_trials"] = int(sum(not row["converged"] for row in aux))
    if cfg.bound == "ellipsoid":
        notes["mean_statistic"] = float(np.mean(values))
        notes["expectation_check"] = bool(np.mean(values) <= bound.value)
    if cfg.bound in LOGCONCAVE_BOUNDS or cfg.bound == "prop-subexp-norm":
        notes["measured_psi1"] = measured_psi1(cfg)
    if bound.failure_probability is None:
        notes["failure_probability"] = "unspecified constant; violation rate reported, not asserted"
    return notes


def measured_psi1(cfg: ExperimentConfig, draws: int = PSI_NORM_DRAWS) -> float:
    """Empirical psi_1 norm of the normalized marginal along the top eigendirection"""
    eig = sym_eigen(cfg.family.sigma_matrix)
    v = eig.eigenvectors[:, 0]
    X = cfg.family.sample(draws, SeedSpec(cfg.master_seed, PSI_NORM_STREAM))
    return empirical_psi_norm(X @ v / math.sqrt(eig.eigenvalues[0]), 1.0)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None, threads: Optional[int] = None,
                   save: bool = False) -> ExperimentReport:
    """
    Run every trial of an experiment and aggregate against its bound

    Args:
        cfg: Experiment config
        out_dir: Report directory, used when save is set
        threads: Worker threads (defaults to cfg.threads); results do not depend on it
        save: Persist the JSON report and per-trial CSV

    Returns:
        ExperimentReport
    """
    threads = cfg.threads if threads is None else threads
    tracker = RunTracker("experiment")
    resolved = Resolved()

    with tracker.phase("prepare"):
        runner = TrialRunner(cfg, resolved)
        bound = evaluate_bound(cfg, resolved)
    if not bound.valid:
        logger.warning(f"Running {cfg.report_name} with an invalid bound regime: {bound.condition_text}")

    logger.info(f"Running {cfg.trials} trials of {cfg.statistic} against {cfg.bound} (n={cfg.n}, d={cfg.d})")
    with tracker.phase("trials"):
        outcomes = run_trials(runner, cfg.trials, threads=threads, progress_label=cfg.report_name)

    with tracker.phase("aggregate"):
        values = np.array([value for value, _ in outcomes], dtype=float)
        aux = [row for _, row in outcomes]
        violations = int(np.sum(values > bound.value))
        violation_rate = violations / cfg.trials

        if cfg.t is not None:
            level = min(max(1.0 - math.exp(-cfg.t), 0.0), 1.0)
            quantile = float(np.quantile(values, level))
            allowed = allowed_violation_rate(cfg.t, cfg.trials)
        else:
            quantile = None
            allowed = None

        if cfg.bound == "ellipsoid":
            passed = bool(np.mean(values) <= bound.value)
        elif bound.failure_probability is None or allowed is None:
            passed = None
        else:
            passed = violation_rate <= allowed

        constants_used = dict(bound.constants_used)
        constants_used.update(resolved.values)
        annotations = _annotations(cfg, values, aux, bound, resolved)
        annotations["constant_sources"] = dict(resolved.sources)

    report = ExperimentReport(
        config=cfg.to_dict(),
        per_trial=[float(v) for v in values],
        bound=bound,
        violation_rate=violation_rate,
        violations=violations,
        empirical_quantile=quantile,
        median=float(np.median(values)),
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        allowed_violation_rate=allowed,
        passed=passed,
        constants_used=constants_used,
        annotations=annotations,
        trial_aux=aux,
        wall_time=tracker.elapsed,
        metadata=tracker.get_summary(threads=threads, numba=HAVE_NUMBA),
    )
    logger.info(
        f"{cfg.report_name}: violation rate {violation_rate:.4f} (allowed {allowed}), "
        f"median {report.median:.6g} vs bound {bound.value:.6g}"
    )
    if save:
        report.save(out_dir, cfg.report_name)
    return report


@dataclass
class SweepResult:
    reports: List[ExperimentReport]
    rows: List[Dict[str, Any]]

    @property
    def failed(self) -> int:
        return sum(1 for row in self.rows if row.get("error"))


def grid_points(grid: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of the grid axes in n, d, t, s order; an empty grid has no points"""
    axes = [axis for axis in SWEEP_AXES if axis in grid]
    if not axes or any(len(grid[axis]) == 0 for axis in axes):
        return []
    return [dict(zip(axes, combo)) for combo in itertools.product(*(grid[axis] for axis in axes))]


def run_sweep(cfg: ExperimentConfig, grid: Optional[Dict[str, List[Any]]] = None, out_dir: Optional[str] = None,
              threads: Optional[int] = None, save: bool = False) -> SweepResult:
    """
    One experiment per grid point; a failing point is logged and recorded, the sweep continues

    Args:
        cfg: Base experiment
        grid: Axis -> values over any subset of n, d, t, s (defaults to the config's sweep block)
        out_dir: Directory of the sweep CSV and plot script
        threads: Worker threads per point
        save: Write the sweep CSV, plot script and per-point reports

    Returns:
        SweepResult with the successful reports and one row per point
    """
    grid = cfg.grid if grid is None else grid
    unknown = set(grid) - set(SWEEP_AXES)
    if unknown:
        raise ConfigError(f"Unknown sweep axes {sorted(unknown)}", field="sweep")

    reports: List[ExperimentReport] = []
    rows: List[Dict[str, Any]] = []
    for point in grid_points(grid):
        label = ", ".join(f"{axis}={value}" for axis, value in point.items())
        row = {"n": cfg.n, "d": cfg.d, "t": cfg.t, "s": cfg.s}
        row.update(point)
        try:
            point_cfg = cfg.at_point(**point)
            if cfg.name:
                point_cfg = replace(point_cfg, name=f"{cfg.name}_" + "_".join(f"{a}{v}" for a, v in point.items()))
            report = run_experiment(point_cfg, out_dir=out_dir, threads=threads, save=save)
        except LabError as e:
            logger.warning(f"Sweep point {label} failed: {str(e)}")
            row["error"] = str(e)
            rows.append(row)
            continue
        reports.append(report)
        row.update({
            "statistic_median": report.median,
            "bound_value": report.bound_value,
            "violation_rate": report.violation_rate,
            "valid": report.valid,
        })
        rows.append(row)

    if save:
        save_sweep(rows, out_dir, f"{cfg.report_name}_sweep")
    return SweepResult(reports, rows)


def sweep(cfg: ExperimentConfig, grid: Optional[Dict[str, List[Any]]] = None, **kwargs) -> List[ExperimentReport]:
    """Reports of run_sweep, one per successful grid point"""
    return run_sweep(cfg, grid, **kwargs).reports
