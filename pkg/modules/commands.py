"""
Command Handlers
verify, sweep, bound, estimate, tensornorm and duality, each returning an exit code
"""

import json
import logging
import sys
from typing import Any, Dict, List, Optional

from modules import estimators
from modules.bounds import BoundParams, compute_bound
from modules.distributions import CovarianceSpec, DistributionFamily, materialize_sigma
from modules.experiments import ExperimentConfig, rate_slope, run_experiment, run_sweep
from modules.linalg import SymMatrix
from modules.tensor_ops import EmpiricalTensorForm, grid_sup, operator_norm_sup
from modules.variational import duality_check
from utils.data_io import load_config_file, parse_sigma_spec, parse_vector_spec, read_matrix_csv
from utils.errors import ConfigError, LabError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VIOLATION = 2
EXIT_CONFIG = 3

ORACLE_POINTS = 1_000_000


def emit(data: Dict[str, Any]):
    """Command result on stdout: sorted keys so identical inputs print identical bytes"""
    sys.stdout.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    sys.stdout.flush()


def _parse_list(text: Optional[str], cast, field: str) -> Optional[List[Any]]:
    if text is None:
        return None
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Expected a comma-separated list, got {text!r}", field=field)


def _sigma_from_flag(text: str) -> SymMatrix:
    return materialize_sigma(CovarianceSpec.from_dict(parse_sigma_spec(text)))


def load_experiment(path: str, args) -> ExperimentConfig:
    """Config file with the global --seed and --threads applied on top"""
    data = load_config_file(path)
    if getattr(args, "seed", None) is not None:
        data["master_seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        data["threads"] = args.threads
    return ExperimentConfig.from_dict(data)


def _report_summary(report) -> Dict[str, Any]:
    return {
        "name": report.config.get("name"),
        "statistic": report.config["statistic"],
        "bound": report.config["bound"],
        "bound_value": report.bound_value,
        "valid": report.valid,
        "condition_text": report.bound.condition_text,
        "violation_rate": report.violation_rate,
        "allowed_violation_rate": report.allowed_violation_rate,
        "passed": report.passed,
        "median": report.median,
        "empirical_quantile": report.empirical_quantile,
    }


def _exit_code(reports, args) -> int:
    if getattr(args, "assert_rates", False) and any(report.passed is False for report in reports):
        logger.error("Violation rate above the allowed rate")
        return EXIT_VIOLATION
    if getattr(args, "strict_regime", False) and any(not report.valid for report in reports):
        logger.error("Bound evaluated outside its regime")
        return EXIT_VIOLATION
    return EXIT_OK


def _sweep_output(cfg: ExperimentConfig, result) -> Dict[str, Any]:
    output: Dict[str, Any] = {"name": cfg.report_name, "points": result.rows, "failed": result.failed}
    by_n = [(row["n"], row["statistic_median"]) for row in result.rows if not row.get("error")]
    if "n" in cfg.grid and len({n for n, _ in by_n}) >= 2 and len(cfg.grid) == 1:
        ns, medians = zip(*by_n)
        output["rate_slope"] = rate_slope(ns, medians)
    return output


def cmd_verify(args) -> int:
    """Run the experiment (or its sweep block) in a config file and write the reports"""
    cfg = load_experiment(args.config, args)
    if cfg.grid:
        result = run_sweep(cfg, out_dir=args.out, save=True)
        emit(_sweep_output(cfg, result))
        return _exit_code(result.reports, args)

    report = run_experiment(cfg, out_dir=args.out, save=True)
    emit(_report_summary(report))
    return _exit_code([report], args)


def cmd_sweep(args) -> int:
    """Sweep a config over grid flags (each replaces the matching axis of the config's sweep block)"""
    cfg = load_experiment(args.config, args)
    grid = dict(cfg.grid)
    for axis, cast in (("n", int), ("d", int), ("t", float), ("s", int)):
        values = _parse_list(getattr(args, f"grid_{axis}", None), cast, f"grid-{axis}")
        if values is not None:
            grid[axis] = values
    cfg = ExperimentConfig.from_dict(dict(cfg.to_dict(), sweep=grid, threads=cfg.threads))

    result = run_sweep(cfg, out_dir=args.out, save=True)
    emit(_sweep_output(cfg, result))
    return _exit_code(result.reports, args)


def cmd_bound(args) -> int:
    """Evaluate one bound from named flags"""
    if args.sigma is not None:
        Sigma = _sigma_from_flag(args.sigma)
    elif args.key == "prop1" and args.d is not None:
        Sigma = SymMatrix.identity(args.d)
    else:
        raise ConfigError("This bound needs --sigma", field="sigma")

    constants = {}
    for name in ("C", "c_s", "C_s", "c2", "c3", "regime"):
        value = getattr(args, name, None)
        if value is not None:
            constants[name] = value
    params = BoundParams(sigma=Sigma, n=args.n, t=args.t, s=args.s, kappa=args.kappa, eta=args.eta, d=args.d,
                         constants=constants)
    emit(compute_bound(args.key, params).to_dict())
    return EXIT_OK


def cmd_estimate(args) -> int:
    """Truncated moment estimate along one direction of a CSV sample"""
    X = read_matrix_csv(args.data)
    n, d = X.shape
    v = parse_vector_spec(args.v, d)

    if args.sigma is not None:
        Sigma = _sigma_from_flag(args.sigma)
        sigma_source = "given"
    else:
        Sigma = estimators.sample_covariance(X)
        sigma_source = "sample-covariance"

    if args.lam is not None:
        lam = args.lam
        lambda_source = "forced"
    else:
        if args.eta is None:
            raise ConfigError("Give --lambda, or --eta to compute the truncation level", field="eta")
        lam = estimators.truncation_level(args.eta, args.s, Sigma, n, args.t)
        lambda_source = "formula"

    record = estimators.truncated_moment_record(X, v, estimators.TruncationConfig(lam, args.s, args.t))
    record.update({
        "n": n,
        "t": args.t,
        "eta": args.eta,
        "lambda_source": lambda_source,
        "sigma_source": sigma_source if lambda_source == "formula" else None,
    })
    emit(record)
    return EXIT_OK


def cmd_tensornorm(args) -> int:
    """Supremum of the empirical s-form of a CSV sample, centered by a family when one is named"""
    X = read_matrix_csv(args.data)
    d = X.shape[1]
    centering = None
    if args.family is not None:
        sigma = parse_sigma_spec(args.sigma or f"identity:{d}")
        family = DistributionFamily.from_dict({"kind": args.family, "sigma": sigma})
        if family.d != d:
            raise ConfigError(f"Family has dimension {family.d}, data has {d}", field="sigma")
        centering = family.moment_provider(args.s)

    F = EmpiricalTensorForm(X, args.s, centering)
    seed = args.seed if args.seed is not None else 0
    result = operator_norm_sup(F, restarts=args.restarts, seed=seed)
    output = {"s": args.s, "d": d, "n": X.shape[0], "centering": args.family or "zero", "sup": result.to_dict()}
    if args.oracle:
        output["oracle"] = grid_sup(F, ORACLE_POINTS).to_dict()
    emit(output)
    return EXIT_OK


def cmd_duality(args) -> int:
    """Max gap at the Gibbs posterior and min gap at random posteriors"""
    seed = args.seed if args.seed is not None else 0
    emit(duality_check(args.size, seed, args.reps).to_dict())
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "bound": cmd_bound,
    "estimate": cmd_estimate,
    "tensornorm": cmd_tensornorm,
    "duality": cmd_duality,
}


def run_command(args) -> int:
    """
    Dispatch a parsed command line and map errors to exit codes

    Returns:
        0 on success, 2 on an assertion-mode violation, 3 on invalid input, 1 otherwise
    """
    handler = COMMANDS.get(args.command)
    if handler is None:
        logger.error(f"Unknown command {args.command!r}")
        return EXIT_CONFIG
    try:
        return handler(args)
    except LabError as e:
        logger.error(f"{args.command}: {str(e)}")
        return EXIT_CONFIG
    except Exception as e:
        logger.exception(f"{args.command} failed: {str(e)}")
        return EXIT_FAILURE
