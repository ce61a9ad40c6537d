"""
Concentration Lab
Command-line front end: verify deviation bounds by simulation, evaluate bounds,
estimate moments from data and check the variational duality
"""

import argparse
import logging
import sys

import config
from modules.bounds import REGIMES, bound_keys
from modules.commands import EXIT_CONFIG, EXIT_OK, run_command
from modules.distributions import FAMILY_KINDS


def _add_global_flags(parser, suppress: bool):
    # Subcommand copies only set a value when the flag is actually given after the subcommand
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="Master seed (overrides master_seed)")
    parser.add_argument("--threads", type=int, default=default, help="Worker threads for trials")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else config.REPORTS_DIR,
                        help="Report directory")
    parser.add_argument("--assert", dest="assert_rates", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="Exit 2 when a violation rate exceeds the allowed rate")
    parser.add_argument("--strict-regime", dest="strict_regime", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="Exit 2 when the bound is evaluated outside its regime")
    parser.add_argument("--log-level", dest="log_level", default=argparse.SUPPRESS if suppress else config.LOG_LEVEL,
                        help="Logging level (DEBUG, INFO, WARNING, ERROR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conclab", allow_abbrev=False, description=__doc__.strip().splitlines()[0])
    _add_global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    _add_global_flags(common, suppress=True)

    subparsers = parser.add_subparsers(dest="command", required=True)
    shared = {"parents": [common], "allow_abbrev": False}

    verify = subparsers.add_parser("verify", **shared, help="Run an experiment config")
    verify.add_argument("config", help="JSON or YAML experiment config")

    sweep = subparsers.add_parser("sweep", **shared, help="Sweep an experiment over n, d, t or s")
    sweep.add_argument("config", help="JSON or YAML experiment config")
    sweep.add_argument("--grid-n", dest="grid_n", help="Comma-separated sample sizes")
    sweep.add_argument("--grid-d", dest="grid_d", help="Comma-separated dimensions")
    sweep.add_argument("--grid-t", dest="grid_t", help="Comma-separated confidence parameters")
    sweep.add_argument("--grid-s", dest="grid_s", help="Comma-separated moment orders")

    bound = subparsers.add_parser("bound", **shared, help="Evaluate a bound")
    bound.add_argument("key", help=f"One of: {', '.join(bound_keys())}")
    bound.add_argument("--sigma", help="identity:<d>, diag:<v1,...>, polydecay:<d>:<alpha>, "
                                       "expdecay:<d>:<gamma> or spiked:<d>:<k>:<strength>")
    bound.add_argument("--kappa", type=float)
    bound.add_argument("--n", type=int)
    bound.add_argument("--t", type=float)
    bound.add_argument("--s", type=int)
    bound.add_argument("--d", type=int)
    bound.add_argument("--eta", type=float)
    bound.add_argument("--C", dest="C", type=float)
    bound.add_argument("--C-s", dest="C_s", type=float)
    bound.add_argument("--c-s", dest="c_s", type=float)
    bound.add_argument("--c2", type=float)
    bound.add_argument("--c3", type=float)
    bound.add_argument("--regime", choices=REGIMES)

    estimate = subparsers.add_parser("estimate", **shared, help="Truncated moment estimate from data")
    estimate.add_argument("data", help="CSV sample, one row per observation")
    estimate.add_argument("--v", required=True, help="Direction: e<i> or comma-separated components")
    estimate.add_argument("--s", type=int, required=True)
    estimate.add_argument("--t", type=float, default=1.0)
    estimate.add_argument("--eta", type=float)
    estimate.add_argument("--lambda", dest="lam", type=float, help="Force the truncation level")
    estimate.add_argument("--sigma", help="Covariance for the truncation level (default: sample covariance)")

    tensornorm = subparsers.add_parser("tensornorm", **shared, help="Supremum of the empirical s-form")
    tensornorm.add_argument("data", help="CSV sample, one row per observation")
    tensornorm.add_argument("--s", type=int, required=True)
    tensornorm.add_argument("--family", choices=FAMILY_KINDS, help="Center by this family's moments")
    tensornorm.add_argument("--sigma", help="Covariance of the centering family (default: identity)")
    tensornorm.add_argument("--restarts", type=int, default=config.TENSOR_RESTARTS)
    tensornorm.add_argument("--oracle", action="store_true", help="Also run the grid oracle (d <= 3)")

    duality = subparsers.add_parser("duality", **shared, help="Check the entropy/log-MGF duality")
    duality.add_argument("--size", type=int, required=True)
    duality.add_argument("--reps", type=int, required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # Usage errors are input errors
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG

    level = getattr(logging, str(args.log_level).upper(), None)
    if not isinstance(level, int):
        sys.stderr.write(f"Unknown log level {args.log_level!r}\n")
        return EXIT_CONFIG
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger().setLevel(level)

    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
