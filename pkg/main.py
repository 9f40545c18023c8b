# main.py
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import jsonschema
from dotenv import dotenv_values

from config.constants import DEFAULT_T_GRID, DISCARD_POLICIES, HEAT_MODES
from config.settings import settings
from data.cache_manager import CacheManager
from estimator.expected_signature import EstimatorError
from geometry.manifolds import GeometryError
from oracle.kernel_expr import DivergenceError
from oracle.labels import OracleError
from pde.solvers import PDEStabilityError
from schemas.reports import RunConfig
from services.run_service import PDE_PROBLEMS, TABLE_FORMS, RunService
from sim.heat_kernel import SamplerError
from utils.run_tracker import RunTracker

logger = logging.getLogger(__name__)

COMMANDS = [
    "sig",
    "bridge-sample",
    "expected-sig",
    "recon-distance",
    "recon-curvature",
    "pde",
    "oracle",
    "geometry-check",
]
GLOBAL_KEYS = ["manifold", "seed", "workers", "steps", "out", "verbose"]
FLAG_KEYS = ["audit", "no_cache", "verbose"]  # store_true options
RUN_ERRORS = (
    ValueError,
    jsonschema.ValidationError,
    OSError,
    GeometryError,
    SamplerError,
    EstimatorError,
    OracleError,
    DivergenceError,
    PDEStabilityError,
)


class CLIUsageError(Exception):
    """Custom exception for bad flag values found after parsing"""
    pass


def _global_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="flat KEY=VALUE run config file")
    parent.add_argument("--out", help="output directory (default OUTPUT_DIR/<subcommand>)")
    parent.add_argument("--workers", type=int, help="worker threads (default SIGMANI_THREADS or all cores)")
    parent.add_argument("--seed", type=int, help="master seed")
    parent.add_argument("--steps", type=int, help="time steps per path")
    parent.add_argument("--manifold", help='manifold spec, e.g. "sphere:d=2,r=1"')
    parent.add_argument("-v", "--verbose", action="store_true", default=None, help="debug logging")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigmani",
        description="Expected signatures of Brownian bridges on embedded manifolds",
    )
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    parent = _global_flags()

    p = sub.add_parser("sig", parents=[parent], help="signature of a path or geodesic")
    p.add_argument("--path", help="CSV path file (t,x1..xN)")
    p.add_argument("--x", help="start point, comma-separated ambient coordinates")
    p.add_argument("--y", help="end point of the geodesic")
    p.add_argument("--level", type=int)

    p = sub.add_parser("bridge-sample", parents=[parent], help="sample and dump bridge paths")
    p.add_argument("--x")
    p.add_argument("--y", help="end point; omit for Brownian motion")
    p.add_argument("--t", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--heat-kernel", dest="heat_kernel", choices=HEAT_MODES)

    p = sub.add_parser("expected-sig", parents=[parent], help="Monte Carlo expected signature")
    p.add_argument("--x")
    p.add_argument("--y", help="end point; omit for Brownian motion, equal to x for loops")
    p.add_argument("--t", type=float)
    p.add_argument("--level", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--policy", choices=DISCARD_POLICIES)
    p.add_argument("--heat-kernel", dest="heat_kernel", choices=HEAT_MODES)

    p = sub.add_parser("recon-distance", parents=[parent], help="distance from the top signature level")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--nmax", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--heat-kernel", dest="heat_kernel", choices=HEAT_MODES)

    p = sub.add_parser("recon-curvature", parents=[parent], help="curvature from loop level 4")
    p.add_argument("--x")
    p.add_argument("--t-grid", dest="t_grid", help=f"comma-separated lifetimes (default {DEFAULT_T_GRID})")
    p.add_argument("--samples", type=int, help="loops per grid point")
    p.add_argument("--fit-order", dest="fit_order", type=int, choices=[3, 4])
    p.add_argument("--heat-kernel", dest="heat_kernel", choices=HEAT_MODES)

    p = sub.add_parser("pde", parents=[parent], help="tensor PDE solvers")
    p.add_argument("--problem", choices=PDE_PROBLEMS)
    p.add_argument("--t", type=float)
    p.add_argument("--level", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--y-theta", dest="y_theta", type=float)
    p.add_argument("--dim", type=int, help="dimension of the Euclidean problem")
    p.add_argument("--t-grid", dest="t_grid", help=f"lifetimes of the loop fit (default {DEFAULT_T_GRID})")

    p = sub.add_parser("oracle", parents=[parent], help="exact coefficient oracle")
    p.add_argument("--case", help='case word, e.g. "II.II" or "JI;P"')
    p.add_argument("--order", choices=["t2", "t3"])
    p.add_argument("--directive", help='expansion directive, e.g. "lead", "phi1@2", "all"')
    p.add_argument("--total", help="pipi_t2, theta, s1, s2, s3 or xi")
    p.add_argument("--form", choices=TABLE_FORMS)
    p.add_argument("--audit", action="store_true", default=None)
    p.add_argument("--no-cache", dest="no_cache", action="store_true", default=None)

    p = sub.add_parser("geometry-check", parents=[parent], help="identity residuals and theory tensors")
    p.add_argument("--x")
    return parser


def _as_flag(value) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def resolve_options(args: argparse.Namespace) -> Dict:
    """
    Merge flags, config file and defaults.

    Flags win over the config file, whose keys are flag names in upper
    snake case (SAMPLES, T_GRID, NO_CACHE, ...); anything left unset falls
    back to Settings.
    """
    options = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise CLIUsageError(f"config file {path} not found")
        for key, value in dotenv_values(path).items():
            name = key.lower()
            if name not in options:
                raise CLIUsageError(f"unknown key {key} in {path} for {args.command}")
            if options[name] is None and value is not None:
                options[name] = _as_flag(value) if name in FLAG_KEYS else value

    defaults = {
        "seed": settings.DEFAULT_SEED,
        "steps": settings.DEFAULT_STEPS,
        "workers": settings.SIGMANI_THREADS,
        "out": str(Path(settings.OUTPUT_DIR) / args.command),
        "level": settings.DEFAULT_LEVEL,
    }
    for key, value in defaults.items():
        if key in options and options[key] is None:
            options[key] = value
    return options


def build_config(command: str, options: Dict) -> RunConfig:
    try:
        workers = None if options.get("workers") is None else int(options["workers"])
        config = RunConfig(
            command=command,
            manifold=options.get("manifold"),
            seed=int(options["seed"]),
            workers=workers,
            steps=int(options["steps"]),
            params={
                k: v for k, v in sorted(options.items())
                if k not in GLOBAL_KEYS and v is not None
            },
        )
    except (TypeError, ValueError) as e:
        raise CLIUsageError(str(e))
    if config.workers is not None and config.workers < 1:
        raise CLIUsageError(f"--workers must be at least 1, got {config.workers}")
    if config.steps < 1:
        raise CLIUsageError(f"--steps must be at least 1, got {config.steps}")
    return config


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv, execute one subcommand and write its report.

    Returns:
        0 on success, 1 on a runtime error, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        options = resolve_options(args)
        config = build_config(args.command, options)
    except CLIUsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 2

    tracker = RunTracker()
    cache = None if options.get("no_cache") else CacheManager(settings.ORACLE_CACHE_DIR)
    service = RunService(config, Path(options["out"]), tracker=tracker, cache=cache)
    try:
        outcome = service.run()
    except RUN_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    if outcome.output:
        print(outcome.output)
    print(outcome.summary)
    if options.get("verbose"):
        tracker.print_summary()
    return 0


if __name__ == "__main__":
    sys.exit(run())
