"""
Command-line entry point for the convergence experiments.

Exit codes: 0 success, 2 configuration or argument error, 3 numerical failure,
4 file-system failure (unwritable output or cache directory).
"""

import argparse
import os
import sys
from typing import List, Optional

from ..utils.errors import ArgumentError, CapabilityError, ConfigurationError, NumericalError
from ..utils.logger import get_logger, setup_logging
from .config import REFERENCE_STARTS, STRATEGIES, build_config, load_settings

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kacanov",
        description="Damped Kacanov iteration experiments on the L-shaped domain",
    )
    parser.add_argument("--config", help="key=value file; flags override its values")
    parser.add_argument("--model", choices=["mu1", "mu2", "mu3", "constant"])
    parser.add_argument("--level", type=int, help="uniform refinement level of the L-shape")
    parser.add_argument("--strategy", action="append", choices=list(STRATEGIES),
                        help="damping strategy (repeatable)")
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--tol", type=float, help="stop once the error to the reference drops below")
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--theta", type=float)
    parser.add_argument("--fixed-delta", type=float, help="delta of the 'fixed' strategy")
    parser.add_argument("--out", help="output directory for CSV traces and plots")
    parser.add_argument("--solver", choices=["cg", "direct"])
    parser.add_argument("--ref-steps", type=int, help="Zarantonello steps for the reference solution")
    parser.add_argument("--reference-start", choices=list(REFERENCE_STARTS),
                        help="zero: Zarantonello from u = 0; descent: seeded by Taylor steps; auto: descent if H is not convex")
    parser.add_argument("--workers", type=int, help="threads for per-triangle assembly")
    parser.add_argument("--no-cache", action="store_true", help="recompute the reference solution")
    parser.add_argument("--no-plots", action="store_true")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags and 0 on --help
        return int(e.code or 0)

    logging_settings = load_settings()[1]
    level = args.log_level or os.getenv("KACANOV_LOG_LEVEL") or logging_settings.get("level", "INFO")
    log_file = logging_settings.get("log_file", "true").lower() in ("1", "true", "yes", "on")
    setup_logging(level=level.upper(), log_file=log_file)

    env_workers = os.getenv("KACANOV_WORKERS")
    overrides = {
        "model_id": args.model,
        "level": args.level,
        "strategies": args.strategy,
        "max_iters": args.max_iters,
        "tol_error": args.tol,
        "sigma": args.sigma,
        "theta": args.theta,
        "fixed_delta": args.fixed_delta,
        "output_dir": args.out,
        "solver": args.solver,
        "ref_steps": args.ref_steps,
        "reference_start": args.reference_start,
        "workers": args.workers if args.workers is not None else env_workers,
        "use_cache": False if args.no_cache else None,
        "plots": False if args.no_plots else None,
    }

    try:
        cfg = build_config(args.config, overrides)
        from .harness import run_experiment
        report = run_experiment(cfg)
    except (ConfigurationError, ArgumentError, CapabilityError) as e:
        logger.error(f"configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"file-system failure: {e}")
        return EXIT_IO

    print(report.summary_frame().to_string(index=False))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
