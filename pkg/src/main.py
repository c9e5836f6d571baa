import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

# Add the repository root to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import AppConfig, ExperimentKind, WorkerBackend, load_experiment_config
from src.errors import ToolkitError
from src.harness.backtest import run_backtest
from src.harness.experiments import build_set, run_portfolio_experiment, run_queue_experiment, run_set_geometry
from src.harness.guarantee_lab import run_guarantee_lab

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(levelname)s] [%(asctime)s] [%(filename)s:%(lineno)s]: %(message)s"

COMMANDS: Dict[ExperimentKind, Callable[..., object]] = {
    ExperimentKind.BUILD_SET: build_set,
    ExperimentKind.PORTFOLIO: run_portfolio_experiment,
    ExperimentKind.QUEUE: run_queue_experiment,
    ExperimentKind.GUARANTEE_LAB: run_guarantee_lab,
    ExperimentKind.GEOMETRY: run_set_geometry,
    ExperimentKind.BACKTEST: run_backtest,
}

HELP = {
    ExperimentKind.BUILD_SET: "build one uncertainty set and write it as JSON",
    ExperimentKind.PORTFOLIO: "robust portfolio in-sample and out-of-sample returns",
    ExperimentKind.QUEUE: "waiting-time bounds for a single-server queue",
    ExperimentKind.GUARANTEE_LAB: "Monte Carlo check of coverage and chance-constraint implication",
    ExperimentKind.GEOMETRY: "box endpoints per dependence regime and sample size",
    ExperimentKind.BACKTEST: "portfolio backtest on a returns CSV",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayes-robust-sets",
        description="Bayesian credible-region uncertainty sets for chance-constrained programs",
    )
    parser.add_argument("--config-dir", help="directory with application/workers/experiments.conf (default: the repository config/)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in COMMANDS:
        sub = subparsers.add_parser(kind.value, help=HELP[kind])
        sub.add_argument("--config", help="experiment configuration file (JSON or HOCON)")
        sub.add_argument("--seed", type=int, help="master seed")
        sub.add_argument("--out-dir", help="output directory")
        sub.add_argument("--threads", type=int, help="local worker threads")
        sub.add_argument("--log-level", help="logging level, e.g. DEBUG or INFO")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one experiment subcommand and return the process exit code."""
    args = build_parser().parse_args(argv)
    level = (args.log_level or "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)

    kind = ExperimentKind.from_name(args.command)
    try:
        app_config = AppConfig(args.config_dir)
        if not args.log_level:
            logging.getLogger().setLevel(getattr(logging, app_config.app.log_level.upper(), logging.INFO))
        config = load_experiment_config(
            kind,
            app_config,
            args.config,
            {"seed": args.seed, "out_dir": args.out_dir, "threads": args.threads},
        )
        backend = app_config.workers.backend
        if backend is WorkerBackend.CELERY:
            from src.tasks.celery_app import configure

            configure(app_config.workers.celery)
        if kind is ExperimentKind.BUILD_SET:
            COMMANDS[kind](config)
        else:
            COMMANDS[kind](config, backend)
    except ToolkitError as e:
        logger.error(f"{kind.value} failed: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
