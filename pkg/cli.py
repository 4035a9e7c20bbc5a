"""Command-line entry point.

    python cli.py solve    --config config/runs/linear_pde_1d.yaml
    python cli.py optimize --config run.cfg --output out/
    python cli.py estimate --config run.yaml --seed 3 --quiet
    python cli.py sweep    --config run.yaml --sigmas 0.2 0.1 0.05

Exit codes: 0 success, 1 a computation failed (see the JSON error block),
2 invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys

from dotenv import load_dotenv
from rich.logging import RichHandler

from analysis.errors import ConfigError
from pipeline.orchestrator import COMMANDS, cmd_sweep
from pipeline.settings import load_config

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Small-noise tail probabilities for lognormal elliptic problems")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Run config (.yaml, or flat key = value .cfg/.txt)")
    common.add_argument("--output", help="Output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (overrides mc.seed)")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    sub.add_parser("solve", parents=[common], help="Unperturbed solve, G'[0] and prefactor")
    sub.add_parser("optimize", parents=[common], help="Dominating point xi*")
    sub.add_parser("estimate", parents=[common], help="Tail formula and Monte Carlo reference")
    sweep = sub.add_parser("sweep", parents=[common], help="estimate over several sigmas")
    sweep.add_argument("--sigmas", type=float, nargs="+", help="Noise levels (overrides sweep.sigmas)")
    return parser


def setup_logging(level: str, fmt: str):
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    if sys.stderr.isatty():
        handler: logging.Handler = RichHandler(show_path=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
    else:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(fmt))
    root.addHandler(handler)
    root.setLevel(level)


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    overrides = {"output.dir": args.output, "mc.seed": args.seed}
    if getattr(args, "sigmas", None):
        overrides["sweep.sigmas"] = args.sigmas
    try:
        config = load_config(args.config, overrides=overrides)
    except ConfigError as e:
        setup_logging("ERROR", "%(levelname)s: %(message)s")
        for problem in e.problems:
            logger.error("invalid configuration: %s", problem)
        return EXIT_CONFIG

    level = config["logging.level"]
    if args.quiet:
        level = "WARNING"
    setup_logging(level, config["logging.format"])

    if args.command == "sweep":
        report = cmd_sweep(config, args.sigmas)
    else:
        report = COMMANDS[args.command](config)
    return EXIT_OK if report["status"] == "ok" else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
