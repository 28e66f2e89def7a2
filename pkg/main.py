"""
Main entry point for the application.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app.models.schema import MarketMode, RunConfig
from app.routes import COMMANDS
from app.utils.errors import ConfigError

log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
date_format = "%Y-%m-%d %H:%M:%S"

logger = logging.getLogger(__name__)


def configure_logging(level: str = "INFO") -> None:
    """Log to both console and logs/app.log."""
    os.makedirs("logs", exist_ok=True)
    logging.basicConfig(
        level=logging.INFO,
        format=log_format,
        datefmt=date_format,
        handlers=[
            logging.FileHandler("logs/app.log", encoding="utf-8"),
            logging.StreamHandler()  # Console output
        ]
    )
    logging.getLogger().setLevel(level.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="congestion-id",
        description="Identify transmission congestion status from published LMP data.",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    # flags default to SUPPRESS so only the ones given override the config file
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
    common.add_argument("--mode", choices=[m.value for m in MarketMode])
    common.add_argument("--case", help="case file (.json, .m) or builtin:<name>")
    common.add_argument("--lmp", type=Path, help="LMP panel CSV")
    common.add_argument("--truth", type=Path, help="ground-truth CSV")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--eps-cutoff", dest="eps_cutoff", type=float)
    common.add_argument("--eps-encode", dest="eps_encode", type=float)
    common.add_argument("--p", type=float, help="minimum inlier share of a hyperplane")
    common.add_argument("--n-trials", dest="n_trials", type=int)
    common.add_argument("--noise", type=float, help="relative std of load and price noise")
    common.add_argument("--intervals", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--ref-node", dest="ref_node")
    common.add_argument("--workers", type=int)
    common.add_argument("--forward-fill", dest="forward_fill", action="store_true")
    common.add_argument("--lmp-layout", dest="lmp_layout", choices=["default", "spp"])

    subparsers.add_parser("simulate", parents=[common], help="clear a case and write lmp.csv and truth.csv")
    subparsers.add_parser("identify", parents=[common], help="recover basis vectors and status codes")
    subparsers.add_parser("evaluate", parents=[common], help="score codes against the truth file")
    subparsers.add_parser("report", parents=[common], help="write block and affinity grids")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then command-line flags."""
    values = {}
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "log_level", "config")}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {config_path}: {e}") from e
        if not isinstance(values, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
    values.update(flags)
    try:
        return RunConfig(**values)
    except ValidationError as e:
        fields = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid configuration: {fields}") from e


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, build the RunConfig and dispatch to the command route."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args)
    except ConfigError as e:
        logger.error(f"{e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    logger.info(f"Starting {args.command}...")
    return COMMANDS[args.command](config)


if __name__ == "__main__":
    sys.exit(main())
