import argparse
import logging
import sys
from typing import List, Optional

import yaml

from . import __version__
from .commands import handle_command, setup_subparsers
from .config import load_run_config
from .core import config as defaults
from .errors import BudgetExhaustedError, DomainError, MapFileError, PreconditionError


def _common_parser() -> argparse.ArgumentParser:
    """Run flags shared by every analysis command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Random seed (64-bit)")
    common.add_argument("--grid", type=float, dest="grid_h", help="Measurement grid width h")
    common.add_argument("--budget", type=int, help="Iteration budget per orbit")
    common.add_argument("--samples", type=int, dest="n_samples", help="Number of sampled initial points")
    common.add_argument("--pmax", type=int, dest="p_max", help="Largest period searched")
    common.add_argument("--threads", type=int, help="Worker threads (0 = one per logical core)")
    common.add_argument("--out", help="Directory for the JSON report and CSV side files")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynlab",
        description="dynlab: measurable dynamics of interval maps.",
        epilog="Run 'dynlab <command> --help' for the options of a command.",
    )
    parser.add_argument("--version", "-v", action="store_true", help="Show the version and exit")
    parser.add_argument("--debug", action="store_true", help="Show debug logs")
    parser.add_argument("--config", help="Explicit YAML run file (skips the layered search)")
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")
    setup_subparsers(subparsers, _common_parser())
    return parser


def _configure_logging(debug: bool) -> None:
    level = logging.DEBUG if debug else getattr(logging, defaults.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None):
    """Main entry point for the dynlab CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        print(f"dynlab version {__version__}")
        return

    _configure_logging(args.debug)
    if args.debug:
        print("🔍 Debug mode enabled", file=sys.stderr)

    if not args.command:
        parser.print_help()
        return

    try:
        config = load_run_config(
            args.config,
            seed=args.seed,
            grid_h=args.grid_h,
            budget=args.budget,
            n_samples=args.n_samples,
            p_max=args.p_max,
            threads=args.threads,
            out=args.out,
        )
    except (OSError, yaml.YAMLError, TypeError, ValueError) as e:
        print(f"❌ Error: invalid run configuration: {e}", file=sys.stderr)
        sys.exit(2)
        return

    try:
        handle_command(args, config)
    except MapFileError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        sys.exit(2)
    except (PreconditionError, DomainError, BudgetExhaustedError) as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        sys.exit(1)
    except KeyboardInterrupt:
        print("⚠️ Interrupted", file=sys.stderr)
        sys.exit(130)


if __name__ == "__main__":
    main()
