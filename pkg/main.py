"""
Command-line entry point of the signature reduction pipeline.

    python main.py --config configs/bergomi.ini simulate
    python main.py --config configs/bergomi.ini fit
    python main.py --config configs/bergomi.ini build
    python main.py --config configs/bergomi.ini gramians
    python main.py --config configs/bergomi.ini reduce
    python main.py --config configs/bergomi.ini price
    python main.py --config configs/bergomi.ini report
"""
import argparse
import logging
import sys

from pipeline.artifacts import RunDirectory
from pipeline.commands import COMMANDS
from pipeline.config import apply_overrides, load_config
from utils.errors import SignatureMORError
from utils.logger import get_logger, set_console_level

logger = get_logger("main")

DEFAULT_CONFIG = "configs/bergomi.ini"

COMMAND_HELP = {
    "simulate": "simulate ground-truth model paths (paths.npz)",
    "fit": "fit the signature price model (model.npz, fit_sweep.csv)",
    "build": "assemble the signature system (system.txt)",
    "gramians": "Gramians P, Q and the sigma spectrum",
    "reduce": "balanced truncation and the L2 error curve",
    "price": "call smiles and relative IV errors",
    "report": "SVG charts, sibling CSVs and reference targets",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signature-mor",
        description="Balanced truncation of linear signature systems for stochastic volatility models.",
    )
    parser.add_argument("--config", default=DEFAULT_CONFIG, help=f"pipeline config file (default: {DEFAULT_CONFIG})")
    parser.add_argument("--seed", type=int, default=None, help="override [io] seed")
    parser.add_argument("--threads", type=int, default=None, help="override [io] threads")
    parser.add_argument("--out", default=None, help="override [io] out (run directory)")
    parser.add_argument("--force", action="store_true", help="overwrite stale artifacts")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in COMMAND_HELP.items():
        sub.add_parser(name, help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_console_level(logging.DEBUG)

    try:
        config = apply_overrides(load_config(args.config), seed=args.seed, threads=args.threads, out=args.out)
        run_dir = RunDirectory(config.io.out, force=args.force)
        COMMANDS[args.command](config, run_dir)
    except SignatureMORError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
