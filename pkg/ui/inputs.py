import argparse
from pathlib import Path

from src import __version__

COMMANDS = ("optimize", "robustness", "sweep", "pmp-check")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="run configuration (JSON)")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides out_dir)")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes for starts, ensembles and sweeps")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides seed)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-anneal",
        description="Robust optimal control of quantum annealing protocols.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")

    optimize = commands.add_parser("optimize", help="optimize one protocol and write its diagnostics")
    _add_common(optimize)
    optimize.add_argument("--qaoa", action="store_true", help="optimize the bang-bang baseline instead")

    robustness = commands.add_parser("robustness", help="robustness curves for all approaches")
    _add_common(robustness)

    sweep = commands.add_parser("sweep", help="averaged robustness over random Ising models")
    _add_common(sweep)
    sweep.add_argument("--resume", action="store_true", help="continue from models.jsonl")
    sweep.add_argument("--restart", action="store_true", help="discard (back up) models.jsonl first")

    pmp_check = commands.add_parser("pmp-check", help="check the maximum principle on a stored protocol")
    _add_common(pmp_check)
    pmp_check.add_argument("protocol", type=Path, help="protocol.csv or a raw u vector")

    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs == 0:
        parser.error("--jobs must be non-zero")
    return args
