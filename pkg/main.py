import logging
import sys

from pydantic import ValidationError

from actions.optimize import cmd_optimize
from actions.pmp_check import cmd_pmp_check
from actions.robustness import cmd_robustness
from actions.sweep import cmd_sweep
from src.config import load_config
from src.errors import AnnealError
from ui.inputs import parse_args
from ui.summary import render_optimize, render_pmp_check, render_robustness, render_sweep

logger = logging.getLogger("robust_anneal")


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(level)


def run(args) -> None:
    config = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out, jobs=args.jobs)

    # --- Optimize one protocol ---
    if args.command == "optimize":
        render_optimize(cmd_optimize(config, qaoa=args.qaoa))

    # --- Robustness curves ---
    elif args.command == "robustness":
        render_robustness(cmd_robustness(config))

    # --- Random-model sweep ---
    elif args.command == "sweep":
        render_sweep(cmd_sweep(config, resume=args.resume, restart=args.restart))

    # --- Maximum principle check ---
    elif args.command == "pmp-check":
        outcome = cmd_pmp_check(config, args.protocol)
        render_pmp_check(outcome)


def main(argv=None) -> int:
    args = parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        run(args)
    except AnnealError as e:
        logger.error("%s", e)
        return e.exit_code
    except ValidationError as e:
        logger.error("invalid input: %s", e)
        return 2
    except OSError as e:
        logger.error("I/O error: %s", e)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
