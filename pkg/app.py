"""
Cognitive Two-Way Relay Outage Analysis
Command-line entry point

Subcommands:
- sweep: outage versus gamma_u, P_th or N0 for several relay counts
- validate: closed forms against Monte Carlo and numerical oracles
- pa-compare: sequential allocation against exhaustive search
- allocate: power allocation and outage breakdown of one scenario

Usage:
    python app.py sweep --scenario scenarios/first_setup.json --var gamma_u_dB --out fig2.csv
"""

import argparse
import logging
import sys
from typing import List, Optional

from src.commands import (
    run_allocate_command,
    run_pa_compare_command,
    run_sweep_command,
    run_validate_command,
)
from src.config.settings import (
    ALLOCATION_MODES,
    APP_DESCRIPTION,
    DEFAULT_SEED,
    DEFAULT_SIGMA_TOLERANCE,
    DEFAULT_SWEEP_TRIALS,
    DEFAULT_VALIDATION_TRIALS,
    FIRST_SETUP_PATH,
    PA_GRID_RESOLUTION,
    SECOND_SETUP_PATH,
    SELECTION_MODES,
    SWEEP_VARIABLES,
)
from src.models.errors import RelayAnalysisError

logger = logging.getLogger(__name__)

EXIT_INPUT_ERROR = 2


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _add_common_arguments(parser: argparse.ArgumentParser, default_scenario) -> None:
    parser.add_argument("--scenario", default=str(default_scenario),
                        help=f"scenario JSON file (default: {default_scenario})")
    parser.add_argument("--mode", choices=ALLOCATION_MODES, default=None,
                        help="power allocation mode")
    parser.add_argument("--select", choices=SELECTION_MODES, default="opportunistic",
                        help="relay selection mode (default: opportunistic)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relay-outage", description=APP_DESCRIPTION)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="outage versus one scenario parameter")
    _add_common_arguments(sweep, FIRST_SETUP_PATH)
    sweep.add_argument("--var", choices=SWEEP_VARIABLES, default="gamma_u_dB",
                       help="swept variable (default: gamma_u_dB)")
    sweep.add_argument("--range", default=None, help="start:stop:step, stop inclusive")
    sweep.add_argument("--relays", default=None,
                       help="comma-separated relay counts (default: 0..M of the scenario)")
    sweep.add_argument("--trials", type=int, default=DEFAULT_SWEEP_TRIALS,
                       help=f"Monte Carlo trials per point (default: {DEFAULT_SWEEP_TRIALS:,})")
    sweep.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sweep.add_argument("--skip-mc", action="store_true", help="omit the Monte Carlo column")
    sweep.add_argument("--out", default=None, help="CSV output path (default: print)")
    sweep.set_defaults(handler=run_sweep_command)

    validate = sub.add_parser("validate", help="run the validation battery")
    _add_common_arguments(validate, FIRST_SETUP_PATH)
    validate.add_argument("--trials", type=int, default=DEFAULT_VALIDATION_TRIALS,
                          help=f"Monte Carlo trials (default: {DEFAULT_VALIDATION_TRIALS:,})")
    validate.add_argument("--seed", type=int, default=DEFAULT_SEED)
    validate.add_argument("--sigma", type=float, default=DEFAULT_SIGMA_TOLERANCE,
                          help="standard-error multiple of the Monte Carlo tolerance")
    validate.add_argument("--out", default=None, help="CSV path for the check table")
    validate.set_defaults(handler=run_validate_command)

    compare = sub.add_parser("pa-compare", help="sequential vs exhaustive power allocation")
    _add_common_arguments(compare, SECOND_SETUP_PATH)
    compare.add_argument("--range", default=None, help="N0 range in dB, start:stop:step")
    compare.add_argument("--resolution", type=int, default=PA_GRID_RESOLUTION,
                         help=f"boundary grid points (default: {PA_GRID_RESOLUTION})")
    compare.add_argument("--out", default=None, help="CSV output path (default: print)")
    compare.set_defaults(handler=run_pa_compare_command)

    allocate = sub.add_parser("allocate", help="print the allocation of one scenario")
    _add_common_arguments(allocate, FIRST_SETUP_PATH)
    allocate.set_defaults(handler=run_allocate_command)

    return parser


# ============================================================================
# MAIN
# ============================================================================

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except RelayAnalysisError as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
