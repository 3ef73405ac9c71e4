"""
Sweep Command
Outage versus primary SNR, QoS threshold or noise power, written as CSV
"""

import logging
from typing import List

from ..components.report_tables import format_done, format_header, format_results, format_step
from ..config.settings import ALLOCATION_MODES, DEFAULT_RANGES
from ..models.errors import ValidationError
from ..services.data_service import export_to_csv, load_scenario
from ..services.experiment_service import SweepCase, SweepSpec, parse_range, run_sweep

logger = logging.getLogger(__name__)


def parse_relay_counts(text: str) -> List[int]:
    """Parse a comma-separated list of relay counts such as '0,1,2'."""
    try:
        counts = sorted({int(part) for part in text.split(',') if part.strip()})
    except ValueError as e:
        raise ValidationError(f"relay counts must be integers, got {text!r}") from e
    if not counts or counts[0] < 0:
        raise ValidationError(f"relay counts must be non-negative integers, got {text!r}")
    return counts


def run_sweep_command(args) -> int:
    """Run a sweep and write the result table."""
    print(format_header(f"Outage sweep over {args.var}"))

    print(format_step(1, 3, f"Loading scenario {args.scenario}..."))
    cfg = load_scenario(args.scenario)
    value_range = parse_range(args.range) if args.range else DEFAULT_RANGES[args.var]
    relay_counts = (parse_relay_counts(args.relays) if args.relays
                    else list(range(cfg.num_relays + 1)))
    modes = [args.mode] if args.mode else list(ALLOCATION_MODES)
    cases = tuple(SweepCase(m, mode, args.select) for m in relay_counts for mode in modes)
    spec = SweepSpec(args.var, value_range, cases, mc_trials=args.trials, seed=args.seed,
                     skip_mc=args.skip_mc, n_jobs=args.jobs)
    print(format_done(f"{cfg.name}: M in {relay_counts}, allocation {modes}, selection {args.select}"))

    print(format_step(2, 3, "Evaluating closed forms and Monte Carlo..."))
    df = run_sweep(spec, cfg)
    print(format_done(f"{len(df):,} rows"))

    print(format_step(3, 3, "Writing results..."))
    if args.out:
        export_to_csv(df, args.out)
        print(format_done(f"Saved to {args.out}"))
    else:
        print(format_results(df))
    return 0
