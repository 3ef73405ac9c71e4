"""
Allocate Command
Print the power allocation of one scenario with its outage breakdown
"""

from ..components.report_tables import (
    format_allocation,
    format_breakdown,
    format_header,
    format_probability,
)
from ..services.asymptotic_service import asymptotic_total_outage
from ..services.data_service import load_scenario
from ..services.experiment_service import allocation_summary
from ..services.outage_service import total_outage


def run_allocate_command(args) -> int:
    cfg = load_scenario(args.scenario)
    mode = args.mode or "lemma"
    print(format_header(f"Allocation for {cfg.name} ({mode})"))
    alloc, table = allocation_summary(cfg, mode, args.select)
    print(format_allocation(alloc, table))
    if alloc.forbidden:
        print("\nSecondary outage = 1 (no power budget)")
        return 0
    print()
    print(format_breakdown(total_outage(cfg, alloc, args.select)))
    floor = asymptotic_total_outage(cfg, mode, args.select).p_total
    print(f"High-SNR outage floor = {format_probability(floor)}")
    return 0
