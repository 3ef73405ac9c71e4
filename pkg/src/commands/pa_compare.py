"""
Power Allocation Compare Command
Sequential allocation against the exhaustive-search optimum over a noise range
"""

from ..components.report_tables import format_done, format_header, format_results, format_step
from ..config.settings import DEFAULT_PA_COMPARE_RANGE
from ..services.data_service import export_to_csv, load_scenario
from ..services.experiment_service import parse_range, power_allocation_compare, sweep_values


def run_pa_compare_command(args) -> int:
    print(format_header("Power allocation comparison"))

    print(format_step(1, 2, f"Loading scenario {args.scenario}..."))
    cfg = load_scenario(args.scenario)
    value_range = parse_range(args.range) if args.range else DEFAULT_PA_COMPARE_RANGE
    values = sweep_values(value_range)
    print(format_done(f"{cfg.name}: N0 from {values[0]} to {values[-1]} dB, "
                      f"grid resolution {args.resolution}"))

    print(format_step(2, 2, "Searching the constraint boundary..."))
    df = power_allocation_compare(cfg, values, resolution=args.resolution, n_jobs=args.jobs)
    forbidden = int(df['forbidden'].sum())
    if forbidden:
        print(format_done(f"{forbidden} point(s) forbidden: secondary transmission switched off"))
    live = df[~df['forbidden']]
    matched = int(live['within_cell'].sum())
    print(format_done(f"{matched} of {len(live)} point(s) within one grid cell of the exhaustive optimum"))
    if args.out:
        export_to_csv(df, args.out)
        print(format_done(f"Saved to {args.out}"))
    else:
        print(format_results(df))
    return 0
