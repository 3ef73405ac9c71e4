"""
Validate Command
Closed forms against Monte Carlo, quadrature and grid oracles
"""

from ..components.report_tables import format_done, format_header, format_step, format_validation
from ..services.data_service import export_to_csv, load_scenario
from ..services.experiment_service import validate


def run_validate_command(args) -> int:
    """Run the validation battery; exit status 1 when any check fails."""
    print(format_header("Validation battery"))

    print(format_step(1, 2, f"Loading scenario {args.scenario}..."))
    cfg = load_scenario(args.scenario)
    print(format_done(f"{cfg.name}: M = {cfg.num_relays}, {args.trials:,} trials, seed {args.seed}"))

    print(format_step(2, 2, "Running checks (this may take a few minutes)..."))
    report = validate(cfg, trials=args.trials, seed=args.seed, mode=args.mode or "uniform",
                      sigma=args.sigma, n_jobs=args.jobs)
    table = report.to_frame()
    print(format_validation(table))
    if args.out:
        export_to_csv(table, args.out)

    if report.passed:
        print(format_done(f"All {len(report.checks)} checks passed"))
        return 0
    print(f"\n   ✗ {len(report.failures)} check(s) failed: {', '.join(report.failures)}")
    return 1
