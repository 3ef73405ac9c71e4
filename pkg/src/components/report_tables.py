"""
Report Tables Component
Plain-text rendering of allocations, outage breakdowns and validation results
"""

from typing import Optional

import pandas as pd

from ..models.network import OutageBreakdown, PowerAllocation, relay_label

RULE_WIDTH = 80


def format_header(title: str) -> str:
    """Title framed by rules, as printed at the top of every command."""
    rule = "=" * RULE_WIDTH
    return f"{rule}\n{title.upper()}\n{rule}"


def format_step(index: int, total: int, message: str) -> str:
    return f"\n[{index}/{total}] {message}"


def format_done(message: str) -> str:
    return f"   ✓ {message}"


def format_probability(value: float) -> str:
    """Fixed-point for moderate values, scientific for tiny ones."""
    if value != value:
        return "-"
    if value == 0.0 or value >= 1e-3:
        return f"{value:.6f}"
    return f"{value:.4e}"


def format_allocation(alloc: PowerAllocation, table: Optional[pd.DataFrame] = None) -> str:
    """
    Render a power allocation.

    Args:
        alloc: Allocation to show
        table: Optional per-relay table (relay, P_r, alpha, beta, relay_outage, st_outage)

    Returns:
        Multi-line string
    """
    lines = [f"Scheme: {alloc.scheme}" + ("  (secondary transmission forbidden)" if alloc.forbidden else "")]
    lines.append(f"P_s = {alloc.p_s:.6g} W    P_d = {alloc.p_d:.6g} W")
    if alloc.r_min is not None:
        lines.append(f"r_min = {relay_label(alloc.r_min)}")
    if table is not None and not table.empty:
        shown = table.copy()
        for column in ('relay_outage', 'st_outage'):
            shown[column] = shown[column].map(format_probability)
        lines.append(shown.to_string(index=False, float_format=lambda v: f"{v:.6g}"))
    return "\n".join(lines)


def format_breakdown(breakdown: OutageBreakdown, max_rows: int = 32) -> str:
    """Render the decoding-set decomposition of a total outage."""
    lines = [
        f"Selection: {breakdown.selection}",
        f"P(D = empty) = {format_probability(breakdown.p_empty)}    "
        f"P(out | D = empty) = {format_probability(breakdown.p_out_given_empty)}",
    ]
    rows = [{'decoding set': '{' + ', '.join(relay_label(i) for i in range(s.mask.bit_length())
                                             if (s.mask >> i) & 1) + '}',
             'P(D)': format_probability(s.p_set),
             'P(out | D)': format_probability(s.p_out)}
            for s in breakdown.per_subset[:max_rows]]
    if rows:
        lines.append(pd.DataFrame(rows).to_string(index=False))
    hidden = len(breakdown.per_subset) - max_rows
    if hidden > 0:
        lines.append(f"... {hidden} more decoding sets")
    lines.append(f"Total secondary outage = {format_probability(breakdown.p_total)}")
    return "\n".join(lines)


def _status(passed) -> str:
    if passed is None or passed != passed:
        return 'SKIP'
    return 'PASS' if bool(passed) else 'FAIL'


def format_validation(report_df: pd.DataFrame) -> str:
    """Per-check table with PASS / FAIL / SKIP status."""
    if report_df.empty:
        return "No checks were run"
    shown = report_df.copy()
    shown['status'] = shown['passed'].map(_status)
    shown = shown[['status', 'check', 'reference', 'value', 'std_err', 'tolerance', 'note']]
    return shown.to_string(index=False, float_format=lambda v: f"{v:.6g}", na_rep='-')


def format_results(df: pd.DataFrame, max_rows: int = 40) -> str:
    """Compact view of a sweep or comparison table."""
    if df.empty:
        return "No rows"
    return df.head(max_rows).to_string(index=False, float_format=lambda v: f"{v:.6g}", na_rep='-')
