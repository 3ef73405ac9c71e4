"""
Experiment Service
Parameter sweeps, the closed-form versus simulation validation battery, and allocation comparisons
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..config.settings import (
    ALLOCATION_MODES,
    ALPHA_GRID_POINTS,
    DEFAULT_SEED,
    DEFAULT_SIGMA_TOLERANCE,
    DEFAULT_SWEEP_TRIALS,
    DEFAULT_VALIDATION_TRIALS,
    HIGH_SNR_NOISE_RATIO,
    MIN_TRIALS,
    PA_GRID_RESOLUTION,
    QUADRATURE_TOLERANCE,
    RATIO_GRID_SLACK,
    RELAY_QUADRATURE_TOLERANCE,
    SELECTION_MODES,
    SWEEP_VARIABLES,
)
from ..models.errors import (
    DomainError,
    InsufficientConditioning,
    SecondaryForbidden,
    ValidationError,
)
from ..models.network import (
    PowerAllocation,
    ScenarioConfig,
    db_to_linear,
    relay_label,
    st_power_coefficients,
)
from .allocation_service import (
    allocate_for_mode,
    full_allocation,
    optimal_st_powers,
    ratio_from_terms,
    ratio_objective,
    ratio_terms,
)
from .asymptotic_service import asymptotic_total_outage
from .data_service import results_frame
from .montecarlo_service import (
    McTarget,
    estimate_from_counts,
    simulate_counts,
    within_tolerance,
)
from .oracle_service import (
    boundary_grid,
    conditional_outage_quadrature,
    exhaustive_power_search,
    ratio_grid_search,
    relay_outage_quadrature,
)
from .outage_service import (
    OPPORTUNISTIC,
    compute_g,
    decoding_set_probabilities,
    p_out_given_empty,
    p_out_given_set,
    primary_outage_phase1,
    relay_outage_prob,
    st_outage_given_relay,
    st_outage_given_relay_exact,
    total_outage,
)

logger = logging.getLogger(__name__)

RANGE_DIGITS = 12


# ============================================================================
# SWEEPS
# ============================================================================

@dataclass(frozen=True)
class SweepCase:
    """One curve of a sweep: relay count, allocation mode and selection mode."""
    num_relays: int
    alloc: str = "lemma"
    select: str = OPPORTUNISTIC

    def __post_init__(self):
        if self.num_relays < 0:
            raise ValidationError(f"relay count must be >= 0, got {self.num_relays}")
        if self.alloc not in ALLOCATION_MODES:
            raise ValidationError(f"unknown allocation mode {self.alloc!r}")
        if self.select not in SELECTION_MODES:
            raise ValidationError(f"unknown selection mode {self.select!r}")


@dataclass(frozen=True)
class SweepSpec:
    """Sweep variable, its range and the curves evaluated at every point."""

    variable: str
    value_range: Tuple[float, float, float]
    cases: Tuple[SweepCase, ...]
    mc_trials: int = DEFAULT_SWEEP_TRIALS
    seed: int = DEFAULT_SEED
    skip_mc: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValidationError(
                f"unknown sweep variable {self.variable!r}; expected one of {SWEEP_VARIABLES}"
            )
        check_range(self.value_range)
        if not self.cases:
            raise ValidationError("a sweep needs at least one case")
        if not self.skip_mc and self.mc_trials < MIN_TRIALS:
            raise ValidationError(f"at least {MIN_TRIALS} trials are required, got {self.mc_trials}")


def check_range(value_range: Tuple[float, float, float]) -> None:
    start, stop, step = value_range
    if not all(math.isfinite(v) for v in value_range):
        raise ValidationError(f"range values must be finite, got {value_range}")
    if step <= 0:
        raise ValidationError(f"range step must be > 0, got {step}")
    if stop < start:
        raise ValidationError(f"range is empty: stop {stop} < start {start}")


def parse_range(text: str) -> Tuple[float, float, float]:
    """
    Parse 'start:stop:step'.

    Args:
        text: Range string, e.g. '0:60:5'

    Returns:
        (start, stop, step)
    """
    parts = str(text).split(':')
    if len(parts) != 3:
        raise ValidationError(f"range must look like 'start:stop:step', got {text!r}")
    try:
        value_range = tuple(float(p) for p in parts)
    except ValueError as e:
        raise ValidationError(f"range {text!r} holds a non-numeric value") from e
    check_range(value_range)
    return value_range


def sweep_values(value_range: Tuple[float, float, float]) -> List[float]:
    """Points start, start + step, ... up to and including stop (within rounding)."""
    check_range(value_range)
    start, stop, step = value_range
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, RANGE_DIGITS) for k in range(count)]


def configure_point(cfg: ScenarioConfig, variable: str, x: float) -> ScenarioConfig:
    """
    Scenario at one sweep point.

    gamma_u_dB moves P_u with N0 fixed, N0_dB moves N0 with P_u fixed.
    """
    if variable == 'gamma_u_dB':
        return cfg.with_updates(p_u=cfg.n0 * db_to_linear(x))
    if variable == 'P_th':
        return cfg.with_updates(p_th=float(x))
    if variable == 'N0_dB':
        return cfg.with_updates(n0=db_to_linear(x))
    raise ValidationError(f"unknown sweep variable {variable!r}")


def allocation_columns(alloc: PowerAllocation) -> Dict[str, float]:
    """P_s, P_d, P_r* and alpha* columns of a result row."""
    row = {'P_s': alloc.p_s, 'P_d': alloc.p_d}
    for i, (p_r, alpha) in enumerate(zip(alloc.p_r, alloc.alpha)):
        row[f'P_r{i + 1}'] = p_r
        row[f'alpha{i + 1}'] = alpha
    return row


def evaluate_case(cfg: ScenarioConfig, x: float, case: SweepCase, spec: SweepSpec) -> Dict:
    """One result row: analytic, asymptotic and simulated outage of a case."""
    cfg_case = cfg.with_updates(num_relays=case.num_relays)
    g = compute_g(cfg_case)
    alloc = allocate_for_mode(cfg_case, case.alloc)
    row = {'x': x, 'M': case.num_relays, 'alloc': case.alloc, 'select': case.select,
           'g': g, 'forbidden': alloc.forbidden}
    row.update(allocation_columns(alloc))

    if alloc.forbidden:
        row.update(p_analytic=1.0, p_asymptotic=1.0, p_mc=1.0, mc_se=0.0)
        return row

    row['p_analytic'] = total_outage(cfg_case, alloc, case.select).p_total
    row['p_asymptotic'] = asymptotic_total_outage(cfg_case, case.alloc, case.select).p_total
    if spec.skip_mc:
        row.update(p_mc=np.nan, mc_se=np.nan)
    else:
        counts = simulate_counts(cfg_case, alloc, spec.mc_trials, spec.seed)
        result = estimate_from_counts(counts, McTarget.secondary_outage(), spec.seed, case.select)
        row.update(p_mc=result.p_hat, mc_se=result.std_err)
    return row


def run_sweep(spec: SweepSpec, cfg: ScenarioConfig) -> pd.DataFrame:
    """
    Evaluate every case at every sweep point.

    Points run in parallel; rows come back in canonical (x, M, alloc, select) order.

    Args:
        spec: Sweep definition
        cfg: Base scenario

    Returns:
        Result table with the stable column schema
    """
    values = sweep_values(spec.value_range)
    jobs = [(x, case) for x in values for case in spec.cases]
    logger.info("Sweeping %s over %d points x %d cases", spec.variable, len(values), len(spec.cases))
    rows = Parallel(n_jobs=spec.n_jobs, prefer="threads")(
        delayed(evaluate_case)(configure_point(cfg, spec.variable, x), x, case, spec)
        for x, case in jobs
    )
    return results_frame(rows, max(case.num_relays for case in spec.cases))


# ============================================================================
# VALIDATION BATTERY
# ============================================================================

@dataclass
class ValidationReport:
    """Per-check results of the validation battery."""

    checks: List[Dict] = field(default_factory=list)

    def add(self, check: str, reference: float, value: float, tolerance: float,
            passed: Optional[bool], std_err: float = float('nan'), note: str = "") -> None:
        self.checks.append({
            'check': check, 'reference': reference, 'value': value,
            'std_err': std_err, 'tolerance': tolerance, 'passed': passed, 'note': note,
        })

    def add_mc(self, check: str, reference: float, estimate, sigma: float) -> None:
        tolerance = sigma * estimate.std_err + 1e-12
        self.add(check, reference, estimate.p_hat, tolerance,
                 within_tolerance(estimate.p_hat, estimate.std_err, reference, sigma),
                 estimate.std_err)

    def skip(self, check: str, note: str) -> None:
        self.add(check, float('nan'), float('nan'), float('nan'), None, note=note)

    @property
    def passed(self) -> bool:
        return all(c['passed'] is not False for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c['check'] for c in self.checks if c['passed'] is False]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.checks, columns=['check', 'reference', 'value', 'std_err',
                                                  'tolerance', 'passed', 'note'])


def _small_masks(num_relays: int, max_size: int = 3) -> List[int]:
    return [mask for mask in range(1, 1 << num_relays) if bin(mask).count('1') <= max_size]


def forbidden_variant(cfg: ScenarioConfig) -> ScenarioConfig:
    """Copy of `cfg` with gamma_u halved below the cutoff where g reaches 1."""
    delta_u = cfg.thresholds.delta_u
    if delta_u == 0.0:
        raise DomainError("a zero primary rate never forbids secondary transmission")
    cutoff = delta_u / (cfg.sigma2('u', 'v') * -math.log1p(-cfg.p_th))
    return cfg.with_updates(p_u=0.5 * cutoff * cfg.n0)


def _closed_form_checks(report: ValidationReport, cfg: ScenarioConfig, alloc: PowerAllocation,
                        counts, seed: int, sigma: float) -> None:
    m = cfg.num_relays
    for i in range(m):
        report.add_mc(f"relay outage {relay_label(i)}",
                      relay_outage_prob(cfg, i, alloc.p_s, alloc.p_d),
                      estimate_from_counts(counts, McTarget.relay_outage(i), seed), sigma)
    p_sets = decoding_set_probabilities(cfg, alloc.p_s, alloc.p_d)
    for mask in range(1 << m):
        report.add_mc(f"P(D = {mask:#b})", float(p_sets[mask]),
                      estimate_from_counts(counts, McTarget.decode_set(mask), seed), sigma)
    report.add_mc("direct retransmission outage", p_out_given_empty(cfg, alloc.p_s, alloc.p_d),
                  estimate_from_counts(counts, McTarget.direct_outage(), seed), sigma)
    for mask in range(1, 1 << m):
        label = f"P(out | D = {mask:#b})"
        try:
            result = estimate_from_counts(counts, McTarget.out_given_set(mask), seed)
        except InsufficientConditioning as e:
            report.skip(label, str(e))
            continue
        report.add_mc(label, p_out_given_set(cfg, mask, alloc), result, sigma)
    for mode in SELECTION_MODES:
        report.add_mc(f"total outage [{mode}]", total_outage(cfg, alloc, mode).p_total,
                      estimate_from_counts(counts, McTarget.secondary_outage(), seed, mode), sigma)
    for i in range(m):
        report.add_mc(f"exact ST outage via {relay_label(i)}",
                      st_outage_given_relay_exact(cfg, i, alloc),
                      estimate_from_counts(counts, McTarget.st_outage(i), seed), sigma)


def _high_snr_checks(report: ValidationReport, cfg: ScenarioConfig, mode: str, trials: int,
                     seed: int, sigma: float, n_jobs: int) -> None:
    cfg_hs = cfg.with_updates(n0=HIGH_SNR_NOISE_RATIO * cfg.p_u)
    alloc = allocate_for_mode(cfg_hs, mode)
    if alloc.forbidden:
        report.skip("high-SNR ST outage", "secondary transmission forbidden")
        return
    counts = simulate_counts(cfg_hs, alloc, trials, seed, n_jobs=n_jobs)
    for i in range(cfg.num_relays):
        report.add_mc(f"high-SNR ST outage via {relay_label(i)}",
                      st_outage_given_relay(cfg_hs, i, alloc),
                      estimate_from_counts(counts, McTarget.st_outage(i), seed), sigma)


def _deterministic_checks(report: ValidationReport, cfg: ScenarioConfig,
                          alloc: PowerAllocation) -> None:
    th = cfg.thresholds
    positive = th.delta_s > 0 and th.delta_d > 0 and alloc.p_s > 0 and alloc.p_d > 0
    for mask in _small_masks(cfg.num_relays):
        label = f"quadrature P(out | D = {mask:#b})"
        if not positive:
            report.skip(label, "needs positive thresholds and ST powers")
            continue
        closed = p_out_given_set(cfg, mask, alloc)
        numeric = conditional_outage_quadrature(cfg, mask, alloc)
        report.add(label, numeric, closed, QUADRATURE_TOLERANCE,
                   abs(closed - numeric) <= QUADRATURE_TOLERANCE)
    for i in range(cfg.num_relays):
        label = f"quadrature relay outage {relay_label(i)}"
        if alloc.p_s <= 0 or alloc.p_d <= 0:
            report.skip(label, "needs positive ST powers")
            continue
        closed = relay_outage_prob(cfg, i, alloc.p_s, alloc.p_d)
        numeric = relay_outage_quadrature(cfg, i, alloc.p_s, alloc.p_d)
        report.add(label, numeric, closed, RELAY_QUADRATURE_TOLERANCE,
                   abs(closed - numeric) <= RELAY_QUADRATURE_TOLERANCE)
        if th.delta_s > 0 and th.delta_d > 0 and alloc.p_r[i] > 0:
            terms = ratio_terms(cfg, i, alloc.p_s, alloc.p_d, alloc.p_r[i])
            alpha, _ = ratio_from_terms(terms, i)
            _, grid_best = ratio_grid_search(terms, ALPHA_GRID_POINTS)
            value = float(ratio_objective(terms, alpha))
            report.add(f"ratio optimality {relay_label(i)}", grid_best, value, RATIO_GRID_SLACK,
                       value <= grid_best + RATIO_GRID_SLACK)


def validate(cfg: ScenarioConfig, trials: int = DEFAULT_VALIDATION_TRIALS,
             seed: int = DEFAULT_SEED, mode: str = "uniform",
             sigma: float = DEFAULT_SIGMA_TOLERANCE, n_jobs: int = 1) -> ValidationReport:
    """
    Run the oracle battery for one scenario.

    Closed forms are compared with Monte Carlo (within `sigma` standard
    errors) and with quadrature and grid oracles; primary protection and the
    forbidden regime are checked as well.

    Args:
        cfg: Scenario
        trials: Monte Carlo trials per simulation
        seed: Simulation seed
        mode: Allocation mode under test
        sigma: Standard-error multiple of the Monte Carlo tolerance
        n_jobs: joblib workers

    Returns:
        ValidationReport
    """
    if trials < MIN_TRIALS:
        raise ValidationError(f"at least {MIN_TRIALS} trials are required, got {trials}")
    report = ValidationReport()
    alloc = allocate_for_mode(cfg, mode)
    if alloc.forbidden:
        report.skip("closed form vs simulation", "secondary transmission forbidden (g = 1)")
    else:
        counts = simulate_counts(cfg, alloc, trials, seed, n_jobs=n_jobs)
        _closed_form_checks(report, cfg, alloc, counts, seed, sigma)
        _high_snr_checks(report, cfg, mode, trials, seed, sigma, n_jobs)
        _deterministic_checks(report, cfg, alloc)

    lemma = full_allocation(cfg)
    if lemma.forbidden:
        report.skip("primary protection", "secondary transmission forbidden (g = 1)")
    else:
        counts = simulate_counts(cfg, lemma, trials, seed, n_jobs=n_jobs)
        p1 = estimate_from_counts(counts, McTarget.primary_p1(), seed)
        report.add_mc("primary outage phase 1", primary_outage_phase1(cfg, lemma.p_s, lemma.p_d),
                      p1, sigma)
        for select in SELECTION_MODES:
            p2 = estimate_from_counts(counts, McTarget.primary_p2(), seed, select)
            report.add_mc(f"primary outage phase 2 [{select}]", cfg.p_th, p2, sigma)

    try:
        forbidden = forbidden_variant(cfg)
    except DomainError as e:
        report.skip("forbidden regime", str(e))
    else:
        raised = False
        if forbidden.num_relays > 0:
            try:
                optimal_st_powers(forbidden, 0)
            except SecondaryForbidden:
                raised = True
        else:
            raised = compute_g(forbidden) <= 1.0
        report.add("forbidden regime signalled", 1.0, float(raised), 0.0,
                   raised and full_allocation(forbidden).forbidden)

    logger.info("Validation of %s: %d checks, %d failed", cfg.name,
                len(report.checks), len(report.failures))
    return report


# ============================================================================
# ALLOCATION COMPARISON
# ============================================================================

def power_allocation_compare(cfg: ScenarioConfig, n0_values: Sequence[float],
                             resolution: int = PA_GRID_RESOLUTION,
                             alpha_points: int = ALPHA_GRID_POINTS,
                             n_jobs: int = 1) -> pd.DataFrame:
    """
    Sequential allocation versus exhaustive search over a range of noise powers.

    Args:
        cfg: Scenario with at least one relay
        n0_values: Noise powers in dB
        resolution: Boundary grid points of the exhaustive search
        alpha_points: Points of each alpha grid
        n_jobs: joblib workers

    Returns:
        One row per N0 with both allocations, their outages, the grid cell
        width of P_d around the exhaustive optimum and `within_cell`, true when
        the sequential P_d and every alpha lie within one grid cell of the optimum
    """
    if cfg.num_relays < 1:
        raise DomainError("allocation comparison needs at least one relay")
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_compare_point)(cfg, x, resolution, alpha_points) for x in n0_values
    )
    return pd.DataFrame(rows).sort_values('N0_dB', kind='mergesort').reset_index(drop=True)


def _compare_point(cfg: ScenarioConfig, n0_db: float, resolution: int, alpha_points: int) -> Dict:
    cfg_x = configure_point(cfg, 'N0_dB', n0_db)
    g = compute_g(cfg_x)
    row = {'N0_dB': n0_db, 'g': g, 'forbidden': g <= 1.0}
    m = cfg.num_relays
    if g <= 1.0:
        row.update(P_s_lemma=0.0, P_d_lemma=0.0, P_s_exhaustive=0.0, P_d_exhaustive=0.0,
                   outage_lemma=1.0, outage_exhaustive=1.0, P_d_cell=np.nan,
                   within_cell=False)
        for i in range(m):
            row[f'alpha{i + 1}_lemma'] = np.nan
            row[f'alpha{i + 1}_exhaustive'] = np.nan
        return row

    lemma = full_allocation(cfg_x)
    best = exhaustive_power_search(cfg_x, resolution, alpha_points=alpha_points)
    a_coef, b_coef = st_power_coefficients(cfg_x)
    _, p_d_grid = boundary_grid(a_coef, b_coef, g, resolution)
    neighbours = [k for k in (best.index - 1, best.index + 1) if 0 <= k < resolution]
    cell = max(abs(p_d_grid[k] - p_d_grid[best.index]) for k in neighbours)
    alpha_cell = 1.0 / (alpha_points - 1)
    within_cell = (abs(lemma.p_d - best.p_d) <= cell
                   and all(abs(a - b) <= alpha_cell for a, b in zip(lemma.alpha, best.alpha)))
    row.update(P_s_lemma=lemma.p_s, P_d_lemma=lemma.p_d,
               P_s_exhaustive=best.p_s, P_d_exhaustive=best.p_d,
               outage_lemma=total_outage(cfg_x, lemma).p_total,
               outage_exhaustive=best.outage, P_d_cell=float(cell),
               within_cell=bool(within_cell))
    if not within_cell:
        logger.info("N0=%.3g dB: sequential allocation (P_d=%.4g) is off the exhaustive "
                    "optimum (P_d=%.4g) by more than one grid cell", n0_db, lemma.p_d, best.p_d)
    for i in range(m):
        row[f'alpha{i + 1}_lemma'] = lemma.alpha[i]
        row[f'alpha{i + 1}_exhaustive'] = best.alpha[i]
    return row


def allocation_summary(cfg: ScenarioConfig, mode: str = "lemma",
                       selection: str = OPPORTUNISTIC) -> Tuple[PowerAllocation, pd.DataFrame]:
    """
    Allocation of one scenario with its per-relay table and total outage.

    Returns:
        (allocation, per-relay DataFrame with power, ratios, decoding outage
        and high-SNR ST outage)
    """
    alloc = allocate_for_mode(cfg, mode)
    rows = []
    for i in range(cfg.num_relays):
        rows.append({
            'relay': relay_label(i),
            'P_r': alloc.p_r[i],
            'alpha': alloc.alpha[i],
            'beta': alloc.beta[i],
            'relay_outage': relay_outage_prob(cfg, i, alloc.p_s, alloc.p_d),
            'st_outage': st_outage_given_relay(cfg, i, alloc),
        })
    table = pd.DataFrame(rows, columns=['relay', 'P_r', 'alpha', 'beta',
                                        'relay_outage', 'st_outage'])
    return alloc, table
