"""
Allocation Service
Secondary power allocation under the primary QoS constraint and statistical relay selection
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..config.settings import (
    ALLOCATION_MODES,
    RATIO_EPSILON,
    RATIO_PROJECTION_SLACK,
)
from ..models.errors import (
    DomainError,
    NumericalConsistencyError,
    SecondaryForbidden,
    UndefinedPowerCapError,
    ValidationError,
)
from ..models.network import (
    PowerAllocation,
    ScenarioConfig,
    relay_label,
    relay_power_cap,
    st_power_coefficients,
)
from .outage_service import (
    compute_g,
    relay_outage_prob,
    relay_outage_vector,
    st_selection_ranking,
    statistical_choice,
)

logger = logging.getLogger(__name__)

BRANCH1 = "Branch1"
BRANCH2 = "Branch2"


@dataclass(frozen=True)
class StPowerCandidates:
    """Both boundary candidates for (P_s, P_d) and the one that was kept."""

    branch1: Tuple[float, float]
    branch2: Tuple[float, float]
    chosen: str
    achieved: float

    @property
    def powers(self) -> Tuple[float, float]:
        return self.branch1 if self.chosen == BRANCH1 else self.branch2


@dataclass(frozen=True)
class RatioTerms:
    """Constants of the forward power-ratio objective (a, c >= 1; b, d >= 0)."""
    a: float
    b: float
    c: float
    d: float


# ============================================================================
# CONSTRAINT BOUNDARY
# ============================================================================

def proportional_boundary_point(a_coef: float, b_coef: float, g: float,
                                k: float) -> Tuple[float, float]:
    """
    Point of (1 + a P_s)(1 + b P_d) = g on the ray P_d = k P_s.

    Args:
        a_coef: Coefficient of P_s in the primary constraint
        b_coef: Coefficient of P_d in the primary constraint
        g: Power budget scalar (> 1)
        k: Ratio P_d / P_s

    Returns:
        (P_s, P_d)
    """
    if g <= 1.0:
        return 0.0, 0.0
    linear = a_coef + b_coef * k
    p_s = 2.0 * (g - 1.0) / (linear + math.sqrt(linear ** 2 + 4.0 * a_coef * b_coef * k * (g - 1.0)))
    return p_s, k * p_s


def symmetric_boundary_point(a_coef: float, b_coef: float, g: float) -> Tuple[float, float]:
    """Boundary point with P_s = P_d."""
    return proportional_boundary_point(a_coef, b_coef, g, 1.0)


def lagrange_boundary_point(a_coef: float, b_coef: float, g: float,
                            ratio: float) -> Tuple[float, float]:
    """
    Boundary point that minimizes the high-SNR relay outage.

    `ratio` is delta_d sigma2_{s,r} / (delta_s sigma2_{d,r}) of the relay the
    powers are tuned for.
    """
    if g <= 1.0:
        return 0.0, 0.0
    p_s = (g - 1.0) / (math.sqrt(ratio * a_coef * b_coef * g) + a_coef)
    p_d = (g - 1.0) / (math.sqrt(a_coef * b_coef * g / ratio) + b_coef)
    return p_s, p_d


def boundary_candidates(cfg: ScenarioConfig, index: int, a_coef: float, b_coef: float,
                        g: float) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """
    Both closed-form boundary points for relay `index` as r_min.

    A zero threshold puts the whole budget on the other ST in the second
    candidate, since that ST's message is the only one to deliver.
    """
    th = cfg.thresholds
    k = cfg.relay_sigma2('s', index) / cfg.relay_sigma2('d', index)
    branch1 = proportional_boundary_point(a_coef, b_coef, g, k)
    if th.delta_s == 0.0 and th.delta_d == 0.0:
        branch2 = branch1
    elif th.delta_s == 0.0:
        branch2 = (0.0, (g - 1.0) / b_coef)
    elif th.delta_d == 0.0:
        branch2 = ((g - 1.0) / a_coef, 0.0)
    else:
        ratio = (th.delta_d * cfg.relay_sigma2('s', index)) / (th.delta_s * cfg.relay_sigma2('d', index))
        branch2 = lagrange_boundary_point(a_coef, b_coef, g, ratio)
    return branch1, branch2


def _coefficients(cfg: ScenarioConfig) -> Tuple[float, float]:
    if cfg.thresholds.delta_u == 0.0:
        raise UndefinedPowerCapError()
    return st_power_coefficients(cfg)


def _resolve_g(cfg: ScenarioConfig, g: Optional[float]) -> float:
    return compute_g(cfg) if g is None else g


# ============================================================================
# ST POWERS
# ============================================================================

def optimal_st_powers(cfg: ScenarioConfig, r_min: int,
                      g: Optional[float] = None) -> StPowerCandidates:
    """
    ST powers minimizing the decoding outage of relay `r_min`.

    Both boundary candidates are scored with the exact relay outage; ties keep
    the proportional candidate.

    Raises:
        SecondaryForbidden: g = 1
        UndefinedPowerCapError: zero primary rate
    """
    if not 0 <= r_min < cfg.num_relays:
        raise ValidationError(f"relay index {r_min} out of range for M = {cfg.num_relays}")
    g = _resolve_g(cfg, g)
    if g <= 1.0:
        raise SecondaryForbidden(g)
    a_coef, b_coef = _coefficients(cfg)
    branch1, branch2 = boundary_candidates(cfg, r_min, a_coef, b_coef, g)
    out1 = relay_outage_prob(cfg, r_min, *branch1)
    out2 = relay_outage_prob(cfg, r_min, *branch2)
    chosen, achieved = (BRANCH1, out1) if out1 <= out2 else (BRANCH2, out2)
    logger.debug("r_min=%s: branch outages %.6g / %.6g, keeping %s",
                 relay_label(r_min), out1, out2, chosen)
    return StPowerCandidates(branch1, branch2, chosen, achieved)


def find_r_min(cfg: ScenarioConfig,
               candidates: Optional[Sequence[StPowerCandidates]] = None,
               g: Optional[float] = None) -> Tuple[int, StPowerCandidates]:
    """
    Resolve r_min by trying every relay as the hypothesis.

    Args:
        cfg: Scenario
        candidates: Optional precomputed optimal_st_powers per hypothesis
        g: Optional precomputed power budget scalar

    Returns:
        (index, candidates) of the hypothesis whose powers minimize the worst
        relay outage; ties go to the lowest index
    """
    if cfg.num_relays == 0:
        raise DomainError("r_min is undefined without relays")
    if candidates is None:
        g = _resolve_g(cfg, g)
        candidates = [optimal_st_powers(cfg, j, g) for j in range(cfg.num_relays)]
    if len(candidates) != cfg.num_relays:
        raise ValidationError("one candidate pair per relay hypothesis is required")

    best_index, best_worst = 0, math.inf
    for j, cand in enumerate(candidates):
        worst = float(np.max(relay_outage_vector(cfg, *cand.powers)))
        if worst < best_worst:
            best_index, best_worst = j, worst
    logger.debug("r_min = %s (worst relay outage %.6g)", relay_label(best_index), best_worst)
    return best_index, candidates[best_index]


# ============================================================================
# RELAY POWERS AND RATIOS
# ============================================================================

def optimal_relay_power(cfg: ScenarioConfig, index: int, g: Optional[float] = None) -> float:
    """
    Relay power that meets the phase-2 primary QoS with equality.

    Returns:
        P_u sigma2_uv (g - 1) / (delta_u sigma2_{r_i,v})
    """
    if not 0 <= index < cfg.num_relays:
        raise ValidationError(f"relay index {index} out of range for M = {cfg.num_relays}")
    g = _resolve_g(cfg, g)
    if cfg.thresholds.delta_u == 0.0:
        raise UndefinedPowerCapError()
    return relay_power_cap(cfg, index, g)


def ratio_terms(cfg: ScenarioConfig, index: int, p_s: float, p_d: float,
                p_r: float) -> RatioTerms:
    th = cfg.thresholds
    if th.delta_s == 0.0 or th.delta_d == 0.0:
        raise DomainError("ratio constants need delta_s > 0 and delta_d > 0")
    scale_s = cfg.p_u * th.delta_d * cfg.sigma2('u', 's')
    scale_d = cfg.p_u * th.delta_s * cfg.sigma2('u', 'd')
    return RatioTerms(
        a=1.0 + p_d * cfg.sigma2('d', 's') / scale_s,
        b=p_r * cfg.relay_sigma2('s', index) / scale_s,
        c=1.0 + p_s * cfg.sigma2('s', 'd') / scale_d,
        d=p_r * cfg.relay_sigma2('d', index) / scale_d,
    )


def ratio_objective(terms: RatioTerms, alpha):
    """High-SNR ST outage as a function of alpha (scalar or array)."""
    alpha = np.asarray(alpha, dtype=float)
    out_s = 1.0 / (terms.a * (1.0 + (1.0 - alpha) * terms.b))
    out_d = 1.0 / (terms.c * (1.0 + alpha * terms.d))
    return out_s + out_d - out_s * out_d


def ratio_closed_form(terms: RatioTerms) -> float:
    """Stationary point of ratio_objective; may fall outside [0, 1]."""
    a, b, c, d = terms.a, terms.b, terms.c, terms.d
    if b <= 0.0 or d <= 0.0:
        raise DomainError("ratio closed form needs b > 0 and d > 0")
    ab, cd = a * b, c * d
    if abs(ab - cd) <= RATIO_EPSILON * max(ab, cd):
        return (b * d + d - b) / (2.0 * b * d)
    left = (ab - d + a * d + ab * d) * (b * c - b + cd + b * cd)
    return (ab + a + c - 1.0) / (ab - cd) - math.sqrt(left) / (math.sqrt(b * d) * (ab - cd))


def optimal_ratios(cfg: ScenarioConfig, index: int, p_s: float, p_d: float,
                   p_r: float) -> Tuple[float, float]:
    """
    Forward power ratios (alpha, beta) of relay `index`.

    Args:
        cfg: Scenario
        index: 0-based relay index
        p_s: Power of s
        p_d: Power of d
        p_r: Power of the relay (> 0)

    Returns:
        (alpha, 1 - alpha), alpha in [0, 1]
    """
    if not math.isfinite(p_r) or p_r <= 0.0:
        raise ValidationError(f"relay power must be finite and > 0, got {p_r}")
    th = cfg.thresholds
    if th.delta_s == 0.0 and th.delta_d == 0.0:
        return 0.5, 0.5
    if th.delta_d == 0.0:
        return 1.0, 0.0
    if th.delta_s == 0.0:
        return 0.0, 1.0

    return ratio_from_terms(ratio_terms(cfg, index, p_s, p_d, p_r), index)


def ratio_from_terms(terms: RatioTerms, index: int = 0) -> Tuple[float, float]:
    """
    Minimizing (alpha, beta) for given ratio constants.

    A stationary point outside [0, 1] is replaced by the better endpoint.
    """
    alpha = ratio_closed_form(terms)
    if not math.isfinite(alpha):
        raise NumericalConsistencyError(f"ratio of {relay_label(index)} is not finite")
    if -RATIO_PROJECTION_SLACK <= alpha <= 1.0 + RATIO_PROJECTION_SLACK:
        alpha = min(max(alpha, 0.0), 1.0)
    else:
        at_zero, at_one = ratio_objective(terms, [0.0, 1.0])
        projected = 0.0 if at_zero <= at_one else 1.0
        logger.debug("Ratio of %s: stationary point %.6g outside [0, 1], using %g",
                     relay_label(index), alpha, projected)
        alpha = projected
    return alpha, 1.0 - alpha


def select_relay(cfg: ScenarioConfig, mask: int, alloc: PowerAllocation) -> int:
    """Relay of decoding set `mask` with the lowest high-SNR ST outage."""
    if mask == 0:
        raise DomainError("relay selection needs a non-empty decoding set")
    if mask >= (1 << cfg.num_relays):
        raise ValidationError(f"decoding-set mask {mask:#b} exceeds M = {cfg.num_relays}")
    return statistical_choice(st_selection_ranking(cfg, alloc), mask)


# ============================================================================
# FULL ALLOCATIONS
# ============================================================================

def uniform_allocation(cfg: ScenarioConfig) -> PowerAllocation:
    """Baseline: P_s = P_d on the primary-constraint boundary, capped relay powers, even ratios."""
    g = compute_g(cfg)
    m = cfg.num_relays
    if g <= 1.0:
        return PowerAllocation.zero(m, scheme="uniform")
    a_coef, b_coef = _coefficients(cfg)
    p_s, p_d = symmetric_boundary_point(a_coef, b_coef, g)
    p_r = tuple(relay_power_cap(cfg, i, g) for i in range(m))
    return PowerAllocation(p_s, p_d, p_r, (0.5,) * m, (0.5,) * m, scheme="uniform")


def full_allocation(cfg: ScenarioConfig) -> PowerAllocation:
    """
    Sequential allocation: r_min and ST powers, relay powers, then ratios.

    Returns the all-zero allocation (forbidden=True) when g = 1. Without
    relays the ST powers use the symmetric boundary split.
    """
    g = compute_g(cfg)
    m = cfg.num_relays
    if g <= 1.0:
        logger.info("Secondary transmission forbidden for %s (g = 1)", cfg.name)
        return PowerAllocation.zero(m, scheme="lemma")
    a_coef, b_coef = _coefficients(cfg)
    if m == 0:
        p_s, p_d = symmetric_boundary_point(a_coef, b_coef, g)
        return PowerAllocation(p_s, p_d, scheme="lemma")

    r_min, candidates = find_r_min(cfg, g=g)
    p_s, p_d = candidates.powers
    p_r = [optimal_relay_power(cfg, i, g) for i in range(m)]
    ratios = [optimal_ratios(cfg, i, p_s, p_d, p_r[i]) for i in range(m)]
    return PowerAllocation(
        p_s, p_d, tuple(p_r),
        tuple(r[0] for r in ratios), tuple(r[1] for r in ratios),
        scheme="lemma", r_min=r_min,
    )


def allocate_for_mode(cfg: ScenarioConfig, mode: str) -> PowerAllocation:
    """Dispatch to the uniform baseline or the sequential allocation."""
    if mode == "uniform":
        return uniform_allocation(cfg)
    if mode == "lemma":
        return full_allocation(cfg)
    raise ValidationError(f"unknown allocation mode {mode!r}; expected one of {ALLOCATION_MODES}")
