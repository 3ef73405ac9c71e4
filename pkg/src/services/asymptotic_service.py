"""
Asymptotic Service
High primary-SNR limits: power coefficients, relay outage, conditional and total outage floor

Powers are expressed as coefficients rho with P = rho * P_u; nothing here
reads P_u, N0 or gamma_u, so every result is independent of them.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..config.settings import CASE_EPSILON
from ..models.errors import UndefinedPowerCapError, ValidationError
from ..models.network import OutageBreakdown, PowerAllocation, ScenarioConfig, relay_label
from .allocation_service import (
    BRANCH1,
    BRANCH2,
    RatioTerms,
    boundary_candidates,
    ratio_from_terms,
    symmetric_boundary_point,
)
from .outage_service import (
    OPPORTUNISTIC,
    STATISTICAL,
    assemble_breakdown,
    check_capacity,
    check_probability,
    mask_bits,
    mask_members,
    popcount_signs,
    statistical_choice,
    submasks,
    subset_sums,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AsymptoticCoefficients:
    """
    Limiting power coefficients.

    rho_s_prime/rho_d_prime is the proportional boundary candidate,
    rho_s_second/rho_d_second the Lagrange one; rho_s/rho_d the kept pair.
    """

    g_prime: float
    rho_s: float
    rho_d: float
    rho_s_prime: float
    rho_d_prime: float
    rho_s_second: float
    rho_d_second: float
    rho_r: Tuple[float, ...]
    alpha: Tuple[float, ...]
    beta: Tuple[float, ...]
    chosen: str = BRANCH1
    r_min: Optional[int] = None
    scheme: str = "lemma"

    @property
    def num_relays(self) -> int:
        return len(self.rho_r)

    def scaled(self, cfg: ScenarioConfig) -> PowerAllocation:
        """Finite allocation with every power equal to rho * P_u."""
        return PowerAllocation(
            self.rho_s * cfg.p_u, self.rho_d * cfg.p_u,
            tuple(r * cfg.p_u for r in self.rho_r), self.alpha, self.beta,
            scheme=f"{self.scheme}-scaled", r_min=self.r_min,
        )


def asymptotic_g(cfg: ScenarioConfig) -> float:
    """Limit of g as gamma_u grows: 1 / (1 - P_th)."""
    if not 0.0 < cfg.p_th < 1.0:
        raise ValidationError(f"P_th must lie in (0, 1), got {cfg.p_th}")
    return 1.0 / (1.0 - cfg.p_th)


def asymptotic_coefficients(cfg: ScenarioConfig) -> Tuple[float, float]:
    """gamma_u-free coefficients of the limiting constraint on (rho_s, rho_d)."""
    delta_u = cfg.thresholds.delta_u
    if delta_u == 0.0:
        raise UndefinedPowerCapError()
    sigma_uv = cfg.sigma2('u', 'v')
    return delta_u * cfg.sigma2('s', 'v') / sigma_uv, delta_u * cfg.sigma2('d', 'v') / sigma_uv


def asymptotic_relay_cap(cfg: ScenarioConfig, index: int, g_prime: float) -> float:
    delta_u = cfg.thresholds.delta_u
    if delta_u == 0.0:
        raise UndefinedPowerCapError()
    return cfg.sigma2('u', 'v') * (g_prime - 1.0) / (delta_u * cfg.relay_sigma2('v', index))


# ============================================================================
# RELAY OUTAGE
# ============================================================================

def asymptotic_relay_outage(cfg: ScenarioConfig, index: int, rho_s: float, rho_d: float) -> float:
    """
    Limit of the relay decoding outage with P_s = rho_s P_u, P_d = rho_d P_u.

    Args:
        cfg: Scenario
        index: 0-based relay index
        rho_s: Power coefficient of s
        rho_d: Power coefficient of d

    Returns:
        Probability in [0, 1]
    """
    if not 0 <= index < cfg.num_relays:
        raise ValidationError(f"relay index {index} out of range for M = {cfg.num_relays}")
    if rho_s < 0 or rho_d < 0 or not (math.isfinite(rho_s) and math.isfinite(rho_d)):
        raise ValidationError("power coefficients must be finite and >= 0")
    th = cfg.thresholds
    if th.delta == 0.0:
        return 0.0
    if (th.delta_s > 0.0 and rho_s == 0.0) or (th.delta_d > 0.0 and rho_d == 0.0):
        return 1.0
    sigma_u = cfg.relay_sigma2('u', index)
    lam_s = rho_s * cfg.relay_sigma2('s', index)
    lam_d = rho_d * cfg.relay_sigma2('d', index)
    if lam_s == 0.0 or lam_d == 0.0:
        lam = lam_d if lam_s == 0.0 else lam_s
        return check_probability(th.delta * sigma_u / (th.delta * sigma_u + lam),
                                 "asymptotic relay outage")

    if abs(lam_s - lam_d) <= CASE_EPSILON * max(lam_s, lam_d):
        value = ((th.delta * sigma_u) ** 2 + (th.delta_s + th.delta_d) * sigma_u * lam_d) \
            / (th.delta * sigma_u + lam_d) ** 2
    else:
        a_prime = sigma_u * (th.delta - th.delta_d) / lam_s + sigma_u * th.delta_d / lam_d
        b_prime = sigma_u * th.delta_s / lam_s + sigma_u * (th.delta - th.delta_s) / lam_d
        value = (b_prime / (b_prime + 1.0)
                 - sigma_u * th.delta_s * th.delta_d / (lam_d * (a_prime + 1.0) * (b_prime + 1.0)))
    return check_probability(value, f"asymptotic outage of {relay_label(index)}")


def asymptotic_relay_outage_vector(cfg: ScenarioConfig, rho_s: float, rho_d: float) -> np.ndarray:
    return np.array([asymptotic_relay_outage(cfg, i, rho_s, rho_d)
                     for i in range(cfg.num_relays)], dtype=float)


# ============================================================================
# ALLOCATION
# ============================================================================

def asymptotic_ratio_terms(cfg: ScenarioConfig, index: int, rho_s: float, rho_d: float,
                           rho_r: float) -> RatioTerms:
    th = cfg.thresholds
    scale_s = th.delta_d * cfg.sigma2('u', 's')
    scale_d = th.delta_s * cfg.sigma2('u', 'd')
    return RatioTerms(
        a=1.0 + rho_d * cfg.sigma2('d', 's') / scale_s,
        b=rho_r * cfg.relay_sigma2('s', index) / scale_s,
        c=1.0 + rho_s * cfg.sigma2('s', 'd') / scale_d,
        d=rho_r * cfg.relay_sigma2('d', index) / scale_d,
    )


def _asymptotic_ratios(cfg: ScenarioConfig, rho_s: float, rho_d: float, rho_r):
    th = cfg.thresholds
    ratios = []
    for i, rho in enumerate(rho_r):
        if th.delta_s == 0.0 and th.delta_d == 0.0:
            ratios.append((0.5, 0.5))
        elif th.delta_d == 0.0:
            ratios.append((1.0, 0.0))
        elif th.delta_s == 0.0:
            ratios.append((0.0, 1.0))
        else:
            ratios.append(ratio_from_terms(asymptotic_ratio_terms(cfg, i, rho_s, rho_d, rho), i))
    return tuple(r[0] for r in ratios), tuple(r[1] for r in ratios)


def asymptotic_allocation(cfg: ScenarioConfig) -> AsymptoticCoefficients:
    """
    Limiting counterpart of the sequential allocation.

    Every relay is tried as r_min; for each, the boundary candidate with the
    lower limiting relay outage is kept, and the hypothesis with the smallest
    worst-relay outage wins (ties to the lowest index).
    """
    g_prime = asymptotic_g(cfg)
    a_coef, b_coef = asymptotic_coefficients(cfg)
    m = cfg.num_relays
    if m == 0:
        rho_s, rho_d = symmetric_boundary_point(a_coef, b_coef, g_prime)
        return AsymptoticCoefficients(g_prime, rho_s, rho_d, rho_s, rho_d, rho_s, rho_d,
                                      (), (), ())

    best = None
    for j in range(m):
        branch1, branch2 = boundary_candidates(cfg, j, a_coef, b_coef, g_prime)
        out1 = asymptotic_relay_outage(cfg, j, *branch1)
        out2 = asymptotic_relay_outage(cfg, j, *branch2)
        chosen, pair = (BRANCH1, branch1) if out1 <= out2 else (BRANCH2, branch2)
        worst = float(np.max(asymptotic_relay_outage_vector(cfg, *pair)))
        if best is None or worst < best[0]:
            best = (worst, j, chosen, pair, branch1, branch2)

    _, r_min, chosen, (rho_s, rho_d), branch1, branch2 = best
    rho_r = tuple(asymptotic_relay_cap(cfg, i, g_prime) for i in range(m))
    alpha, beta = _asymptotic_ratios(cfg, rho_s, rho_d, rho_r)
    logger.debug("Asymptotic allocation: r_min=%s, %s, rho=(%.6g, %.6g)",
                 relay_label(r_min), chosen, rho_s, rho_d)
    return AsymptoticCoefficients(g_prime, rho_s, rho_d, branch1[0], branch1[1],
                                  branch2[0], branch2[1], rho_r, alpha, beta,
                                  chosen=chosen, r_min=r_min)


def asymptotic_uniform_allocation(cfg: ScenarioConfig) -> AsymptoticCoefficients:
    """Limiting uniform baseline: rho_s = rho_d on the boundary, even ratios."""
    g_prime = asymptotic_g(cfg)
    a_coef, b_coef = asymptotic_coefficients(cfg)
    rho = symmetric_boundary_point(a_coef, b_coef, g_prime)
    m = cfg.num_relays
    rho_r = tuple(asymptotic_relay_cap(cfg, i, g_prime) for i in range(m))
    return AsymptoticCoefficients(g_prime, rho[0], rho[1], rho[0], rho[1], rho[0], rho[1],
                                  rho_r, (0.5,) * m, (0.5,) * m, scheme="uniform")


def asymptotic_allocation_for_mode(cfg: ScenarioConfig, mode: str) -> AsymptoticCoefficients:
    if mode == "uniform":
        return asymptotic_uniform_allocation(cfg)
    if mode == "lemma":
        return asymptotic_allocation(cfg)
    raise ValidationError(f"unknown allocation mode {mode!r}")


# ============================================================================
# CONDITIONAL AND TOTAL OUTAGE
# ============================================================================

def asymptotic_p_out_given_empty(cfg: ScenarioConfig, rho_s: float, rho_d: float) -> float:
    """Limit of the direct-retransmission outage."""
    th = cfg.thresholds
    success = 1.0
    for delta, rho, sigma_direct, sigma_interf in (
        (th.delta_d, rho_d, cfg.sigma2('d', 's'), cfg.sigma2('u', 's')),
        (th.delta_s, rho_s, cfg.sigma2('s', 'd'), cfg.sigma2('u', 'd')),
    ):
        if delta == 0.0:
            continue
        doubled = 2.0 * rho * sigma_direct
        success *= doubled / (doubled + delta * sigma_interf)
    return check_probability(1.0 - success, "asymptotic P(out | D = empty)")


def asymptotic_st_outage_given_relay(cfg: ScenarioConfig, index: int,
                                     coeffs: AsymptoticCoefficients) -> float:
    """Limit of the ST outage with relay `index` forwarding."""
    th = cfg.thresholds
    rho_r = coeffs.rho_r[index]
    out_s = out_d = 0.0
    if th.delta_d > 0.0:
        scale = th.delta_d * cfg.sigma2('u', 's')
        out_s = 1.0 / ((1.0 + coeffs.rho_d * cfg.sigma2('d', 's') / scale)
                       * (1.0 + coeffs.beta[index] * rho_r * cfg.relay_sigma2('s', index) / scale))
    if th.delta_s > 0.0:
        scale = th.delta_s * cfg.sigma2('u', 'd')
        out_d = 1.0 / ((1.0 + coeffs.rho_s * cfg.sigma2('s', 'd') / scale)
                       * (1.0 + coeffs.alpha[index] * rho_r * cfg.relay_sigma2('d', index) / scale))
    return check_probability(out_s + out_d - out_s * out_d, "asymptotic ST outage")


def asymptotic_residual_factor(s_prime, delta: float, sigma_interf: float,
                               lam_direct: float) -> np.ndarray:
    """
    (Omega' + Lambda') / (delta sigma_interf + lam_direct) for every entry of s_prime.

    Omega' = 1 / (s' + 1/(delta sigma_interf)) vanishes when s' is infinite.
    """
    s_prime = np.asarray(s_prime, dtype=float)
    if delta == 0.0:
        return np.ones_like(s_prime)
    interference = delta * sigma_interf
    with np.errstate(invalid='ignore'):
        omega = np.where(np.isinf(s_prime), 0.0,
                         interference / (np.where(np.isinf(s_prime), 0.0, s_prime) * interference + 1.0))
    return (omega + lam_direct) / (interference + lam_direct)


def asymptotic_expansion_terms(cfg: ScenarioConfig, coeffs: AsymptoticCoefficients,
                               relays) -> np.ndarray:
    """Signed limiting sub-subset terms over `relays`, entry 0 equal to 1."""
    relays = list(relays)
    th = cfg.thresholds
    bits = mask_bits(len(relays))
    rho_r = np.array([coeffs.rho_r[i] for i in relays], dtype=float)
    beta = np.array([coeffs.beta[i] for i in relays], dtype=float)
    alpha = np.array([coeffs.alpha[i] for i in relays], dtype=float)
    toward_s = beta * rho_r * np.array([cfg.relay_sigma2('s', i) for i in relays], dtype=float)
    toward_d = alpha * rho_r * np.array([cfg.relay_sigma2('d', i) for i in relays], dtype=float)
    with np.errstate(divide='ignore'):
        rate_s = np.where(toward_s > 0.0, 1.0 / np.where(toward_s > 0.0, toward_s, 1.0), np.inf)
        rate_d = np.where(toward_d > 0.0, 1.0 / np.where(toward_d > 0.0, toward_d, 1.0), np.inf)
    factor_x = asymptotic_residual_factor(subset_sums(bits, rate_s), th.delta_d,
                                          cfg.sigma2('u', 's'), coeffs.rho_d * cfg.sigma2('d', 's'))
    factor_y = asymptotic_residual_factor(subset_sums(bits, rate_d), th.delta_s,
                                          cfg.sigma2('u', 'd'), coeffs.rho_s * cfg.sigma2('s', 'd'))
    terms = popcount_signs(bits) * factor_x * factor_y
    terms[0] = 1.0
    return terms


def asymptotic_p_out_given_set(cfg: ScenarioConfig, mask: int,
                               coeffs: AsymptoticCoefficients) -> float:
    """Limit of the opportunistic conditional outage given D = D_S."""
    if mask <= 0 or mask >= (1 << cfg.num_relays):
        raise ValidationError(f"decoding-set mask {mask:#b} must be a non-empty subset")
    terms = asymptotic_expansion_terms(cfg, coeffs, mask_members(mask))
    return check_probability(math.fsum(terms), f"asymptotic P(out | D = {mask:#b})")


def asymptotic_total_outage(cfg: ScenarioConfig, allocation: str = "lemma",
                            selection: str = OPPORTUNISTIC,
                            coeffs: Optional[AsymptoticCoefficients] = None) -> OutageBreakdown:
    """
    Outage floor reached as gamma_u grows.

    Args:
        cfg: Scenario; its P_u and N0 do not affect the result
        allocation: 'lemma' or 'uniform', ignored when coeffs is given
        selection: 'opportunistic' or 'statistical'
        coeffs: Optional precomputed coefficients

    Returns:
        OutageBreakdown of the limiting outage
    """
    check_capacity(cfg.num_relays)
    if coeffs is None:
        coeffs = asymptotic_allocation_for_mode(cfg, allocation)
    if coeffs.num_relays != cfg.num_relays:
        raise ValidationError("coefficients must cover every relay of the scenario")

    outages = asymptotic_relay_outage_vector(cfg, coeffs.rho_s, coeffs.rho_d)
    p_sets = np.prod(np.where(mask_bits(cfg.num_relays), 1.0 - outages, outages), axis=1)
    p_out_empty = asymptotic_p_out_given_empty(cfg, coeffs.rho_s, coeffs.rho_d)
    masks = range(1, 1 << cfg.num_relays)

    if selection == OPPORTUNISTIC:
        terms = asymptotic_expansion_terms(cfg, coeffs, range(cfg.num_relays))
        p_outs = [math.fsum(terms[submasks(mask)]) for mask in masks]
    elif selection == STATISTICAL:
        values = [asymptotic_st_outage_given_relay(cfg, i, coeffs) for i in range(cfg.num_relays)]
        ranking = sorted(range(cfg.num_relays), key=lambda i: (values[i], i))
        p_outs = [values[statistical_choice(ranking, mask)] for mask in masks]
    else:
        raise ValidationError(f"unknown selection mode {selection!r}")
    return assemble_breakdown(p_sets, p_out_empty, p_outs, selection)
