"""
Oracle Service
Deterministic reference computations: quadrature of the outage integrals and grid searches
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from scipy import integrate

from ..config.settings import (
    ALPHA_GRID_POINTS,
    ALPHA_SEARCH_SWEEPS,
    MIN_GRID_RESOLUTION,
    PA_GRID_RESOLUTION,
    QUADRATURE_TOLERANCE,
    RELAY_QUADRATURE_TOLERANCE,
)
from ..models.errors import (
    DomainError,
    SecondaryForbidden,
    UndefinedPowerCapError,
    ValidationError,
)
from ..models.network import (
    PowerAllocation,
    ScenarioConfig,
    relay_power_cap,
    st_power_coefficients,
)
from .allocation_service import RatioTerms, ratio_objective
from .outage_service import (
    OPPORTUNISTIC,
    compute_g,
    mask_members,
    total_outage,
    total_outage_over_ratios,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerSearchResult:
    """Grid optimum of the total outage over the primary-constraint boundary."""
    p_s: float
    p_d: float
    p_r: Tuple[float, ...]
    alpha: Tuple[float, ...]
    outage: float
    resolution: int
    index: int = 0

    def allocation(self) -> PowerAllocation:
        return PowerAllocation(self.p_s, self.p_d, self.p_r, self.alpha,
                               tuple(1.0 - a for a in self.alpha), scheme="exhaustive")


# ============================================================================
# QUADRATURE
# ============================================================================

def _residual_density(delta: float, p: float, q: float):
    """PDF of X = delta + U - V, U ~ Exp(mean p), V ~ Exp(mean q)."""
    norm = p + q

    def pdf(x: float) -> float:
        if x >= delta:
            return math.exp((delta - x) / p) / norm
        return math.exp((x - delta) / q) / norm

    return pdf


def _delivery(x: float, rate: np.ndarray) -> np.ndarray:
    """P(relayed gain >= x+) per relay, rate being 1 / mean relayed SNR."""
    if x <= 0.0:
        return np.ones_like(rate)
    with np.errstate(invalid='ignore'):
        return np.where(np.isinf(rate), 0.0, np.exp(-x * np.where(np.isinf(rate), 0.0, rate)))


def conditional_outage_quadrature(cfg: ScenarioConfig, mask: int, alloc: PowerAllocation,
                                  tolerance: float = QUADRATURE_TOLERANCE) -> float:
    """
    Opportunistic P(out | D = D_S) by numerical integration over the residual SINRs.

    The plane is split at 0 and at each threshold so every piece has a smooth
    integrand; the piece where both residuals are negative contributes nothing.
    """
    if mask <= 0 or mask >= (1 << cfg.num_relays):
        raise DomainError(f"decoding-set mask {mask:#b} must be a non-empty subset")
    th = cfg.thresholds
    if th.delta_s <= 0.0 or th.delta_d <= 0.0 or alloc.p_s <= 0.0 or alloc.p_d <= 0.0:
        raise ValidationError("quadrature needs positive thresholds and ST powers")

    relays = mask_members(mask)
    gamma_r = np.array([alloc.p_r[i] for i in relays]) / cfg.n0
    toward_s = np.array([alloc.beta[i] * cfg.relay_sigma2('s', i) for i in relays]) * gamma_r
    toward_d = np.array([alloc.alpha[i] * cfg.relay_sigma2('d', i) for i in relays]) * gamma_r
    with np.errstate(divide='ignore'):
        rate_s = np.where(toward_s > 0, 1.0 / np.where(toward_s > 0, toward_s, 1.0), np.inf)
        rate_d = np.where(toward_d > 0, 1.0 / np.where(toward_d > 0, toward_d, 1.0), np.inf)

    pdf_x = _residual_density(th.delta_d, th.delta_d * cfg.gamma_u * cfg.sigma2('u', 's'),
                              (alloc.p_d / cfg.n0) * cfg.sigma2('d', 's'))
    pdf_y = _residual_density(th.delta_s, th.delta_s * cfg.gamma_u * cfg.sigma2('u', 'd'),
                              (alloc.p_s / cfg.n0) * cfg.sigma2('s', 'd'))

    def integrand(y: float, x: float) -> float:
        fail = 1.0 - _delivery(x, rate_s) * _delivery(y, rate_d)
        return float(np.prod(fail)) * pdf_x(x) * pdf_y(y)

    edges_x = (-np.inf, 0.0, th.delta_d, np.inf)
    edges_y = (-np.inf, 0.0, th.delta_s, np.inf)
    total = 0.0
    for i in range(3):
        for j in range(3):
            if i == 0 and j == 0:
                continue
            value, _ = integrate.dblquad(integrand, edges_x[i], edges_x[i + 1],
                                         edges_y[j], edges_y[j + 1],
                                         epsabs=tolerance * 1e-2, epsrel=tolerance * 1e-2)
            total += value
    return total


def relay_outage_quadrature(cfg: ScenarioConfig, index: int, p_s: float, p_d: float,
                            tolerance: float = RELAY_QUADRATURE_TOLERANCE) -> float:
    """
    Relay decoding outage by integrating over interference and the s -> r gain.

    z = gamma_u |h_ur|^2 + 1 and x = gamma_s |h_sr|^2; the d -> r gain is
    integrated in closed form.
    """
    if not 0 <= index < cfg.num_relays:
        raise ValidationError(f"relay index {index} out of range for M = {cfg.num_relays}")
    if p_s <= 0.0 or p_d <= 0.0:
        raise ValidationError("quadrature needs positive ST powers")
    th = cfg.thresholds
    lam_s = (p_s / cfg.n0) * cfg.relay_sigma2('s', index)
    lam_d = (p_d / cfg.n0) * cfg.relay_sigma2('d', index)
    mu = cfg.gamma_u * cfg.relay_sigma2('u', index)

    def weight(x: float, z: float) -> float:
        return math.exp(-x / lam_s) / lam_s * math.exp(-(z - 1.0) / mu) / mu

    pieces = (
        (lambda z: 0.0, lambda z: th.delta_s * z,
         lambda x, z: weight(x, z)),
        (lambda z: th.delta_s * z, lambda z: (th.delta - th.delta_d) * z,
         lambda x, z: -math.expm1(-(th.delta * z - x) / lam_d) * weight(x, z)),
        (lambda z: (th.delta - th.delta_d) * z, lambda z: np.inf,
         lambda x, z: -math.expm1(-th.delta_d * z / lam_d) * weight(x, z)),
    )
    total = 0.0
    for lower, upper, func in pieces:
        value, _ = integrate.dblquad(func, 1.0, np.inf, lower, upper,
                                     epsabs=tolerance, epsrel=tolerance)
        total += value
    return total


# ============================================================================
# GRID SEARCHES
# ============================================================================

def ratio_grid_search(terms: RatioTerms, points: int = ALPHA_GRID_POINTS) -> Tuple[float, float]:
    """
    Minimize the high-SNR ST outage over an even alpha grid.

    Returns:
        (alpha, objective value) at the first grid minimum
    """
    if points < 2:
        raise ValidationError("alpha grid needs at least 2 points")
    grid = np.linspace(0.0, 1.0, points)
    values = ratio_objective(terms, grid)
    best = int(np.argmin(values))
    return float(grid[best]), float(values[best])


def coordinate_ratio_search(cfg: ScenarioConfig, p_s: float, p_d: float, p_r,
                            selection: str = OPPORTUNISTIC,
                            points: int = ALPHA_GRID_POINTS) -> Tuple[Tuple[float, ...], float]:
    """
    Minimize the total outage over the forward ratios, one relay at a time.

    Every relay starts at alpha = 1/2; each pass moves one relay at a time to
    the best point of an even alpha grid while the others stay fixed. Passes
    repeat until no ratio moves or ALPHA_SEARCH_SWEEPS is reached.

    Returns:
        (alphas, total outage at those alphas)
    """
    if points < 2:
        raise ValidationError("alpha grid needs at least 2 points")
    grid = np.linspace(0.0, 1.0, points)
    alpha = np.full(cfg.num_relays, 0.5)
    for _ in range(ALPHA_SEARCH_SWEEPS):
        moved = False
        for i in range(cfg.num_relays):
            candidates = np.repeat(alpha[None, :], points, axis=0)
            candidates[:, i] = grid
            values = total_outage_over_ratios(cfg, p_s, p_d, p_r, candidates, selection)
            best = float(grid[int(np.argmin(values))])
            if best != alpha[i]:
                alpha[i] = best
                moved = True
        if not moved:
            break
    value = total_outage_over_ratios(cfg, p_s, p_d, p_r, alpha[None, :], selection)
    return tuple(float(a) for a in alpha), float(value[0])


def boundary_grid(a_coef: float, b_coef: float, g: float,
                  resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """(P_s, P_d) arrays along the primary-constraint boundary, from P_s = 0 to P_d = 0."""
    u = g ** np.linspace(0.0, 1.0, resolution)
    p_s = np.maximum((u - 1.0) / a_coef, 0.0)
    p_d = np.maximum((g / u - 1.0) / b_coef, 0.0)
    return p_s, p_d


def exhaustive_power_search(cfg: ScenarioConfig, resolution: int = PA_GRID_RESOLUTION,
                            selection: str = OPPORTUNISTIC,
                            alpha_points: int = ALPHA_GRID_POINTS) -> PowerSearchResult:
    """
    Grid optimum of the total outage over the primary-constraint boundary.

    The boundary is parameterized by u = g^t, t in [0, 1], with
    1 + A P_s = u and 1 + B P_d = g / u; relay powers sit at their caps and
    at every boundary point the forward ratios minimize the total outage
    (coordinate_ratio_search).

    Args:
        cfg: Scenario
        resolution: Boundary points (>= MIN_GRID_RESOLUTION)
        selection: Relay selection used by the objective
        alpha_points: Points of each alpha grid

    Returns:
        PowerSearchResult
    """
    if resolution < MIN_GRID_RESOLUTION:
        raise ValidationError(f"grid resolution must be >= {MIN_GRID_RESOLUTION}, got {resolution}")
    g = compute_g(cfg)
    if g <= 1.0:
        raise SecondaryForbidden(g)
    if cfg.thresholds.delta_u == 0.0:
        raise UndefinedPowerCapError()
    a_coef, b_coef = st_power_coefficients(cfg)
    p_r = tuple(relay_power_cap(cfg, i, g) for i in range(cfg.num_relays))

    best = None
    p_s_grid, p_d_grid = boundary_grid(a_coef, b_coef, g, resolution)
    for k, (p_s, p_d) in enumerate(zip(p_s_grid, p_d_grid)):
        p_s, p_d = float(p_s), float(p_d)
        alpha, outage = coordinate_ratio_search(cfg, p_s, p_d, p_r, selection, alpha_points)
        if best is None or outage < best.outage:
            best = PowerSearchResult(p_s, p_d, p_r, alpha, outage, resolution, k)
    # scalar closed form for the winner
    best = replace(best, outage=total_outage(cfg, best.allocation(), selection).p_total)
    logger.debug("Exhaustive optimum: P_s=%.6g P_d=%.6g outage=%.6g",
                 best.p_s, best.p_d, best.outage)
    return best
