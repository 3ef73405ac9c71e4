"""
Outage Service
Closed-form probabilities: primary QoS, relay decoding, ST outage given a relay,
decoding-set probabilities and the total secondary outage
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import (
    CASE_EPSILON,
    M_MAX,
    PARTITION_TOLERANCE,
    PROBABILITY_TOLERANCE,
    SINGULAR_EPSILON,
)
from ..models.errors import (
    CapacityError,
    DomainError,
    NumericalConsistencyError,
    ValidationError,
)
from ..models.network import (
    OutageBreakdown,
    PowerAllocation,
    ScenarioConfig,
    SubsetOutage,
    relay_label,
)

logger = logging.getLogger(__name__)

EQUAL_MEANS = "EqualMeans"
DISTINCT_MEANS = "DistinctMeans"
OPPORTUNISTIC = "opportunistic"
STATISTICAL = "statistical"


@dataclass(frozen=True)
class RelayOutageTerms:
    """Constants of the relay decoding-outage closed form (C is None for EqualMeans)."""
    case_tag: str
    T: float
    A: float
    B: float
    C: Optional[float]


@dataclass(frozen=True)
class SubsetTerms:
    """Omega, Xi, Lambda, Psi of one non-empty sub-subset D_C."""
    Omega: float
    Xi: float
    Lambda: float
    Psi: float
    E: int


# ============================================================================
# HELPERS
# ============================================================================

def check_probability(value: float, what: str = "probability") -> float:
    """
    Validate a computed probability.

    Values within PROBABILITY_TOLERANCE of [0, 1] are clamped; anything else
    raises so formula bugs surface instead of being hidden.
    """
    value = float(value)
    if not math.isfinite(value):
        raise NumericalConsistencyError(f"{what} is not finite ({value})")
    if value < 0.0:
        if value < -PROBABILITY_TOLERANCE:
            raise NumericalConsistencyError(f"{what} = {value!r} lies below 0")
        return 0.0
    if value > 1.0:
        if value > 1.0 + PROBABILITY_TOLERANCE:
            raise NumericalConsistencyError(f"{what} = {value!r} exceeds 1")
        return 1.0
    return value


def _check_powers(**powers: float) -> None:
    for name, value in powers.items():
        if not math.isfinite(value) or value < 0:
            raise ValidationError(f"{name} must be finite and >= 0, got {value}")


def _check_relay(cfg: ScenarioConfig, index: int) -> None:
    if not 0 <= index < cfg.num_relays:
        raise ValidationError(
            f"relay index {index} out of range for M = {cfg.num_relays}"
        )


def _check_mask(cfg: ScenarioConfig, mask: int) -> None:
    if mask < 0 or mask >= (1 << cfg.num_relays):
        raise ValidationError(
            f"decoding-set mask {mask:#b} is not a subset of the {cfg.num_relays} relays"
        )


def _check_alloc(cfg: ScenarioConfig, alloc: PowerAllocation) -> None:
    if alloc.num_relays != cfg.num_relays:
        raise ValidationError(
            f"allocation covers {alloc.num_relays} relays, scenario has {cfg.num_relays}"
        )


def _safe_reciprocal(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide='ignore'):
        return np.where(x > 0.0, 1.0 / np.where(x > 0.0, x, 1.0), np.inf)


def mask_members(mask: int) -> List[int]:
    """0-based relay indices contained in a bitmask."""
    return [i for i in range(mask.bit_length()) if (mask >> i) & 1]


def mask_bits(num_relays: int) -> np.ndarray:
    """Boolean membership matrix of shape (2^M, M), rows in ascending mask order."""
    masks = np.arange(1 << num_relays, dtype=np.int64)
    return ((masks[:, None] >> np.arange(num_relays, dtype=np.int64)) & 1).astype(bool)


def submasks(mask: int) -> np.ndarray:
    """Every submask of `mask` (empty set included) in ascending order."""
    members = mask_members(mask)
    local = np.arange(1 << len(members), dtype=np.int64)
    out = np.zeros_like(local)
    for j, bit in enumerate(members):
        out |= ((local >> j) & 1) << bit
    return out


def subset_sums(bits: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum of `weights` over every row of `bits`; +inf if any member weight is inf."""
    weights = np.asarray(weights, dtype=float)
    infinite = np.isinf(weights)
    members = bits.astype(float)
    sums = members @ np.where(infinite, 0.0, weights)
    hits = members @ infinite.astype(float)
    return np.where(hits > 0.0, np.inf, sums)


def popcount_signs(bits: np.ndarray) -> np.ndarray:
    """(-1)^E for every row, E being the number of members."""
    return np.where(bits.sum(axis=1) % 2 == 1, -1.0, 1.0)


# ============================================================================
# PRIMARY QOS
# ============================================================================

def compute_g(cfg: ScenarioConfig) -> float:
    """
    Power budget scalar of the primary constraint.

    Returns:
        max(exp(-delta_u/(gamma_u sigma2_uv)) / (1 - P_th), 1); g = 1 means
        secondary transmission is forbidden
    """
    if not 0.0 < cfg.p_th < 1.0:
        raise ValidationError(f"P_th must lie in (0, 1), got {cfg.p_th}")
    delta_u = cfg.thresholds.delta_u
    ratio = math.exp(-delta_u / (cfg.gamma_u * cfg.sigma2('u', 'v'))) / (1.0 - cfg.p_th)
    return max(ratio, 1.0)


def is_forbidden(g: float) -> bool:
    return g <= 1.0


def primary_outage_phase1(cfg: ScenarioConfig, p_s: float, p_d: float) -> float:
    """
    Primary outage probability while both STs transmit.

    Args:
        cfg: Scenario
        p_s: Transmit power of s (watts)
        p_d: Transmit power of d (watts)

    Returns:
        P(gamma_u|h_uv|^2 / (gamma_s|h_sv|^2 + gamma_d|h_dv|^2 + 1) < delta_u)
    """
    _check_powers(P_s=p_s, P_d=p_d)
    delta_u = cfg.thresholds.delta_u
    if delta_u == 0.0:
        return 0.0
    mean_uv = cfg.gamma_u * cfg.sigma2('u', 'v')
    x = delta_u * (p_s / cfg.n0) * cfg.sigma2('s', 'v') / mean_uv
    y = delta_u * (p_d / cfg.n0) * cfg.sigma2('d', 'v') / mean_uv
    value = -math.expm1(-delta_u / mean_uv - math.log1p(x) - math.log1p(y))
    return check_probability(value, "phase-1 primary outage")


def primary_outage_phase2(cfg: ScenarioConfig, index: int, p_r: float) -> float:
    """Primary outage probability while relay `index` forwards with power p_r."""
    _check_relay(cfg, index)
    _check_powers(P_r=p_r)
    delta_u = cfg.thresholds.delta_u
    if delta_u == 0.0:
        return 0.0
    mean_uv = cfg.gamma_u * cfg.sigma2('u', 'v')
    x = delta_u * p_r * cfg.relay_sigma2('v', index) / (cfg.p_u * cfg.sigma2('u', 'v'))
    value = -math.expm1(-delta_u / mean_uv - math.log1p(x))
    return check_probability(value, "phase-2 primary outage")


# ============================================================================
# RELAY DECODING OUTAGE
# ============================================================================

def _relay_means(cfg: ScenarioConfig, index: int, p_s: float, p_d: float):
    lam_s = (p_s / cfg.n0) * cfg.relay_sigma2('s', index)
    lam_d = (p_d / cfg.n0) * cfg.relay_sigma2('d', index)
    mu = cfg.gamma_u * cfg.relay_sigma2('u', index)
    return lam_s, lam_d, mu


def relay_outage_terms(cfg: ScenarioConfig, index: int, p_s: float, p_d: float) -> RelayOutageTerms:
    """
    Constants T, A, B, C for relay `index`.

    EqualMeans is chosen when the two mean received SNRs at the relay agree
    within CASE_EPSILON (relative).
    """
    _check_relay(cfg, index)
    _check_powers(P_s=p_s, P_d=p_d)
    lam_s, lam_d, mu = _relay_means(cfg, index, p_s, p_d)
    if lam_s <= 0.0 or lam_d <= 0.0:
        raise DomainError("relay outage constants need P_s > 0 and P_d > 0")
    th = cfg.thresholds
    T = 1.0 / (th.delta / lam_d + 1.0 / mu)
    A = (th.delta - th.delta_d) / lam_s + th.delta_d / lam_d
    B = th.delta_s / lam_s + (th.delta - th.delta_s) / lam_d
    if abs(lam_s - lam_d) <= CASE_EPSILON * max(lam_s, lam_d):
        return RelayOutageTerms(EQUAL_MEANS, T, A, B, None)
    return RelayOutageTerms(DISTINCT_MEANS, T, A, B, lam_s / (lam_s - lam_d))


def relay_outage_prob(cfg: ScenarioConfig, index: int, p_s: float, p_d: float) -> float:
    """
    Probability that relay `index` fails to decode both first-phase messages.

    Args:
        cfg: Scenario
        index: 0-based relay index
        p_s: Transmit power of s
        p_d: Transmit power of d

    Returns:
        P(O(r_i)) in [0, 1]
    """
    _check_relay(cfg, index)
    _check_powers(P_s=p_s, P_d=p_d)
    th = cfg.thresholds
    if (th.delta_s > 0.0 and p_s == 0.0) or (th.delta_d > 0.0 and p_d == 0.0):
        return 1.0
    if th.delta == 0.0:
        return 0.0
    lam_s, lam_d, mu = _relay_means(cfg, index, p_s, p_d)
    if lam_s == 0.0 or lam_d == 0.0:
        # One threshold is zero: only the other ST's link matters
        lam = lam_d if lam_s == 0.0 else lam_s
        t = th.delta / lam
        return check_probability(-math.expm1(-t - math.log1p(t * mu)), "relay outage")

    terms = relay_outage_terms(cfg, index, p_s, p_d)
    if terms.case_tag == EQUAL_MEANS:
        value = 1.0 - (terms.T / mu) * math.exp(-th.delta / lam_d) * (
            1.0 + th.delta_s * th.delta_d * (1.0 + terms.T) / lam_d
        )
    else:
        # 1 - f(B) + (delta_s delta_d / lam_d) (f(A) - f(B)) / (A - B),
        # f(t) = exp(-t)/(t mu + 1); identical to the C-weighted form
        A, B = terms.A, terms.B
        gap = A - B
        quotient = math.expm1(-gap) / gap if gap != 0.0 else -1.0
        slope = math.exp(-B) * (quotient * (B * mu + 1.0) - mu) / ((A * mu + 1.0) * (B * mu + 1.0))
        value = -math.expm1(-B - math.log1p(B * mu)) + th.delta_s * th.delta_d / lam_d * slope
    return check_probability(value, f"outage of relay {relay_label(index)}")


def relay_outage_vector(cfg: ScenarioConfig, p_s: float, p_d: float) -> np.ndarray:
    """P(O(r_i)) for every relay."""
    return np.array([relay_outage_prob(cfg, i, p_s, p_d) for i in range(cfg.num_relays)],
                    dtype=float)


# ============================================================================
# ST OUTAGE GIVEN A RELAY
# ============================================================================

def _st_side_outages(cfg: ScenarioConfig, p_s: float, p_d: float, relayed_s, relayed_d):
    """
    High-SNR outage at s and at d given the relayed powers toward each ST.

    relayed_s is beta * P_r * sigma2(r, s), relayed_d is alpha * P_r * sigma2(r, d);
    both may be arrays.
    """
    th = cfg.thresholds
    relayed_s = np.asarray(relayed_s, dtype=float)
    relayed_d = np.asarray(relayed_d, dtype=float)
    if th.delta_d == 0.0:
        out_s = np.zeros_like(relayed_s)
    else:
        scale = cfg.p_u * th.delta_d * cfg.sigma2('u', 's')
        out_s = 1.0 / ((1.0 + p_d * cfg.sigma2('d', 's') / scale) * (1.0 + relayed_s / scale))
    if th.delta_s == 0.0:
        out_d = np.zeros_like(relayed_d)
    else:
        scale = cfg.p_u * th.delta_s * cfg.sigma2('u', 'd')
        out_d = 1.0 / ((1.0 + p_s * cfg.sigma2('s', 'd') / scale) * (1.0 + relayed_d / scale))
    return out_s, out_d


def _high_snr_outages(cfg: ScenarioConfig, index: int, alloc: PowerAllocation) -> Tuple[float, float]:
    p_r = alloc.p_r[index]
    out_s, out_d = _st_side_outages(
        cfg, alloc.p_s, alloc.p_d,
        alloc.beta[index] * p_r * cfg.relay_sigma2('s', index),
        alloc.alpha[index] * p_r * cfg.relay_sigma2('d', index),
    )
    return float(out_s), float(out_d)


def st_outage_given_relay(cfg: ScenarioConfig, index: int, alloc: PowerAllocation) -> float:
    """
    High-SNR probability that at least one ST fails when relay `index` forwards.

    Returns:
        A + B - AB, A and B being the outage probabilities at s and d
    """
    _check_relay(cfg, index)
    _check_alloc(cfg, alloc)
    out_s, out_d = _high_snr_outages(cfg, index, alloc)
    return check_probability(out_s + out_d - out_s * out_d, "ST outage given relay")


def _laplace(delta: float, lam: np.ndarray, m: float) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        value = np.exp(-delta / lam) / (1.0 + m / lam)
    return np.where(lam > 0.0, value, 0.0)


def combined_success(delta: float, lam_direct, lam_relay, m: float) -> np.ndarray:
    """
    P(lam_direct E1 + lam_relay E2 >= delta + m W) for unit exponentials E1, E2, W.

    The left side is the MRC signal, the right side the threshold scaled by
    interference plus noise. Means broadcast against each other.
    """
    lam_d, lam_r = np.broadcast_arrays(np.asarray(lam_direct, dtype=float),
                                       np.asarray(lam_relay, dtype=float))
    if delta == 0.0:
        return np.ones(lam_d.shape)
    direct = _laplace(delta, lam_d, m)
    relay = _laplace(delta, lam_r, m)
    lam = 0.5 * (lam_d + lam_r)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        ratio = 1.0 + m / lam
        moment = np.exp(-delta / lam) * (delta / ratio + m / ratio ** 2)
        tied = _laplace(delta, lam, m) + moment / lam
        split = (lam_d * direct - lam_r * relay) / (lam_d - lam_r)
    close = np.abs(lam_d - lam_r) <= CASE_EPSILON * np.maximum(lam_d, lam_r)
    value = np.where(close, tied, split)
    value = np.where(lam_r == 0.0, direct, value)
    return np.where(lam_d == 0.0, relay, value)


def _st_exact_outages(cfg: ScenarioConfig, p_s: float, p_d: float, relayed_s, relayed_d):
    """Finite-noise counterpart of _st_side_outages, combined into one ST outage."""
    th = cfg.thresholds
    success_s = combined_success(
        th.delta_d,
        (p_d / cfg.n0) * cfg.sigma2('d', 's'),
        np.asarray(relayed_s, dtype=float) / cfg.n0,
        th.delta_d * cfg.gamma_u * cfg.sigma2('u', 's'),
    )
    success_d = combined_success(
        th.delta_s,
        (p_s / cfg.n0) * cfg.sigma2('s', 'd'),
        np.asarray(relayed_d, dtype=float) / cfg.n0,
        th.delta_s * cfg.gamma_u * cfg.sigma2('u', 'd'),
    )
    return 1.0 - success_s * success_d


def st_outage_given_relay_exact(cfg: ScenarioConfig, index: int, alloc: PowerAllocation) -> float:
    """
    Exact finite-noise probability that at least one ST fails when relay `index` forwards.

    Converges to st_outage_given_relay as N0/P_u -> 0.
    """
    _check_relay(cfg, index)
    _check_alloc(cfg, alloc)
    p_r = alloc.p_r[index]
    value = _st_exact_outages(
        cfg, alloc.p_s, alloc.p_d,
        alloc.beta[index] * p_r * cfg.relay_sigma2('s', index),
        alloc.alpha[index] * p_r * cfg.relay_sigma2('d', index),
    )
    return check_probability(float(value), "exact ST outage given relay")


def st_selection_ranking(cfg: ScenarioConfig, alloc: PowerAllocation) -> List[int]:
    """Relays ordered by their high-SNR ST outage, ties to the lower index."""
    values = [st_outage_given_relay(cfg, i, alloc) for i in range(cfg.num_relays)]
    return sorted(range(cfg.num_relays), key=lambda i: (values[i], i))


def statistical_choice(ranking: Sequence[int], mask: int) -> int:
    """First relay of `ranking` that belongs to `mask`."""
    for i in ranking:
        if (mask >> i) & 1:
            return i
    raise DomainError("statistical selection needs a non-empty decoding set")


# ============================================================================
# DECODING SETS
# ============================================================================

def p_empty_set(cfg: ScenarioConfig, p_s: float, p_d: float) -> float:
    """Probability that no relay decodes (1 when M = 0)."""
    return check_probability(float(np.prod(relay_outage_vector(cfg, p_s, p_d))),
                             "P(D = empty)")


def p_out_given_empty(cfg: ScenarioConfig, p_s: float, p_d: float) -> float:
    """
    Secondary outage when the STs repeat their transmission over the direct link.

    Both copies are MRC-combined, doubling the direct-link SNR.
    """
    _check_powers(P_s=p_s, P_d=p_d)
    th = cfg.thresholds
    log_success = 0.0
    for delta, power, sigma_direct, sigma_interf in (
        (th.delta_d, p_d, cfg.sigma2('d', 's'), cfg.sigma2('u', 's')),
        (th.delta_s, p_s, cfg.sigma2('s', 'd'), cfg.sigma2('u', 'd')),
    ):
        if delta == 0.0:
            continue
        doubled = 2.0 * (power / cfg.n0) * sigma_direct
        if doubled == 0.0:
            return 1.0
        log_success += -delta / doubled - math.log1p(delta * cfg.gamma_u * sigma_interf / doubled)
    return check_probability(-math.expm1(log_success), "P(out | D = empty)")


def p_decoding_set(cfg: ScenarioConfig, mask: int, p_s: float, p_d: float) -> float:
    """Probability that exactly the relays in `mask` decode."""
    _check_mask(cfg, mask)
    outages = relay_outage_vector(cfg, p_s, p_d)
    members = np.array([(mask >> i) & 1 for i in range(cfg.num_relays)], dtype=bool)
    return check_probability(float(np.prod(np.where(members, 1.0 - outages, outages))),
                             f"P(D = {mask:#b})")


def decoding_set_probabilities(cfg: ScenarioConfig, p_s: float, p_d: float) -> np.ndarray:
    """P(D = D_S) for every mask in ascending order (index 0 is the empty set)."""
    outages = relay_outage_vector(cfg, p_s, p_d)
    bits = mask_bits(cfg.num_relays)
    return np.prod(np.where(bits, 1.0 - outages, outages), axis=1)


# ============================================================================
# SUBSET EXPANSION
# ============================================================================

def residual_terms(s, delta: float, p: float, q: float):
    """
    Omega-like and Lambda-like terms for X = U - V + delta.

    U ~ Exp(mean p) is the scaled interference, V ~ Exp(mean q) the direct
    link; E[exp(-s max(X, 0))] = (omega + lam) / (p + q).

    Args:
        s: Sum of reciprocal relayed means over D_C (array, may hold inf)
        delta: Threshold at the receiving ST
        p: delta * gamma_u * sigma2 of the interference link
        q: Mean direct-link SNR

    Returns:
        (omega, lam)
    """
    s = np.asarray(s, dtype=float)
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        tail = p * np.exp(-s * delta) / (s * p + 1.0)
        tail = np.where(np.isinf(s), 0.0, tail)
        if q == 0.0:
            return tail, np.zeros_like(s)
        inv_q = 1.0 / q
        gap = np.abs(s - inv_q)
        low = np.minimum(s, inv_q)
        singular = np.isfinite(s) & (gap <= SINGULAR_EPSILON * np.maximum(s, inv_q))
        quotient = np.where(singular, delta, -np.expm1(-gap * delta) / np.where(gap > 0, gap, 1.0))
        quotient = np.where(np.isinf(s), 0.0, quotient)
        head = np.exp(-low * delta) * quotient
    if np.any(singular):
        logger.debug("Subset expansion hit the removable singularity at s = 1/q = %g", inv_q)
    return head + tail, np.full_like(s, q * math.exp(-delta / q))


def residual_factor(s, delta: float, p: float, q: float) -> np.ndarray:
    """E[exp(-s max(X, 0))] for the residual variable X of one receiving ST."""
    s = np.asarray(s, dtype=float)
    if delta == 0.0 or p + q == 0.0:
        return np.ones_like(s)
    omega, lam = residual_terms(s, delta, p, q)
    return (omega + lam) / (p + q)


def _side_parameters(cfg: ScenarioConfig, p_s: float, p_d: float):
    th = cfg.thresholds
    side_s = (th.delta_d, th.delta_d * cfg.gamma_u * cfg.sigma2('u', 's'),
              (p_d / cfg.n0) * cfg.sigma2('d', 's'))
    side_d = (th.delta_s, th.delta_s * cfg.gamma_u * cfg.sigma2('u', 'd'),
              (p_s / cfg.n0) * cfg.sigma2('s', 'd'))
    return side_s, side_d


def _relayed_rates(cfg: ScenarioConfig, alloc: PowerAllocation, relays: Sequence[int]):
    """Reciprocal relayed means toward s and toward d for the given relays."""
    gamma_r = np.array([alloc.p_r[i] for i in relays], dtype=float) / cfg.n0
    beta = np.array([alloc.beta[i] for i in relays], dtype=float)
    alpha = np.array([alloc.alpha[i] for i in relays], dtype=float)
    sigma_rs = np.array([cfg.relay_sigma2('s', i) for i in relays], dtype=float)
    sigma_rd = np.array([cfg.relay_sigma2('d', i) for i in relays], dtype=float)
    return _safe_reciprocal(beta * gamma_r * sigma_rs), _safe_reciprocal(alpha * gamma_r * sigma_rd)


def expansion_terms(cfg: ScenarioConfig, alloc: PowerAllocation,
                    relays: Sequence[int]) -> np.ndarray:
    """
    Signed inclusion-exclusion terms for every sub-subset of `relays`.

    Entry k (local mask k over `relays`) is (-1)^E E[exp(-S_X X+)] E[exp(-S_Y Y+)];
    entry 0 is 1, so P(out | D_S) is the sum over all submasks of D_S.
    """
    bits = mask_bits(len(relays))
    rate_s, rate_d = _relayed_rates(cfg, alloc, relays)
    (delta_x, p_x, q_x), (delta_y, p_y, q_y) = _side_parameters(cfg, alloc.p_s, alloc.p_d)
    factor_x = residual_factor(subset_sums(bits, rate_s), delta_x, p_x, q_x)
    factor_y = residual_factor(subset_sums(bits, rate_d), delta_y, p_y, q_y)
    terms = popcount_signs(bits) * factor_x * factor_y
    terms[0] = 1.0
    return terms


def subset_terms(cfg: ScenarioConfig, mask_c: int, alloc: PowerAllocation) -> SubsetTerms:
    """Omega, Xi, Lambda, Psi for a non-empty sub-subset D_C."""
    _check_alloc(cfg, alloc)
    _check_mask(cfg, mask_c)
    if mask_c == 0:
        raise DomainError("sub-subset D_C must be non-empty")
    relays = mask_members(mask_c)
    rate_s, rate_d = _relayed_rates(cfg, alloc, relays)
    (delta_x, p_x, q_x), (delta_y, p_y, q_y) = _side_parameters(cfg, alloc.p_s, alloc.p_d)
    s_x = subset_sums(np.ones((1, len(relays)), dtype=bool), rate_s)
    s_y = subset_sums(np.ones((1, len(relays)), dtype=bool), rate_d)
    omega, lam = residual_terms(s_x, delta_x, p_x, q_x)
    xi, psi = residual_terms(s_y, delta_y, p_y, q_y)
    return SubsetTerms(float(omega[0]), float(xi[0]), float(lam[0]), float(psi[0]), len(relays))


def p_out_given_set(cfg: ScenarioConfig, mask: int, alloc: PowerAllocation) -> float:
    """
    Secondary outage given D = D_S under opportunistic relay choice.

    Outage occurs only if every relay of D_S fails at least one forward link.
    """
    _check_alloc(cfg, alloc)
    _check_mask(cfg, mask)
    if mask == 0:
        raise DomainError("D_S is empty; use p_out_given_empty")
    terms = expansion_terms(cfg, alloc, mask_members(mask))
    return check_probability(math.fsum(terms), f"P(out | D = {mask:#b})")


def p_out_given_set_statistical(cfg: ScenarioConfig, mask: int, alloc: PowerAllocation) -> float:
    """Secondary outage given D = D_S when the statistically best relay forwards."""
    _check_alloc(cfg, alloc)
    _check_mask(cfg, mask)
    if mask == 0:
        raise DomainError("D_S is empty; use p_out_given_empty")
    chosen = statistical_choice(st_selection_ranking(cfg, alloc), mask)
    return st_outage_given_relay_exact(cfg, chosen, alloc)


# ============================================================================
# TOTAL OUTAGE
# ============================================================================

def assemble_breakdown(p_sets: np.ndarray, p_out_empty: float, p_outs: Sequence[float],
                       selection: str) -> OutageBreakdown:
    """
    Combine decode-set probabilities and conditional outages.

    Args:
        p_sets: P(D = D_S) for every mask in ascending order, index 0 = empty set
        p_out_empty: P(out | D = empty)
        p_outs: P(out | D = D_S) for masks 1 .. 2^M - 1
        selection: Relay selection label carried into the breakdown
    """
    p_empty = check_probability(p_sets[0], "P(D = empty)")
    per_subset = tuple(
        SubsetOutage(mask, check_probability(p_sets[mask], f"P(D = {mask:#b})"),
                     check_probability(p_out, f"P(out | D = {mask:#b})"))
        for mask, p_out in enumerate(p_outs, start=1)
    )
    partition = math.fsum(p_sets)
    if abs(partition - 1.0) > PARTITION_TOLERANCE:
        raise NumericalConsistencyError(
            f"decoding-set probabilities sum to {partition!r}, not 1"
        )
    total = math.fsum([p_empty * p_out_empty] + [s.p_set * s.p_out for s in per_subset])
    return OutageBreakdown(p_empty, p_out_empty, per_subset,
                           check_probability(total, "total secondary outage"), selection)


def check_capacity(num_relays: int) -> None:
    if num_relays > M_MAX:
        raise CapacityError(num_relays, M_MAX)


def total_outage(cfg: ScenarioConfig, alloc: PowerAllocation,
                 selection: str = OPPORTUNISTIC) -> OutageBreakdown:
    """
    Total secondary outage probability with its per-decoding-set breakdown.

    Args:
        cfg: Scenario
        alloc: Power allocation covering every relay
        selection: 'opportunistic' (per-realization choice inside D_S) or
            'statistical' (the relay with the lowest high-SNR ST outage)

    Returns:
        OutageBreakdown
    """
    check_capacity(cfg.num_relays)
    _check_alloc(cfg, alloc)
    p_sets = decoding_set_probabilities(cfg, alloc.p_s, alloc.p_d)
    p_out_empty = p_out_given_empty(cfg, alloc.p_s, alloc.p_d)
    masks = range(1, 1 << cfg.num_relays)

    if selection == OPPORTUNISTIC:
        terms = expansion_terms(cfg, alloc, range(cfg.num_relays))
        p_outs = [math.fsum(terms[submasks(mask)]) for mask in masks]
    elif selection == STATISTICAL:
        ranking = st_selection_ranking(cfg, alloc)
        exact = [st_outage_given_relay_exact(cfg, i, alloc) for i in range(cfg.num_relays)]
        p_outs = [exact[statistical_choice(ranking, mask)] for mask in masks]
    else:
        raise ValidationError(f"unknown selection mode {selection!r}")

    breakdown = assemble_breakdown(p_sets, p_out_empty, p_outs, selection)
    logger.debug("Total outage (%s, M=%d): %.6g", selection, cfg.num_relays, breakdown.p_total)
    return breakdown


def total_outage_over_ratios(cfg: ScenarioConfig, p_s: float, p_d: float, p_r: Sequence[float],
                             alphas, selection: str = OPPORTUNISTIC) -> np.ndarray:
    """
    Total secondary outage for many forward-ratio vectors at fixed powers.

    Row k of `alphas` gives alpha_i of every relay; beta_i = 1 - alpha_i.
    Entry k of the result equals total_outage(...).p_total for that row, so
    ratio grids can be scored without building an allocation per candidate.

    Args:
        cfg: Scenario
        p_s: Power of s
        p_d: Power of d
        p_r: Relay powers, one per relay
        alphas: Array of shape (n, M) with entries in [0, 1]
        selection: 'opportunistic' or 'statistical'

    Returns:
        Array of shape (n,)
    """
    check_capacity(cfg.num_relays)
    _check_powers(P_s=p_s, P_d=p_d)
    m = cfg.num_relays
    p_r = np.asarray(p_r, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if p_r.shape != (m,) or np.any(p_r < 0.0):
        raise ValidationError(f"expected {m} non-negative relay powers, got {p_r.tolist()}")
    if alphas.ndim != 2 or alphas.shape[1] != m:
        raise ValidationError(f"ratio rows must have shape (n, {m}), got {alphas.shape}")
    if np.any((alphas < 0.0) | (alphas > 1.0)):
        raise ValidationError("forward ratios must lie in [0, 1]")

    p_sets = decoding_set_probabilities(cfg, p_s, p_d)
    base = p_sets[0] * p_out_given_empty(cfg, p_s, p_d)
    if m == 0:
        return np.full(alphas.shape[0], base)

    sigma_rs = np.array([cfg.relay_sigma2('s', i) for i in range(m)])
    sigma_rd = np.array([cfg.relay_sigma2('d', i) for i in range(m)])
    relayed_s = (1.0 - alphas) * p_r * sigma_rs
    relayed_d = alphas * p_r * sigma_rd
    bits = mask_bits(m)

    if selection == OPPORTUNISTIC:
        (delta_x, p_x, q_x), (delta_y, p_y, q_y) = _side_parameters(cfg, p_s, p_d)
        rate_s = _safe_reciprocal(relayed_s / cfg.n0)
        rate_d = _safe_reciprocal(relayed_d / cfg.n0)
        sums_x = np.where(bits, rate_s[:, None, :], 0.0).sum(axis=2)
        sums_y = np.where(bits, rate_d[:, None, :], 0.0).sum(axis=2)
        terms = (popcount_signs(bits)
                 * residual_factor(sums_x, delta_x, p_x, q_x)
                 * residual_factor(sums_y, delta_y, p_y, q_y))
        terms[:, 0] = 1.0
        # P(out | D_S) sums the terms of every submask, so term c is weighted
        # by the probability of every non-empty decoding set containing c
        masks = np.arange(1 << m)
        contains = (masks[:, None] & masks[None, :]) == masks[None, :]
        weights = p_sets[1:] @ contains[1:].astype(float)
        return base + terms @ weights

    if selection == STATISTICAL:
        out_s, out_d = _st_side_outages(cfg, p_s, p_d, relayed_s, relayed_d)
        ranking = np.argsort(out_s + out_d - out_s * out_d, axis=1, kind='stable')
        position = np.argsort(ranking, axis=1)
        exact = np.clip(_st_exact_outages(cfg, p_s, p_d, relayed_s, relayed_d), 0.0, 1.0)
        chosen = np.where(bits[1:], position[:, None, :], m).argmin(axis=2)
        return base + np.take_along_axis(exact, chosen, axis=1) @ p_sets[1:]

    raise ValidationError(f"unknown selection mode {selection!r}")
