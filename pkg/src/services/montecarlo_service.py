"""
Monte Carlo Service
Event-level simulation of the two-phase protocol over Rayleigh block fading

Trials run in blocks of MC_BLOCK_SIZE; block b draws from a Philox stream
keyed by the seed with its counter starting at block b, so results do not
depend on how many workers evaluate the blocks.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from numpy.random import Generator, Philox

from ..config.settings import (
    DEFAULT_SEED,
    MC_BLOCK_SIZE,
    MIN_CONDITIONING_COUNT,
    MIN_TRIALS,
    SELECTION_MODES,
)
from ..models.errors import InsufficientConditioning, ValidationError
from ..models.network import PowerAllocation, ScenarioConfig, relay_label
from .outage_service import OPPORTUNISTIC, STATISTICAL, st_selection_ranking

logger = logging.getLogger(__name__)

INDEPENDENT = "independent"
RECIPROCAL = "reciprocal"
DRAW_MODES = (INDEPENDENT, RECIPROCAL)

SECONDARY_OUTAGE = "SecondaryOutage"
PRIMARY_P1 = "PrimaryP1"
PRIMARY_P2 = "PrimaryP2"
RELAY_OUTAGE = "RelayOutage"
DECODE_SET = "DecodeSet"
OUT_GIVEN_SET = "OutGivenSet"
DIRECT_OUTAGE = "DirectOutage"
ST_OUTAGE = "StOutage"


# ============================================================================
# CHANNEL DRAWS
# ============================================================================

@dataclass(frozen=True)
class ChannelDraw:
    """
    Realized channel gains |h|^2 for a block of trials.

    Names give the hop, transmitter first: `ds` is the d -> s direct link
    received at s, `rs` the relay -> s downlink. Per-trial arrays have shape
    (n,), per-relay arrays (n, M). Interference gains (uv, us, ud, ur, sv, dv,
    rv) are shared by both phases.
    """

    uv: np.ndarray
    sv: np.ndarray
    dv: np.ndarray
    us: np.ndarray
    ud: np.ndarray
    ds: np.ndarray
    sd: np.ndarray
    sr: np.ndarray
    dr: np.ndarray
    ur: np.ndarray
    rv: np.ndarray
    rs: np.ndarray
    rd: np.ndarray

    @property
    def trials(self) -> int:
        return int(self.uv.shape[0])


def block_rng(seed: int, block: int) -> Generator:
    """Generator for block `block` of the stream keyed by `seed`."""
    if seed < 0 or seed >= 2 ** 64:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return Generator(Philox(key=int(seed), counter=[0, 0, int(block), 0]))


def draw_channels(cfg: ScenarioConfig, n: int, rng: Generator,
                  draw_mode: str = INDEPENDENT) -> ChannelDraw:
    """
    Draw exponential channel gains with the scenario's means.

    Args:
        cfg: Scenario
        n: Number of trials
        rng: Random generator
        draw_mode: 'independent' (each hop direction its own gain) or
            'reciprocal' (one gain per unordered pair)

    Returns:
        ChannelDraw
    """
    if draw_mode not in DRAW_MODES:
        raise ValidationError(f"unknown draw mode {draw_mode!r}; expected one of {DRAW_MODES}")
    m = cfg.num_relays

    def static(a: str, b: str) -> np.ndarray:
        return cfg.sigma2(a, b) * rng.standard_exponential(n)

    def relay(peer: str) -> np.ndarray:
        means = np.array([cfg.relay_sigma2(peer, i) for i in range(m)], dtype=float)
        return rng.standard_exponential((n, m)) * means[None, :]

    uv, sv, dv = static('u', 'v'), static('s', 'v'), static('d', 'v')
    us, ud = static('u', 's'), static('u', 'd')
    ds = static('d', 's')
    sr, dr, ur, rv = relay('s'), relay('d'), relay('u'), relay('v')
    if draw_mode == RECIPROCAL:
        sd, rs, rd = ds, sr, dr
    else:
        sd, rs, rd = static('s', 'd'), relay('s'), relay('d')
    return ChannelDraw(uv, sv, dv, us, ud, ds, sd, sr, dr, ur, rv, rs, rd)


# ============================================================================
# EVENTS
# ============================================================================

@dataclass(frozen=True)
class TrialEvents:
    """Outcome arrays of a block of trials (one row per trial)."""

    decode_mask: np.ndarray
    relay_fail: np.ndarray
    direct_outage: np.ndarray
    st_fail: np.ndarray
    outage_opportunistic: np.ndarray
    outage_statistical: np.ndarray
    primary_p1: np.ndarray
    primary_p2_opportunistic: np.ndarray
    primary_p2_statistical: np.ndarray

    def secondary(self, mode: str) -> np.ndarray:
        return self.outage_opportunistic if mode == OPPORTUNISTIC else self.outage_statistical

    def primary_p2(self, mode: str) -> np.ndarray:
        return self.primary_p2_opportunistic if mode == OPPORTUNISTIC else self.primary_p2_statistical


def evaluate_events(cfg: ScenarioConfig, alloc: PowerAllocation, draw: ChannelDraw,
                    ranking: Sequence[int]) -> TrialEvents:
    """
    Apply the protocol's outage events to every trial of a draw.

    Args:
        cfg: Scenario
        alloc: Powers and ratios
        draw: Channel realizations
        ranking: Relays ordered by statistical preference

    Returns:
        TrialEvents for both selection modes
    """
    th = cfg.thresholds
    n, m = draw.trials, cfg.num_relays
    gamma_u = cfg.gamma_u
    gamma_s, gamma_d = alloc.p_s / cfg.n0, alloc.p_d / cfg.n0
    gamma_r = np.asarray(alloc.p_r, dtype=float) / cfg.n0
    alpha = np.asarray(alloc.alpha, dtype=float)
    beta = np.asarray(alloc.beta, dtype=float)

    # Phase 1: relay decoding (multiple access with primary interference)
    noise_r = gamma_u * draw.ur + 1.0
    snr_s = gamma_s * draw.sr / noise_r
    snr_d = gamma_d * draw.dr / noise_r
    relay_fail = (snr_s + snr_d < th.delta) | (snr_s < th.delta_s) | (snr_d < th.delta_d)
    decoded = ~relay_fail
    decode_mask = decoded.astype(np.int64) @ (np.int64(1) << np.arange(m, dtype=np.int64))

    # Phase 2 at the STs
    noise_s = gamma_u * draw.us + 1.0
    noise_d = gamma_u * draw.ud + 1.0
    direct_outage = ((2.0 * gamma_d * draw.ds / noise_s < th.delta_d)
                     | (2.0 * gamma_s * draw.sd / noise_d < th.delta_s))
    sinr_at_s = ((gamma_d * draw.ds)[:, None] + beta * gamma_r * draw.rs) / noise_s[:, None]
    sinr_at_d = ((gamma_s * draw.sd)[:, None] + alpha * gamma_r * draw.rd) / noise_d[:, None]
    st_fail = (sinr_at_s < th.delta_d) | (sinr_at_d < th.delta_s)

    primary_p1 = gamma_u * draw.uv / (gamma_s * draw.sv + gamma_d * draw.dv + 1.0) < th.delta_u

    if m == 0:
        return TrialEvents(decode_mask, relay_fail, direct_outage, st_fail,
                           direct_outage, direct_outage, primary_p1, primary_p1, primary_p1)

    rows = np.arange(n)
    any_decoded = decoded.any(axis=1)
    ranking = np.asarray(ranking, dtype=np.int64)
    chosen_stat = ranking[np.argmax(decoded[:, ranking], axis=1)]
    outage_stat = np.where(any_decoded, st_fail[rows, chosen_stat], direct_outage)

    delivers = decoded & ~st_fail
    any_delivers = delivers.any(axis=1)
    outage_opp = np.where(any_decoded, ~any_delivers, direct_outage)
    chosen_opp = np.where(any_delivers, np.argmax(delivers, axis=1), chosen_stat)

    def relay_primary(chosen: np.ndarray) -> np.ndarray:
        interference = gamma_r[chosen] * draw.rv[rows, chosen] + 1.0
        return np.where(any_decoded, gamma_u * draw.uv / interference < th.delta_u, primary_p1)

    return TrialEvents(decode_mask, relay_fail, direct_outage, st_fail,
                       outage_opp, outage_stat, primary_p1,
                       relay_primary(chosen_opp), relay_primary(chosen_stat))


def simulate_trial(cfg: ScenarioConfig, alloc: PowerAllocation, draw: ChannelDraw,
                   mode: str = OPPORTUNISTIC,
                   ranking: Optional[Sequence[int]] = None) -> Tuple[bool, bool, bool, int]:
    """
    Outcome of the first trial in `draw`.

    Returns:
        (secondary_outage, primary_outage_phase1, primary_outage_phase2, decode_mask)
    """
    _check_mode(mode)
    if ranking is None:
        ranking = st_selection_ranking(cfg, alloc)
    events = evaluate_events(cfg, alloc, draw, ranking)
    return (bool(events.secondary(mode)[0]), bool(events.primary_p1[0]),
            bool(events.primary_p2(mode)[0]), int(events.decode_mask[0]))


# ============================================================================
# COUNTS
# ============================================================================

@dataclass
class McCounts:
    """Event counts accumulated over trials; blocks merge with `+`."""

    num_relays: int
    trials: int = 0
    outage_opportunistic: int = 0
    outage_statistical: int = 0
    primary_p1: int = 0
    primary_p2_opportunistic: int = 0
    primary_p2_statistical: int = 0
    direct_outage: int = 0
    relay_outage: np.ndarray = field(default=None)
    st_outage: np.ndarray = field(default=None)
    decode_counts: np.ndarray = field(default=None)
    out_given_set_opportunistic: np.ndarray = field(default=None)
    out_given_set_statistical: np.ndarray = field(default=None)

    def __post_init__(self):
        size = 1 << self.num_relays
        for name, length in (('relay_outage', self.num_relays), ('st_outage', self.num_relays),
                             ('decode_counts', size), ('out_given_set_opportunistic', size),
                             ('out_given_set_statistical', size)):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(length, dtype=np.int64))

    @classmethod
    def from_events(cls, events: TrialEvents, num_relays: int) -> "McCounts":
        size = 1 << num_relays
        mask = events.decode_mask
        return cls(
            num_relays=num_relays,
            trials=int(mask.shape[0]),
            outage_opportunistic=int(events.outage_opportunistic.sum()),
            outage_statistical=int(events.outage_statistical.sum()),
            primary_p1=int(events.primary_p1.sum()),
            primary_p2_opportunistic=int(events.primary_p2_opportunistic.sum()),
            primary_p2_statistical=int(events.primary_p2_statistical.sum()),
            direct_outage=int(events.direct_outage.sum()),
            relay_outage=events.relay_fail.sum(axis=0).astype(np.int64),
            st_outage=events.st_fail.sum(axis=0).astype(np.int64),
            decode_counts=np.bincount(mask, minlength=size).astype(np.int64),
            out_given_set_opportunistic=np.bincount(
                mask[events.outage_opportunistic], minlength=size).astype(np.int64),
            out_given_set_statistical=np.bincount(
                mask[events.outage_statistical], minlength=size).astype(np.int64),
        )

    def __add__(self, other: "McCounts") -> "McCounts":
        if other.num_relays != self.num_relays:
            raise ValidationError("cannot merge counts over different relay counts")
        return McCounts(
            num_relays=self.num_relays,
            trials=self.trials + other.trials,
            outage_opportunistic=self.outage_opportunistic + other.outage_opportunistic,
            outage_statistical=self.outage_statistical + other.outage_statistical,
            primary_p1=self.primary_p1 + other.primary_p1,
            primary_p2_opportunistic=self.primary_p2_opportunistic + other.primary_p2_opportunistic,
            primary_p2_statistical=self.primary_p2_statistical + other.primary_p2_statistical,
            direct_outage=self.direct_outage + other.direct_outage,
            relay_outage=self.relay_outage + other.relay_outage,
            st_outage=self.st_outage + other.st_outage,
            decode_counts=self.decode_counts + other.decode_counts,
            out_given_set_opportunistic=self.out_given_set_opportunistic + other.out_given_set_opportunistic,
            out_given_set_statistical=self.out_given_set_statistical + other.out_given_set_statistical,
        )

    def secondary(self, mode: str) -> int:
        return self.outage_opportunistic if mode == OPPORTUNISTIC else self.outage_statistical

    def primary_p2(self, mode: str) -> int:
        return self.primary_p2_opportunistic if mode == OPPORTUNISTIC else self.primary_p2_statistical

    def out_given_set(self, mode: str) -> np.ndarray:
        if mode == OPPORTUNISTIC:
            return self.out_given_set_opportunistic
        return self.out_given_set_statistical


def _check_mode(mode: str) -> None:
    if mode not in SELECTION_MODES:
        raise ValidationError(f"unknown selection mode {mode!r}; expected one of {SELECTION_MODES}")


def _simulate_block(cfg: ScenarioConfig, alloc: PowerAllocation, seed: int, block: int,
                    size: int, ranking: Sequence[int], draw_mode: str) -> McCounts:
    draw = draw_channels(cfg, size, block_rng(seed, block), draw_mode)
    return McCounts.from_events(evaluate_events(cfg, alloc, draw, ranking), cfg.num_relays)


def simulate_counts(cfg: ScenarioConfig, alloc: PowerAllocation, n_trials: int,
                    seed: int = DEFAULT_SEED, draw_mode: str = INDEPENDENT,
                    n_jobs: int = 1) -> McCounts:
    """
    Run `n_trials` trials and count every tracked event.

    Args:
        cfg: Scenario
        alloc: Powers and ratios covering every relay
        n_trials: Number of trials
        seed: 64-bit seed of the counter-based stream
        draw_mode: 'independent' or 'reciprocal'
        n_jobs: joblib workers (threads); the counts do not depend on it

    Returns:
        McCounts
    """
    if n_trials < 1:
        raise ValidationError(f"trial count must be positive, got {n_trials}")
    if alloc.num_relays != cfg.num_relays:
        raise ValidationError(
            f"allocation covers {alloc.num_relays} relays, scenario has {cfg.num_relays}"
        )
    ranking = st_selection_ranking(cfg, alloc)
    blocks = [(b, min(MC_BLOCK_SIZE, n_trials - b * MC_BLOCK_SIZE))
              for b in range(math.ceil(n_trials / MC_BLOCK_SIZE))]
    logger.info("Simulating %d trials of %s in %d blocks", n_trials, cfg.name, len(blocks))
    parts = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_simulate_block)(cfg, alloc, seed, b, size, ranking, draw_mode)
        for b, size in blocks
    )
    return reduce(lambda acc, part: acc + part, parts, McCounts(cfg.num_relays))


# ============================================================================
# ESTIMATES
# ============================================================================

@dataclass(frozen=True)
class McTarget:
    """Event whose probability is estimated; `index` is a relay index or a mask."""

    kind: str
    index: Optional[int] = None

    @classmethod
    def secondary_outage(cls) -> "McTarget":
        return cls(SECONDARY_OUTAGE)

    @classmethod
    def primary_p1(cls) -> "McTarget":
        return cls(PRIMARY_P1)

    @classmethod
    def primary_p2(cls) -> "McTarget":
        return cls(PRIMARY_P2)

    @classmethod
    def relay_outage(cls, index: int) -> "McTarget":
        return cls(RELAY_OUTAGE, index)

    @classmethod
    def decode_set(cls, mask: int) -> "McTarget":
        return cls(DECODE_SET, mask)

    @classmethod
    def out_given_set(cls, mask: int) -> "McTarget":
        return cls(OUT_GIVEN_SET, mask)

    @classmethod
    def direct_outage(cls) -> "McTarget":
        return cls(DIRECT_OUTAGE)

    @classmethod
    def st_outage(cls, index: int) -> "McTarget":
        return cls(ST_OUTAGE, index)

    @property
    def label(self) -> str:
        if self.kind in (RELAY_OUTAGE, ST_OUTAGE):
            return f"{self.kind}({relay_label(self.index)})"
        if self.kind in (DECODE_SET, OUT_GIVEN_SET):
            return f"{self.kind}({self.index:#b})"
        return self.kind


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate with its binomial standard error."""

    p_hat: float
    trials: int
    std_err: float
    seed: int
    mode: str
    target: McTarget


def _target_counts(counts: McCounts, target: McTarget, mode: str) -> Tuple[int, int]:
    kind, index = target.kind, target.index
    size = 1 << counts.num_relays
    if kind in (RELAY_OUTAGE, ST_OUTAGE) and not (index is not None and 0 <= index < counts.num_relays):
        raise ValidationError(f"relay index {index} out of range for M = {counts.num_relays}")
    if kind in (DECODE_SET, OUT_GIVEN_SET) and not (index is not None and 0 <= index < size):
        raise ValidationError(f"mask {index} is not a subset of {counts.num_relays} relays")

    if kind == SECONDARY_OUTAGE:
        return counts.secondary(mode), counts.trials
    if kind == PRIMARY_P1:
        return counts.primary_p1, counts.trials
    if kind == PRIMARY_P2:
        return counts.primary_p2(mode), counts.trials
    if kind == DIRECT_OUTAGE:
        return counts.direct_outage, counts.trials
    if kind == RELAY_OUTAGE:
        return int(counts.relay_outage[index]), counts.trials
    if kind == ST_OUTAGE:
        return int(counts.st_outage[index]), counts.trials
    if kind == DECODE_SET:
        return int(counts.decode_counts[index]), counts.trials
    if kind == OUT_GIVEN_SET:
        observed = int(counts.decode_counts[index])
        if observed < MIN_CONDITIONING_COUNT:
            raise InsufficientConditioning(observed, MIN_CONDITIONING_COUNT, target.label)
        return int(counts.out_given_set(mode)[index]), observed
    raise ValidationError(f"unknown Monte Carlo target {kind!r}")


def estimate_from_counts(counts: McCounts, target: McTarget, seed: int,
                         mode: str = OPPORTUNISTIC) -> McEstimate:
    """Turn accumulated counts into an estimate for `target`."""
    _check_mode(mode)
    hits, total = _target_counts(counts, target, mode)
    p_hat = hits / total
    std_err = math.sqrt(p_hat * (1.0 - p_hat) / total)
    return McEstimate(p_hat, total, std_err, seed, mode, target)


def estimate(cfg: ScenarioConfig, alloc: PowerAllocation, n_trials: int,
             seed: int = DEFAULT_SEED, mode: str = OPPORTUNISTIC,
             target: Optional[McTarget] = None, draw_mode: str = INDEPENDENT,
             n_jobs: int = 1) -> McEstimate:
    """
    Estimate the probability of one target event.

    Conditional targets report the conditioning count as `trials`.

    Raises:
        ValidationError: fewer than MIN_TRIALS trials
        InsufficientConditioning: conditioning event seen too rarely
    """
    if n_trials < MIN_TRIALS:
        raise ValidationError(f"at least {MIN_TRIALS} trials are required, got {n_trials}")
    _check_mode(mode)
    target = target or McTarget.secondary_outage()
    counts = simulate_counts(cfg, alloc, n_trials, seed, draw_mode, n_jobs)
    result = estimate_from_counts(counts, target, seed, mode)
    logger.info("%s [%s]: %.6g +/- %.2g (%d trials)", target.label, mode,
                result.p_hat, result.std_err, result.trials)
    return result


def within_tolerance(p_hat: float, se_hat: float, reference: float,
                     sigma: float, se_reference: float = 0.0) -> bool:
    """True when |p_hat - reference| <= sigma * max(se_hat, se_reference) (+1e-12)."""
    return abs(p_hat - reference) <= sigma * max(se_hat, se_reference) + 1e-12
