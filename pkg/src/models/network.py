"""
Network Model
Domain types, unit conversions and derived thresholds shared by every service

Channel gains are exponentially distributed with MEAN sigma2[k, j]; every
closed form in the services uses gamma * sigma2 as a mean received SNR.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Mapping, NamedTuple, Optional, Tuple

from ..config.settings import RELATIVE_TOLERANCE
from .errors import ValidationError

LN2 = math.log(2.0)

# Fixed nodes of the network; relays are labelled r1..rM
PRIMARY_TX = 'u'
PRIMARY_RX = 'v'
SOURCE = 's'
DESTINATION = 'd'
GENERIC_RELAY = 'r'

STATIC_PAIRS = (
    ('u', 'v'), ('s', 'v'), ('d', 'v'), ('u', 's'), ('u', 'd'), ('d', 's'),
)
RELAY_PEERS = ('s', 'd', 'u', 'v')


# ============================================================================
# UNIT CONVERSIONS
# ============================================================================

def db_to_linear(x_db: float) -> float:
    """
    Convert a dB value to linear scale.

    Args:
        x_db: Value in dB

    Returns:
        10^(x_db/10)
    """
    x_db = float(x_db)
    if not math.isfinite(x_db):
        raise ValidationError(f"dB value must be finite, got {x_db}")
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    """Convert a positive linear value to dB."""
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise ValidationError(f"linear value must be finite and > 0, got {x}")
    return 10.0 * math.log10(x)


def relay_label(index: int) -> str:
    """0-based relay index to its node label (0 -> 'r1')."""
    return f"r{index + 1}"


def normalize_pair(a: str, b: str) -> Tuple[str, str]:
    """Unordered link key, sorted lexicographically."""
    a, b = a.strip(), b.strip()
    return (a, b) if a <= b else (b, a)


def parse_link_key(key: str) -> Tuple[str, str]:
    """Parse a scenario key like 'u,v' or 'r2,s'."""
    parts = [p.strip() for p in str(key).split(',')]
    if len(parts) != 2 or not all(parts):
        raise ValidationError(f"link key must look like 'a,b', got {key!r}")
    return normalize_pair(*parts)


def _is_relay_node(node: str) -> bool:
    return node.startswith(GENERIC_RELAY) and node[1:].isdigit()


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class LinkStats:
    """
    Mean channel gains for every link of the network, linear scale.

    One value is stored per unordered pair, so sigma2('s', 'r1') and
    sigma2('r1', 's') answer identically. Keys with the bare relay node 'r'
    (e.g. ('r', 's')) apply to every relay; per-relay keys override them.
    """

    sigma2: Mapping[Tuple[str, str], float]

    def __post_init__(self):
        normalized: Dict[Tuple[str, str], float] = {}
        for pair, value in dict(self.sigma2).items():
            key = normalize_pair(*pair)
            value = float(value)
            if not math.isfinite(value) or value <= 0:
                raise ValidationError(
                    f"mean channel gain for link {key[0]},{key[1]} must be "
                    f"finite and > 0, got {value}"
                )
            normalized[key] = value
        object.__setattr__(self, 'sigma2', normalized)

    @classmethod
    def from_db(cls, links_db: Mapping[str, float]) -> "LinkStats":
        """Build from a scenario-style {'a,b': dB} mapping."""
        return cls({parse_link_key(k): db_to_linear(v) for k, v in links_db.items()})

    @classmethod
    def from_linear(cls, links: Mapping[str, float]) -> "LinkStats":
        """Build from a scenario-style {'a,b': linear} mapping."""
        return cls({parse_link_key(k): v for k, v in links.items()})

    def get(self, a: str, b: str) -> float:
        """Mean gain of the link between nodes a and b (either order)."""
        key = normalize_pair(a, b)
        if key in self.sigma2:
            return self.sigma2[key]
        generic = tuple(GENERIC_RELAY if _is_relay_node(n) else n for n in key)
        generic = normalize_pair(*generic)
        if generic != key and generic in self.sigma2:
            return self.sigma2[generic]
        raise ValidationError(f"missing mean channel gain for link {a},{b}")

    def relay(self, peer: str, index: int) -> float:
        """Mean gain between relay `index` (0-based) and `peer`."""
        return self.get(peer, relay_label(index))

    def required_pairs(self, num_relays: int) -> Iterable[Tuple[str, str]]:
        yield from STATIC_PAIRS
        for i in range(num_relays):
            for peer in RELAY_PEERS:
                yield (peer, relay_label(i))

    def validate(self, num_relays: int) -> None:
        """Raise ValidationError if any link needed for `num_relays` is missing."""
        missing = []
        for a, b in self.required_pairs(num_relays):
            try:
                self.get(a, b)
            except ValidationError:
                missing.append(f"{a},{b}")
        if missing:
            raise ValidationError(f"missing mean channel gains: {', '.join(missing)}")


class Thresholds(NamedTuple):
    """SINR thresholds derived from the data rates."""
    delta_u: float
    delta: float
    delta_s: float
    delta_d: float


def _check_rate(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(f"rate {name} must be finite and >= 0, got {value}")
    return value


def thresholds_from_rates(rate_u: float, rate_s: float, rate_d: float) -> Thresholds:
    """
    Compute the four SINR thresholds.

    Args:
        rate_u: Primary rate R_u (bits/s/Hz)
        rate_s: Rate of ST s, R_s
        rate_d: Rate of ST d, R_d

    Returns:
        Thresholds(delta_u, delta, delta_s, delta_d), with
        delta = (delta_s + 1)(delta_d + 1) - 1
    """
    rate_u = _check_rate('R_u', rate_u)
    rate_s = _check_rate('R_s', rate_s)
    rate_d = _check_rate('R_d', rate_d)
    delta_u = math.expm1(rate_u * LN2)
    delta_s = math.expm1(2.0 * rate_s * LN2)
    delta_d = math.expm1(2.0 * rate_d * LN2)
    delta = delta_s + delta_d + delta_s * delta_d
    return Thresholds(delta_u, delta, delta_s, delta_d)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Rates, primary power, noise, QoS threshold and relay statistics.

    Powers are linear watts; gamma_u = p_u / n0.
    """

    rate_u: float
    rate_s: float
    rate_d: float
    p_u: float
    n0: float
    p_th: float
    num_relays: int
    links: LinkStats
    name: str = "scenario"

    def __post_init__(self):
        for label, value in (('P_u', self.p_u), ('N0', self.n0)):
            if not math.isfinite(float(value)) or float(value) <= 0:
                raise ValidationError(f"{label} must be finite and > 0, got {value}")
        if not 0.0 < float(self.p_th) < 1.0:
            raise ValidationError(f"P_th must lie in (0, 1), got {self.p_th}")
        if int(self.num_relays) != self.num_relays or self.num_relays < 0:
            raise ValidationError(f"relay count must be an integer >= 0, got {self.num_relays}")
        object.__setattr__(self, 'num_relays', int(self.num_relays))
        if not math.isfinite(self.gamma_u) or self.gamma_u <= 0:
            raise ValidationError(f"gamma_u = P_u/N0 must be finite and > 0, got {self.gamma_u}")
        thresholds_from_rates(self.rate_u, self.rate_s, self.rate_d)
        self.links.validate(self.num_relays)

    @property
    def gamma_u(self) -> float:
        return self.p_u / self.n0

    @property
    def thresholds(self) -> Thresholds:
        return thresholds_from_rates(self.rate_u, self.rate_s, self.rate_d)

    def sigma2(self, a: str, b: str) -> float:
        return self.links.get(a, b)

    def relay_sigma2(self, peer: str, index: int) -> float:
        return self.links.relay(peer, index)

    def with_updates(self, **changes) -> "ScenarioConfig":
        """Copy with fields replaced; the copy is validated again."""
        return replace(self, **changes)


def thresholds(cfg: ScenarioConfig) -> Thresholds:
    """Derived thresholds (delta_u, delta, delta_s, delta_d) of a scenario."""
    return cfg.thresholds


@dataclass(frozen=True)
class PowerAllocation:
    """
    Secondary transmit powers and per-relay forward power ratios.

    alpha[i] is the share of relay i's power carrying s's data to d, beta[i]
    the share carrying d's data to s.
    """

    p_s: float
    p_d: float
    p_r: Tuple[float, ...] = ()
    alpha: Tuple[float, ...] = ()
    beta: Tuple[float, ...] = ()
    scheme: str = "custom"
    forbidden: bool = False
    r_min: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'p_r', tuple(float(p) for p in self.p_r))
        object.__setattr__(self, 'alpha', tuple(float(a) for a in self.alpha))
        object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))
        if not (len(self.p_r) == len(self.alpha) == len(self.beta)):
            raise ValidationError("p_r, alpha and beta must have one entry per relay")
        for label, value in [('P_s', self.p_s), ('P_d', self.p_d)] + \
                [(f'P_{relay_label(i)}', p) for i, p in enumerate(self.p_r)]:
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{label} must be finite and >= 0, got {value}")
        for i, (a, b) in enumerate(zip(self.alpha, self.beta)):
            if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
                raise ValidationError(f"ratios of {relay_label(i)} must lie in [0, 1]")
            if abs(a + b - 1.0) > RELATIVE_TOLERANCE:
                raise ValidationError(f"alpha + beta must equal 1 for {relay_label(i)}")

    @property
    def num_relays(self) -> int:
        return len(self.p_r)

    @classmethod
    def zero(cls, num_relays: int, scheme: str = "forbidden") -> "PowerAllocation":
        """All-zero allocation used when secondary transmission is forbidden."""
        return cls(0.0, 0.0, (0.0,) * num_relays, (0.5,) * num_relays,
                   (0.5,) * num_relays, scheme=scheme, forbidden=True)


@dataclass(frozen=True)
class SubsetOutage:
    """One decoding set D_S with its occurrence and conditional outage probabilities."""
    mask: int
    p_set: float
    p_out: float


@dataclass(frozen=True)
class OutageBreakdown:
    """Decomposition of the secondary outage probability over decoding sets."""

    p_empty: float
    p_out_given_empty: float
    per_subset: Tuple[SubsetOutage, ...] = field(default_factory=tuple)
    p_total: float = 0.0
    selection: str = "opportunistic"

    @property
    def partition_sum(self) -> float:
        return math.fsum([self.p_empty] + [s.p_set for s in self.per_subset])


# ============================================================================
# CONSTRAINT PREDICATES
# ============================================================================

def st_power_coefficients(cfg: ScenarioConfig) -> Tuple[float, float]:
    """
    Coefficients of the primary constraint: (1 + A*P_s)(1 + B*P_d) <= g.

    Returns:
        (A, B) with A = delta_u sigma2_sv / (P_u sigma2_uv), B likewise for d
    """
    delta_u = cfg.thresholds.delta_u
    scale = delta_u / (cfg.p_u * cfg.sigma2('u', 'v'))
    return scale * cfg.sigma2('s', 'v'), scale * cfg.sigma2('d', 'v')


def constraint_product(cfg: ScenarioConfig, p_s: float, p_d: float) -> float:
    """Left-hand side of the primary constraint."""
    a_coef, b_coef = st_power_coefficients(cfg)
    return (1.0 + a_coef * p_s) * (1.0 + b_coef * p_d)


def satisfies_primary_constraint(cfg: ScenarioConfig, p_s: float, p_d: float, g: float,
                           tolerance: float = RELATIVE_TOLERANCE) -> bool:
    """True when (P_s, P_d) keeps the phase-1 primary outage at or below P_th."""
    return constraint_product(cfg, p_s, p_d) <= g * (1.0 + tolerance)


def relay_power_cap(cfg: ScenarioConfig, index: int, g: float) -> float:
    """Largest relay power keeping the phase-2 primary outage at or below P_th."""
    delta_u = cfg.thresholds.delta_u
    if delta_u == 0.0:
        return math.inf
    return cfg.p_u * cfg.sigma2('u', 'v') / (delta_u * cfg.relay_sigma2('v', index)) * (g - 1.0)


def satisfies_relay_caps(cfg: ScenarioConfig, alloc: PowerAllocation, g: float,
                         tolerance: float = RELATIVE_TOLERANCE) -> bool:
    """True when every relay power respects its phase-2 cap."""
    for i, p_r in enumerate(alloc.p_r):
        cap = relay_power_cap(cfg, i, g)
        if p_r > cap + tolerance * max(cap, 1e-300):
            return False
    return True


def satisfies_allocation_invariants(cfg: ScenarioConfig, alloc: PowerAllocation,
                                    g: float) -> bool:
    """Constraint C, relay caps and ratio normalisation in one predicate."""
    ratios_ok = all(abs(a + b - 1.0) <= RELATIVE_TOLERANCE
                    for a, b in zip(alloc.alpha, alloc.beta))
    return (ratios_ok
            and satisfies_primary_constraint(cfg, alloc.p_s, alloc.p_d, g)
            and satisfies_relay_caps(cfg, alloc, g))
