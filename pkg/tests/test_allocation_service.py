import math

import numpy as np
import pytest

from src.models.errors import (
    DomainError,
    SecondaryForbidden,
    UndefinedPowerCapError,
    ValidationError,
)
from src.models.network import (
    constraint_product,
    relay_power_cap,
    satisfies_allocation_invariants,
)
from src.services.allocation_service import (
    BRANCH1,
    BRANCH2,
    RatioTerms,
    allocate_for_mode,
    find_r_min,
    full_allocation,
    optimal_ratios,
    optimal_relay_power,
    optimal_st_powers,
    ratio_closed_form,
    ratio_from_terms,
    ratio_objective,
    ratio_terms,
    select_relay,
    uniform_allocation,
)
from src.services.oracle_service import ratio_grid_search
from src.services.outage_service import compute_g, relay_outage_prob, relay_outage_vector

from .conftest import make_scenario


# ============================================================================
# ST POWERS
# ============================================================================

def test_both_candidates_lie_on_constraint_boundary(second_setup):
    g = compute_g(second_setup)
    cand = optimal_st_powers(second_setup, 0)
    for p_s, p_d in (cand.branch1, cand.branch2):
        assert constraint_product(second_setup, p_s, p_d) == pytest.approx(g, rel=1e-12)


def test_proportional_candidate_follows_relay_links(second_setup):
    p_s, p_d = optimal_st_powers(second_setup, 0).branch1
    assert p_d / p_s == pytest.approx(10 ** 0.5 / 10 ** 0.8, rel=1e-12)


def test_kept_candidate_has_lower_relay_outage(second_setup):
    cand = optimal_st_powers(second_setup, 0)
    out1 = relay_outage_prob(second_setup, 0, *cand.branch1)
    out2 = relay_outage_prob(second_setup, 0, *cand.branch2)
    assert cand.achieved == pytest.approx(min(out1, out2))
    assert cand.chosen == (BRANCH1 if out1 <= out2 else BRANCH2)
    assert cand.powers == (cand.branch1 if out1 <= out2 else cand.branch2)


def test_symmetric_scenario_splits_power_evenly(symmetric_setup):
    cand = optimal_st_powers(symmetric_setup, 0)
    for p_s, p_d in (cand.branch1, cand.branch2):
        assert p_s == pytest.approx(p_d, rel=1e-12)


def test_forbidden_secondary_transmission(first_setup):
    cfg = first_setup.with_updates(p_u=1.0)
    with pytest.raises(SecondaryForbidden):
        optimal_st_powers(cfg, 0)
    alloc = full_allocation(cfg)
    assert alloc.forbidden
    assert alloc.p_s == alloc.p_d == 0.0
    assert alloc.p_r == (0.0, 0.0)
    assert uniform_allocation(cfg).forbidden


def test_zero_primary_rate_has_no_power_cap(first_setup):
    cfg = first_setup.with_updates(rate_u=0.0)
    with pytest.raises(UndefinedPowerCapError):
        full_allocation(cfg)
    with pytest.raises(UndefinedPowerCapError):
        optimal_relay_power(cfg, 0)


def test_r_min_needs_relays(first_setup):
    with pytest.raises(DomainError):
        find_r_min(first_setup.with_updates(num_relays=0))


def test_r_min_ties_go_to_lowest_index(first_setup):
    index, _ = find_r_min(first_setup)
    assert index == 0


def test_r_min_minimizes_worst_relay_outage(three_relay_setup):
    index, chosen = find_r_min(three_relay_setup)
    best = float(np.max(relay_outage_vector(three_relay_setup, *chosen.powers)))
    for j in range(three_relay_setup.num_relays):
        cand = optimal_st_powers(three_relay_setup, j)
        assert best <= float(np.max(relay_outage_vector(three_relay_setup, *cand.powers))) + 1e-15


# ============================================================================
# RELAY POWERS AND RATIOS
# ============================================================================

def test_relay_power_saturates_phase2_cap(second_setup):
    g = compute_g(second_setup)
    assert optimal_relay_power(second_setup, 0) == \
        pytest.approx(relay_power_cap(second_setup, 0, g), rel=1e-15)


def test_relay_power_inverse_to_relay_primary_link():
    links = {
        'u,v': 5.0, 's,d': 5.0, 's,r': 5.0, 'd,r': 5.0, 'u,s': -5.0, 'u,d': -5.0,
        's,v': -5.0, 'd,v': -5.0, 'u,r': -5.0, 'r1,v': -5.0,
        'r2,v': -5.0 + 10.0 * math.log10(2.0),
    }
    cfg = make_scenario(links)
    assert optimal_relay_power(cfg, 1) == pytest.approx(0.5 * optimal_relay_power(cfg, 0), rel=1e-12)


def test_equal_products_give_even_split():
    assert ratio_closed_form(RatioTerms(1.0, 2.0, 1.0, 2.0)) == pytest.approx(0.5)
    assert ratio_from_terms(RatioTerms(2.0, 3.0, 2.0, 3.0)) == pytest.approx((0.5, 0.5))


def _random_ratio_terms(count=100, seed=2024):
    """Seeded (a, b, c, d) tuples; every fifth one sits on the ab = cd branch."""
    rng = np.random.default_rng(seed)
    cases = []
    for k in range(count):
        a, c = 1.0 + rng.exponential(2.0, size=2)
        b, d = 10.0 ** rng.uniform(-2.0, 2.0, size=2)
        if k % 5 == 0:
            d = a * b / c
        cases.append(RatioTerms(float(a), float(b), float(c), float(d)))
    return cases


RATIO_CASES = _random_ratio_terms()


def test_ratio_cases_cover_both_branches():
    balanced = [t for t in RATIO_CASES
                if abs(t.a * t.b - t.c * t.d) <= 1e-9 * max(t.a * t.b, t.c * t.d)]
    assert len(RATIO_CASES) == 100
    assert len(balanced) == 20


@pytest.mark.parametrize('terms', [
    RatioTerms(1.5, 4.0, 1.2, 1.0),
    RatioTerms(1.1, 0.5, 3.0, 8.0),
    RatioTerms(1.0, 20.0, 1.0, 0.05),
    RatioTerms(4.0, 0.01, 1.0, 30.0),
] + RATIO_CASES)
def test_ratio_matches_grid_optimum(terms):
    alpha, beta = ratio_from_terms(terms)
    assert 0.0 <= alpha <= 1.0
    assert alpha + beta == pytest.approx(1.0)
    _, grid_best = ratio_grid_search(terms, 10 ** 4)
    assert float(ratio_objective(terms, alpha)) <= grid_best + 1e-9


def test_allocated_ratios_match_grid_optimum(second_setup):
    alloc = full_allocation(second_setup)
    for i in range(second_setup.num_relays):
        terms = ratio_terms(second_setup, i, alloc.p_s, alloc.p_d, alloc.p_r[i])
        _, grid_best = ratio_grid_search(terms, 10 ** 4)
        assert float(ratio_objective(terms, alloc.alpha[i])) <= grid_best + 1e-9


def test_ratio_needs_positive_relay_power(first_setup):
    with pytest.raises(ValidationError):
        optimal_ratios(first_setup, 0, 1.0, 1.0, 0.0)


def test_zero_threshold_sends_everything_one_way(first_setup):
    cfg = first_setup.with_updates(rate_d=0.0)
    assert optimal_ratios(cfg, 0, 1.0, 1.0, 1.0) == (1.0, 0.0)
    cfg = first_setup.with_updates(rate_s=0.0)
    assert optimal_ratios(cfg, 0, 1.0, 1.0, 1.0) == (0.0, 1.0)


# ============================================================================
# FULL ALLOCATIONS AND SELECTION
# ============================================================================

@pytest.mark.parametrize('setup', ['first_setup', 'second_setup', 'three_relay_setup'])
@pytest.mark.parametrize('mode', ['uniform', 'lemma'])
def test_allocation_invariants(request, setup, mode):
    cfg = request.getfixturevalue(setup)
    g = compute_g(cfg)
    alloc = allocate_for_mode(cfg, mode)
    assert not alloc.forbidden
    assert alloc.num_relays == cfg.num_relays
    assert satisfies_allocation_invariants(cfg, alloc, g)
    assert constraint_product(cfg, alloc.p_s, alloc.p_d) == pytest.approx(g, rel=1e-9)
    for i, p_r in enumerate(alloc.p_r):
        assert p_r == pytest.approx(relay_power_cap(cfg, i, g), rel=1e-12)


def test_uniform_allocation_is_even(first_setup):
    alloc = uniform_allocation(first_setup)
    assert alloc.p_s == pytest.approx(alloc.p_d)
    assert alloc.alpha == (0.5, 0.5)
    assert alloc.scheme == 'uniform'


def test_lemma_allocation_without_relays(first_setup):
    cfg = first_setup.with_updates(num_relays=0)
    alloc = full_allocation(cfg)
    assert alloc.num_relays == 0
    assert alloc.p_s == pytest.approx(alloc.p_d)
    assert alloc.r_min is None


def test_select_relay(three_relay_setup):
    alloc = full_allocation(three_relay_setup)
    assert select_relay(three_relay_setup, 0b111, alloc) == 2
    assert select_relay(three_relay_setup, 0b011, alloc) == 1
    assert select_relay(three_relay_setup, 0b001, alloc) == 0
    with pytest.raises(DomainError):
        select_relay(three_relay_setup, 0, alloc)
    with pytest.raises(ValidationError):
        select_relay(three_relay_setup, 0b1000, alloc)


def test_unknown_allocation_mode(first_setup):
    with pytest.raises(ValidationError):
        allocate_for_mode(first_setup, 'greedy')
