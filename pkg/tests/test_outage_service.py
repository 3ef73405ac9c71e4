import math

import numpy as np
import pytest

from src.models.errors import (
    CapacityError,
    DomainError,
    NumericalConsistencyError,
    ValidationError,
)
from src.models.network import PowerAllocation
from src.services.allocation_service import full_allocation, uniform_allocation
from src.services.oracle_service import conditional_outage_quadrature, relay_outage_quadrature
from src.services.outage_service import (
    DISTINCT_MEANS,
    EQUAL_MEANS,
    OPPORTUNISTIC,
    STATISTICAL,
    check_probability,
    compute_g,
    decoding_set_probabilities,
    p_decoding_set,
    p_empty_set,
    p_out_given_empty,
    p_out_given_set,
    p_out_given_set_statistical,
    primary_outage_phase1,
    primary_outage_phase2,
    relay_outage_prob,
    relay_outage_terms,
    st_outage_given_relay,
    st_outage_given_relay_exact,
    st_selection_ranking,
    submasks,
    subset_terms,
    total_outage,
    total_outage_over_ratios,
)

from .conftest import make_scenario


# ============================================================================
# PRIMARY QOS
# ============================================================================

def test_compute_g_matches_definition(first_setup):
    delta_u = 2 ** 0.6 - 1
    expected = math.exp(-delta_u / (100.0 * 10 ** 0.5)) / 0.98
    assert compute_g(first_setup) == pytest.approx(expected, rel=1e-12)
    assert compute_g(first_setup) > 1.0


def test_compute_g_forbidden_below_cutoff(first_setup):
    assert compute_g(first_setup.with_updates(p_u=1.0)) == 1.0


def test_primary_outage_without_secondary_interference(first_setup):
    expected = -math.expm1(-(2 ** 0.6 - 1) / (100.0 * 10 ** 0.5))
    assert primary_outage_phase1(first_setup, 0.0, 0.0) == pytest.approx(expected, rel=1e-12)


def test_boundary_powers_meet_primary_threshold(first_setup):
    alloc = uniform_allocation(first_setup)
    assert primary_outage_phase1(first_setup, alloc.p_s, alloc.p_d) == pytest.approx(0.02, rel=1e-9)
    for i in range(first_setup.num_relays):
        assert primary_outage_phase2(first_setup, i, alloc.p_r[i]) == pytest.approx(0.02, rel=1e-9)


def test_primary_outage_vanishes_for_zero_primary_rate(first_setup):
    cfg = first_setup.with_updates(rate_u=0.0)
    assert primary_outage_phase1(cfg, 5.0, 5.0) == 0.0


def test_primary_outage_rejects_negative_power(first_setup):
    with pytest.raises(ValidationError):
        primary_outage_phase1(first_setup, -1.0, 1.0)


# ============================================================================
# RELAY DECODING OUTAGE
# ============================================================================

def test_relay_terms_case_tag(first_setup, second_setup):
    alloc = uniform_allocation(first_setup)
    assert relay_outage_terms(first_setup, 0, alloc.p_s, alloc.p_d).case_tag == EQUAL_MEANS
    alloc = uniform_allocation(second_setup)
    terms = relay_outage_terms(second_setup, 0, alloc.p_s, alloc.p_d)
    assert terms.case_tag == DISTINCT_MEANS
    assert terms.C is not None


def test_relay_terms_need_positive_powers(first_setup):
    with pytest.raises(DomainError):
        relay_outage_terms(first_setup, 0, 0.0, 1.0)


@pytest.mark.parametrize('setup', ['first_setup', 'second_setup'])
def test_relay_outage_matches_quadrature(request, setup):
    cfg = request.getfixturevalue(setup)
    alloc = full_allocation(cfg)
    closed = relay_outage_prob(cfg, 0, alloc.p_s, alloc.p_d)
    numeric = relay_outage_quadrature(cfg, 0, alloc.p_s, alloc.p_d)
    assert closed == pytest.approx(numeric, abs=1e-6)


def test_relay_outage_continuous_across_cases(first_setup):
    p = uniform_allocation(first_setup).p_s
    equal = relay_outage_prob(first_setup, 0, p, p)
    distinct = relay_outage_prob(first_setup, 0, p, p * (1.0 + 1e-8))
    assert relay_outage_terms(first_setup, 0, p, p * (1.0 + 1e-8)).case_tag == DISTINCT_MEANS
    assert abs(equal - distinct) < 1e-6


def test_relay_outage_edge_cases(first_setup):
    assert relay_outage_prob(first_setup, 0, 0.0, 5.0) == 1.0
    cfg = first_setup.with_updates(rate_s=0.0, rate_d=0.0)
    assert relay_outage_prob(cfg, 0, 5.0, 5.0) == 0.0


def test_relay_outage_decreases_with_power(second_setup):
    low = relay_outage_prob(second_setup, 0, 1.0, 1.0)
    high = relay_outage_prob(second_setup, 0, 4.0, 4.0)
    assert 0.0 < high < low < 1.0


def test_relay_index_out_of_range(first_setup):
    with pytest.raises(ValidationError):
        relay_outage_prob(first_setup, 2, 1.0, 1.0)


# ============================================================================
# DECODING SETS AND CONDITIONAL OUTAGE
# ============================================================================

def _chain_setup(num_relays):
    links = {
        'u,v': 5.0, 's,r': 5.0, 's,d': 0.0, 'u,s': -5.0, 's,v': -5.0,
        'd,v': -5.0, 'u,r': -5.0, 'r,v': -5.0, 'u,d': -8.0,
    }
    links.update({f'd,r{i + 1}': 2.0 + 2.0 * i for i in range(num_relays)})
    return make_scenario(links, num_relays=num_relays, gamma_u_db=12.5, name=f'chain{num_relays}')


def _random_setups(count=20, seed=17):
    """Three-relay scenarios with every link drawn independently."""
    rng = np.random.default_rng(seed)
    setups = []
    for k in range(count):
        links = {'u,v': 5.0}
        for pair in ('s,d', 's,v', 'd,v', 'u,s', 'u,d'):
            links[pair] = float(rng.uniform(-8.0, 5.0))
        for i in range(1, 4):
            for peer, low, high in (('s', -2.0, 10.0), ('d', -2.0, 10.0),
                                    ('u', -8.0, 0.0), ('v', -8.0, 0.0)):
                links[f'{peer},r{i}'] = float(rng.uniform(low, high))
        setups.append(make_scenario(links, num_relays=3, name=f'random{k}',
                                    gamma_u_db=float(rng.uniform(15.0, 30.0))))
    return setups


RANDOM_SETUPS = _random_setups()


@pytest.mark.parametrize('num_relays', range(1, 7))
def test_decoding_sets_partition_probability_space(num_relays):
    cfg = _chain_setup(num_relays)
    alloc = full_allocation(cfg)
    p_sets = decoding_set_probabilities(cfg, alloc.p_s, alloc.p_d)
    assert p_sets.shape == (1 << num_relays,)
    assert (p_sets >= 0.0).all()
    assert math.fsum(p_sets) == pytest.approx(1.0, abs=1e-12)
    for mask in {0, 1, (1 << num_relays) - 1}:
        assert p_decoding_set(cfg, mask, alloc.p_s, alloc.p_d) == \
            pytest.approx(p_sets[mask], rel=1e-12)


def test_empty_set_probability(three_relay_setup):
    alloc = uniform_allocation(three_relay_setup)
    expected = math.prod(relay_outage_prob(three_relay_setup, i, alloc.p_s, alloc.p_d)
                         for i in range(3))
    assert p_empty_set(three_relay_setup, alloc.p_s, alloc.p_d) == pytest.approx(expected, rel=1e-12)
    cfg = three_relay_setup.with_updates(num_relays=0)
    assert p_empty_set(cfg, alloc.p_s, alloc.p_d) == 1.0


def test_submasks_are_ascending():
    np.testing.assert_array_equal(submasks(0b101), [0, 1, 4, 5])
    np.testing.assert_array_equal(submasks(0), [0])


def test_subset_terms(first_setup):
    alloc = uniform_allocation(first_setup)
    assert subset_terms(first_setup, 0b01, alloc).E == 1
    assert subset_terms(first_setup, 0b11, alloc).E == 2
    with pytest.raises(DomainError):
        subset_terms(first_setup, 0, alloc)


def test_single_relay_conditional_outage_is_exact_st_outage(first_setup):
    cfg = first_setup.with_updates(num_relays=1)
    alloc = uniform_allocation(cfg)
    expected = st_outage_given_relay_exact(cfg, 0, alloc)
    assert p_out_given_set(cfg, 1, alloc) == pytest.approx(expected, rel=1e-9)
    assert p_out_given_set_statistical(cfg, 1, alloc) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize('mask', [0b01, 0b10, 0b11])
def test_conditional_outage_matches_quadrature(first_setup, mask):
    alloc = uniform_allocation(first_setup)
    closed = p_out_given_set(first_setup, mask, alloc)
    numeric = conditional_outage_quadrature(first_setup, mask, alloc)
    assert closed == pytest.approx(numeric, abs=1e-5)


@pytest.mark.slow
@pytest.mark.parametrize('index', range(len(RANDOM_SETUPS)))
def test_random_setups_match_quadrature(index):
    cfg = RANDOM_SETUPS[index]
    alloc = uniform_allocation(cfg)
    assert not alloc.forbidden
    for i in range(cfg.num_relays):
        closed = relay_outage_prob(cfg, i, alloc.p_s, alloc.p_d)
        assert closed == pytest.approx(relay_outage_quadrature(cfg, i, alloc.p_s, alloc.p_d),
                                       abs=1e-6)
    # cycle through the seven non-empty decoding sets of three relays
    mask = 1 + index % 7
    closed = p_out_given_set(cfg, mask, alloc)
    assert closed == pytest.approx(conditional_outage_quadrature(cfg, mask, alloc), abs=1e-5)


def test_conditional_outage_decreases_with_more_relays(first_setup):
    alloc = uniform_allocation(first_setup)
    assert p_out_given_set(first_setup, 0b11, alloc) < p_out_given_set(first_setup, 0b01, alloc)


def test_conditional_outage_rejects_empty_set(first_setup):
    alloc = uniform_allocation(first_setup)
    with pytest.raises(DomainError):
        p_out_given_set(first_setup, 0, alloc)
    with pytest.raises(ValidationError):
        p_out_given_set(first_setup, 0b100, alloc)


def test_direct_retransmission_outage(first_setup):
    alloc = uniform_allocation(first_setup)
    value = p_out_given_empty(first_setup, alloc.p_s, alloc.p_d)
    assert 0.0 < value < 1.0
    assert p_out_given_empty(first_setup, 0.0, alloc.p_d) == 1.0


# ============================================================================
# ST OUTAGE AND SELECTION
# ============================================================================

def test_exact_st_outage_approaches_high_snr_form(first_setup):
    cfg = first_setup.with_updates(p_u=1e8)
    alloc = full_allocation(cfg)
    for i in range(cfg.num_relays):
        assert st_outage_given_relay_exact(cfg, i, alloc) == \
            pytest.approx(st_outage_given_relay(cfg, i, alloc), abs=1e-5)


def test_ranking_breaks_ties_to_lower_index(first_setup):
    assert st_selection_ranking(first_setup, uniform_allocation(first_setup)) == [0, 1]


def test_ranking_prefers_stronger_relay(three_relay_setup):
    alloc = full_allocation(three_relay_setup)
    assert st_selection_ranking(three_relay_setup, alloc)[0] == 2


# ============================================================================
# TOTAL OUTAGE
# ============================================================================

def test_total_outage_breakdown(first_setup):
    alloc = full_allocation(first_setup)
    breakdown = total_outage(first_setup, alloc)
    assert breakdown.partition_sum == pytest.approx(1.0, abs=1e-9)
    assert len(breakdown.per_subset) == 3
    recombined = math.fsum([breakdown.p_empty * breakdown.p_out_given_empty]
                           + [s.p_set * s.p_out for s in breakdown.per_subset])
    assert breakdown.p_total == pytest.approx(recombined, rel=1e-12)
    assert 0.0 < breakdown.p_total < 1.0


def test_total_outage_without_relays_is_direct_outage(first_setup):
    cfg = first_setup.with_updates(num_relays=0)
    alloc = uniform_allocation(cfg)
    breakdown = total_outage(cfg, alloc)
    assert breakdown.per_subset == ()
    assert breakdown.p_total == pytest.approx(p_out_given_empty(cfg, alloc.p_s, alloc.p_d))


def test_selection_modes_agree_for_one_relay(first_setup):
    cfg = first_setup.with_updates(num_relays=1)
    alloc = full_allocation(cfg)
    assert total_outage(cfg, alloc, OPPORTUNISTIC).p_total == \
        pytest.approx(total_outage(cfg, alloc, STATISTICAL).p_total, rel=1e-9)


def test_opportunistic_selection_never_worse(three_relay_setup):
    alloc = full_allocation(three_relay_setup)
    opportunistic = total_outage(three_relay_setup, alloc, OPPORTUNISTIC).p_total
    statistical = total_outage(three_relay_setup, alloc, STATISTICAL).p_total
    assert opportunistic <= statistical + 1e-12


def test_total_outage_rejects_unknown_selection(first_setup):
    with pytest.raises(ValidationError):
        total_outage(first_setup, uniform_allocation(first_setup), 'random')


def test_total_outage_rejects_mismatched_allocation(first_setup):
    with pytest.raises(ValidationError):
        total_outage(first_setup, PowerAllocation(1.0, 1.0))


@pytest.mark.parametrize('selection', [OPPORTUNISTIC, STATISTICAL])
def test_ratio_rows_match_total_outage(three_relay_setup, selection):
    base = full_allocation(three_relay_setup)
    rows = np.random.default_rng(5).uniform(0.0, 1.0, size=(6, 3))
    rows[0] = base.alpha
    rows[1] = [0.0, 1.0, 0.5]
    values = total_outage_over_ratios(three_relay_setup, base.p_s, base.p_d, base.p_r,
                                      rows, selection)
    assert values.shape == (6,)
    for row, value in zip(rows, values):
        alloc = PowerAllocation(base.p_s, base.p_d, base.p_r,
                                tuple(float(a) for a in row), tuple(1.0 - float(a) for a in row))
        expected = total_outage(three_relay_setup, alloc, selection).p_total
        assert value == pytest.approx(expected, rel=1e-9, abs=1e-14)


def test_ratio_rows_validated(first_setup):
    alloc = uniform_allocation(first_setup)
    with pytest.raises(ValidationError):
        total_outage_over_ratios(first_setup, alloc.p_s, alloc.p_d, alloc.p_r, [[0.5]])
    with pytest.raises(ValidationError):
        total_outage_over_ratios(first_setup, alloc.p_s, alloc.p_d, alloc.p_r, [[0.5, 1.5]])
    with pytest.raises(ValidationError):
        total_outage_over_ratios(first_setup, alloc.p_s, alloc.p_d, alloc.p_r, [[0.5, 0.5]],
                                 'round-robin')
    cfg = first_setup.with_updates(num_relays=0)
    values = total_outage_over_ratios(cfg, alloc.p_s, alloc.p_d, (), np.empty((2, 0)))
    expected = total_outage(cfg, PowerAllocation(alloc.p_s, alloc.p_d)).p_total
    np.testing.assert_allclose(values, [expected, expected], rtol=1e-12)


def test_capacity_limit(first_setup):
    cfg = first_setup.with_updates(num_relays=17)
    with pytest.raises(CapacityError, match='M_max'):
        total_outage(cfg, PowerAllocation.zero(17))


# ============================================================================
# HELPERS
# ============================================================================

def test_check_probability_clamps_rounding_noise():
    assert check_probability(1.0 + 1e-13) == 1.0
    assert check_probability(-1e-13) == 0.0
    assert check_probability(0.25) == 0.25


@pytest.mark.parametrize('value', [1.1, -0.01, math.nan])
def test_check_probability_rejects_inconsistent_values(value):
    with pytest.raises(NumericalConsistencyError):
        check_probability(value)
