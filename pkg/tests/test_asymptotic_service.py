import pytest

from src.models.errors import ValidationError
from src.services.allocation_service import full_allocation, optimal_st_powers
from src.services.asymptotic_service import (
    asymptotic_allocation,
    asymptotic_g,
    asymptotic_p_out_given_empty,
    asymptotic_p_out_given_set,
    asymptotic_relay_outage,
    asymptotic_st_outage_given_relay,
    asymptotic_total_outage,
    asymptotic_uniform_allocation,
)
from src.services.outage_service import (
    OPPORTUNISTIC,
    STATISTICAL,
    p_out_given_empty,
    p_out_given_set,
    relay_outage_prob,
    st_outage_given_relay,
    total_outage,
)

HIGH_P_U = 1e8


def test_asymptotic_g(first_setup):
    assert asymptotic_g(first_setup) == pytest.approx(1.0 / 0.98)


def test_floor_independent_of_primary_power_and_noise(first_setup):
    base = asymptotic_total_outage(first_setup)
    moved = asymptotic_total_outage(first_setup.with_updates(p_u=1e4, n0=3.0))
    assert moved.p_total == base.p_total
    assert 0.0 < base.p_total < 1.0


def test_candidates_converge_to_finite_boundary_points(first_setup):
    coeffs = asymptotic_allocation(first_setup)
    cfg = first_setup.with_updates(p_u=1e6)
    cand = optimal_st_powers(cfg, coeffs.r_min)
    assert cand.branch1[0] / cfg.p_u == pytest.approx(coeffs.rho_s_prime, rel=1e-4)
    assert cand.branch1[1] / cfg.p_u == pytest.approx(coeffs.rho_d_prime, rel=1e-4)
    assert cand.branch2[0] / cfg.p_u == pytest.approx(coeffs.rho_s_second, rel=1e-4)
    assert cand.branch2[1] / cfg.p_u == pytest.approx(coeffs.rho_d_second, rel=1e-4)


def test_allocated_powers_converge(first_setup):
    coeffs = asymptotic_allocation(first_setup)
    cfg = first_setup.with_updates(p_u=1e6)
    alloc = full_allocation(cfg)
    assert abs(alloc.p_s / cfg.p_u - coeffs.rho_s) / coeffs.rho_s < 0.01
    assert abs(alloc.p_d / cfg.p_u - coeffs.rho_d) / coeffs.rho_d < 0.01
    for p_r, rho_r in zip(alloc.p_r, coeffs.rho_r):
        assert p_r / cfg.p_u == pytest.approx(rho_r, rel=1e-3)


@pytest.mark.parametrize('setup', ['first_setup', 'second_setup'])
def test_relay_outage_limit(request, setup):
    cfg = request.getfixturevalue(setup)
    coeffs = asymptotic_allocation(cfg)
    cfg_high = cfg.with_updates(p_u=HIGH_P_U)
    for i in range(cfg.num_relays):
        finite = relay_outage_prob(cfg_high, i, coeffs.rho_s * HIGH_P_U, coeffs.rho_d * HIGH_P_U)
        assert asymptotic_relay_outage(cfg, i, coeffs.rho_s, coeffs.rho_d) == \
            pytest.approx(finite, rel=1e-5)


def test_relay_outage_limit_equal_means(first_setup):
    rho = asymptotic_uniform_allocation(first_setup).rho_s
    cfg_high = first_setup.with_updates(p_u=HIGH_P_U)
    finite = relay_outage_prob(cfg_high, 0, rho * HIGH_P_U, rho * HIGH_P_U)
    assert asymptotic_relay_outage(first_setup, 0, rho, rho) == pytest.approx(finite, rel=1e-5)


@pytest.mark.parametrize('setup', ['first_setup', 'three_relay_setup'])
def test_conditional_outage_limits(request, setup):
    cfg = request.getfixturevalue(setup)
    coeffs = asymptotic_allocation(cfg)
    cfg_high = cfg.with_updates(p_u=HIGH_P_U)
    alloc = coeffs.scaled(cfg_high)
    assert asymptotic_p_out_given_empty(cfg, coeffs.rho_s, coeffs.rho_d) == \
        pytest.approx(p_out_given_empty(cfg_high, alloc.p_s, alloc.p_d), rel=1e-5)
    for mask in range(1, 1 << cfg.num_relays):
        assert asymptotic_p_out_given_set(cfg, mask, coeffs) == \
            pytest.approx(p_out_given_set(cfg_high, mask, alloc), rel=1e-4)
    for i in range(cfg.num_relays):
        assert asymptotic_st_outage_given_relay(cfg, i, coeffs) == \
            pytest.approx(st_outage_given_relay(cfg_high, i, alloc), rel=1e-12)


@pytest.mark.parametrize('selection', [OPPORTUNISTIC, STATISTICAL])
def test_total_outage_reaches_floor(second_setup, selection):
    coeffs = asymptotic_allocation(second_setup)
    cfg_high = second_setup.with_updates(p_u=HIGH_P_U)
    finite = total_outage(cfg_high, coeffs.scaled(cfg_high), selection).p_total
    floor = asymptotic_total_outage(second_setup, selection=selection, coeffs=coeffs).p_total
    assert floor == pytest.approx(finite, rel=1e-4)


def test_uniform_coefficients_are_even(first_setup):
    coeffs = asymptotic_uniform_allocation(first_setup)
    assert coeffs.rho_s == pytest.approx(coeffs.rho_d)
    assert coeffs.alpha == (0.5, 0.5)
    assert coeffs.scheme == 'uniform'


def test_floor_without_relays(first_setup):
    cfg = first_setup.with_updates(num_relays=0)
    coeffs = asymptotic_allocation(cfg)
    breakdown = asymptotic_total_outage(cfg, coeffs=coeffs)
    assert breakdown.p_total == pytest.approx(
        asymptotic_p_out_given_empty(cfg, coeffs.rho_s, coeffs.rho_d))


def test_mismatched_coefficients_rejected(first_setup):
    coeffs = asymptotic_allocation(first_setup.with_updates(num_relays=1))
    with pytest.raises(ValidationError):
        asymptotic_total_outage(first_setup, coeffs=coeffs)


def test_asymptotic_relay_outage_rejects_bad_input(first_setup):
    with pytest.raises(ValidationError):
        asymptotic_relay_outage(first_setup, 5, 1.0, 1.0)
    with pytest.raises(ValidationError):
        asymptotic_relay_outage(first_setup, 0, -1.0, 1.0)
    assert asymptotic_relay_outage(first_setup, 0, 0.0, 1.0) == 1.0
