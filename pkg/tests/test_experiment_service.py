import dataclasses
import math

import numpy as np
import pandas as pd
import pytest

from src.config.settings import RELAY_QUADRATURE_TOLERANCE
from src.models.errors import DomainError, ValidationError
from src.services.allocation_service import full_allocation
from src.services.experiment_service import (
    SweepCase,
    SweepSpec,
    ValidationReport,
    allocation_summary,
    configure_point,
    forbidden_variant,
    parse_range,
    power_allocation_compare,
    run_sweep,
    sweep_values,
    validate,
)
from src.services.outage_service import OPPORTUNISTIC, STATISTICAL, compute_g


# ============================================================================
# RANGES AND SWEEP POINTS
# ============================================================================

def test_parse_range():
    assert parse_range('0:60:5') == (0.0, 60.0, 5.0)
    assert parse_range('-5:3:0.5') == (-5.0, 3.0, 0.5)


@pytest.mark.parametrize('text', ['0:60', 'a:b:c', '0:10:0', '10:0:1', '0:inf:1'])
def test_parse_range_rejects(text):
    with pytest.raises(ValidationError):
        parse_range(text)


def test_sweep_values_include_stop():
    values = sweep_values((0.01, 0.2, 0.01))
    assert len(values) == 20
    assert values[0] == 0.01
    assert values[-1] == pytest.approx(0.2)
    assert sweep_values((0.0, 60.0, 5.0))[-1] == 60.0
    assert sweep_values((3.0, 3.0, 1.0)) == [3.0]


def test_configure_point(first_setup):
    assert configure_point(first_setup, 'gamma_u_dB', 30.0).gamma_u == pytest.approx(1000.0)
    moved = configure_point(first_setup, 'N0_dB', 10.0)
    assert moved.n0 == pytest.approx(10.0)
    assert moved.p_u == first_setup.p_u
    assert configure_point(first_setup, 'P_th', 0.1).p_th == 0.1
    with pytest.raises(ValidationError):
        configure_point(first_setup, 'R_s', 0.1)


def test_sweep_definitions_validated():
    with pytest.raises(ValidationError):
        SweepCase(-1)
    with pytest.raises(ValidationError):
        SweepCase(1, alloc='greedy')
    with pytest.raises(ValidationError):
        SweepSpec('P_u', (0.0, 1.0, 1.0), (SweepCase(1),))
    with pytest.raises(ValidationError):
        SweepSpec('gamma_u_dB', (0.0, 1.0, 1.0), ())
    with pytest.raises(ValidationError):
        SweepSpec('gamma_u_dB', (0.0, 1.0, 1.0), (SweepCase(1),), mc_trials=10)
    SweepSpec('gamma_u_dB', (0.0, 1.0, 1.0), (SweepCase(1),), mc_trials=10, skip_mc=True)


# ============================================================================
# SWEEPS
# ============================================================================

def test_analytic_sweep(first_setup):
    cases = tuple(SweepCase(m, alloc) for m in (0, 2) for alloc in ('uniform', 'lemma'))
    spec = SweepSpec('gamma_u_dB', (0.0, 20.0, 10.0), cases, skip_mc=True)
    df = run_sweep(spec, first_setup)

    assert len(df) == 12
    assert {'P_r1', 'P_r2', 'alpha1', 'alpha2'} <= set(df.columns)
    assert list(df['x'][:4]) == [0.0] * 4
    assert list(df['alloc'][:2]) == ['lemma', 'uniform']

    cut = df[df['x'] == 0.0]
    assert cut['forbidden'].all()
    assert (cut['p_analytic'] == 1.0).all()
    assert (cut['mc_se'] == 0.0).all()
    assert (cut['P_s'] == 0.0).all()

    live = df[df['x'] > 0.0]
    assert not live['forbidden'].any()
    assert live['p_analytic'].between(0.0, 1.0, inclusive='neither').all()
    assert live['p_mc'].isna().all()
    assert live[live['M'] == 0]['P_r1'].isna().all()
    assert (live['g'] > 1.0).all()


def test_more_relays_lower_outage(first_setup):
    cases = (SweepCase(0), SweepCase(1), SweepCase(2))
    spec = SweepSpec('gamma_u_dB', (20.0, 20.0, 1.0), cases, skip_mc=True)
    outage = list(run_sweep(spec, first_setup)['p_analytic'])
    assert outage[0] > outage[1] > outage[2]


def test_simulated_sweep(first_setup):
    cases = (SweepCase(1, 'lemma', OPPORTUNISTIC), SweepCase(2, 'uniform', STATISTICAL))
    spec = SweepSpec('P_th', (0.02, 0.04, 0.02), cases, mc_trials=50_000, seed=3)
    df = run_sweep(spec, first_setup)
    assert len(df) == 4
    assert (df['mc_se'] > 0.0).all()
    assert (np.abs(df['p_mc'] - df['p_analytic']) <= 5.0 * df['mc_se']).all()

    parallel = run_sweep(SweepSpec('P_th', (0.02, 0.04, 0.02), cases, mc_trials=50_000,
                                   seed=3, n_jobs=2), first_setup)
    pd.testing.assert_frame_equal(df, parallel)


def test_primary_snr_sweep_shape(first_setup):
    cases = tuple(SweepCase(m, alloc) for m in (0, 2) for alloc in ('uniform', 'lemma'))
    df = run_sweep(SweepSpec('gamma_u_dB', (0.0, 70.0, 5.0), cases, skip_mc=True), first_setup)

    cutoffs = {key: group.loc[group['forbidden'], 'x'].max()
               for key, group in df.groupby(['M', 'alloc'])}
    assert len(set(cutoffs.values())) == 1

    for (_, alloc), group in df.groupby(['M', 'alloc']):
        outage = group.sort_values('x')['p_analytic'].to_numpy()
        if alloc == 'uniform':
            assert np.all(np.diff(outage) <= 1e-12)
        top = group[group['x'] == 70.0].iloc[0]
        assert top['p_analytic'] == pytest.approx(top['p_asymptotic'], rel=0.01)

    live = df[~df['forbidden'] & (df['alloc'] == 'uniform')].set_index(['x', 'M'])['p_analytic']
    for x in live.index.get_level_values('x').unique():
        assert live[(x, 2)] < live[(x, 0)]


def test_threshold_sweep_shape(first_setup):
    cfg = first_setup.with_updates(p_u=first_setup.n0 * 10 ** 1.0)
    cases = (SweepCase(0, 'uniform'), SweepCase(1, 'uniform'))
    df = run_sweep(SweepSpec('P_th', (0.01, 0.2, 0.01), cases, skip_mc=True), cfg)
    for _, group in df.groupby('M'):
        group = group.sort_values('x')
        forbidden = group['forbidden'].to_numpy()
        first_live = int(np.argmin(forbidden))
        assert forbidden[:first_live].all() and not forbidden[first_live:].any()
        assert (group['p_analytic'].to_numpy()[:first_live] == 1.0).all()
        assert np.all(np.diff(group['p_analytic'].to_numpy()[first_live:]) < 0.0)
    live = df[~df['forbidden']].set_index(['x', 'M'])['p_analytic']
    for x in live.index.get_level_values('x').unique():
        assert live[(x, 1)] < live[(x, 0)]


def test_lemma_outage_never_rises_with_primary_snr(first_setup):
    cases = tuple(SweepCase(m, 'lemma') for m in (1, 2, 4))
    df = run_sweep(SweepSpec('gamma_u_dB', (0.0, 60.0, 5.0), cases, skip_mc=True), first_setup)
    for _, group in df.groupby('M'):
        outage = group.sort_values('x')['p_analytic'].to_numpy()
        assert np.all(np.diff(outage) <= 1e-12)


def test_noise_sweep_shape(second_setup):
    cases = tuple(SweepCase(m, alloc) for m in (2, 4) for alloc in ('uniform', 'lemma'))
    df = run_sweep(SweepSpec('N0_dB', (-5.0, 3.0, 1.0), cases, skip_mc=True), second_setup)
    assert not df['forbidden'].any()
    table = df.set_index(['x', 'M', 'alloc'])['p_analytic']

    for _, group in df.groupby(['M', 'alloc']):
        outage = group.sort_values('x')['p_analytic'].to_numpy()
        assert np.all(np.diff(outage) >= -1e-12)
    for x in sweep_values((-5.0, 3.0, 1.0)):
        for m in (2, 4):
            assert table[(x, m, 'lemma')] <= table[(x, m, 'uniform')] + 1e-12
        for alloc in ('uniform', 'lemma'):
            assert table[(x, 4, alloc)] < table[(x, 2, alloc)]

    def relative_gain(m):
        return 1.0 - table[(-5.0, m, 'lemma')] / table[(-5.0, m, 'uniform')]

    assert relative_gain(4) > relative_gain(2) > 0.0

    near_cutoff = run_sweep(SweepSpec('N0_dB', (3.4, 3.4, 1.0), cases, skip_mc=True),
                            second_setup)
    assert not near_cutoff['forbidden'].any()
    assert (near_cutoff['g'] < 1.001).all()
    assert (near_cutoff['p_analytic'] > 0.95).all()


# ============================================================================
# VALIDATION BATTERY
# ============================================================================

def test_report_bookkeeping():
    report = ValidationReport()
    report.add('ok', 1.0, 1.0, 0.0, True)
    report.skip('skipped', 'not applicable')
    assert report.passed
    report.add('bad', 1.0, 2.0, 0.1, False)
    assert not report.passed
    assert report.failures == ['bad']
    frame = report.to_frame()
    assert list(frame.columns) == ['check', 'reference', 'value', 'std_err',
                                   'tolerance', 'passed', 'note']
    assert len(frame) == 3


def test_forbidden_variant(first_setup):
    assert compute_g(forbidden_variant(first_setup)) == 1.0
    with pytest.raises(DomainError):
        forbidden_variant(first_setup.with_updates(rate_u=0.0))


def test_validate_needs_trials(first_setup):
    with pytest.raises(ValidationError):
        validate(first_setup, trials=500)


def test_validate_forbidden_scenario(first_setup):
    report = validate(forbidden_variant(first_setup), trials=1000)
    assert report.passed
    checks = report.to_frame().set_index('check')
    assert checks.loc['forbidden regime signalled', 'passed']
    assert checks.loc['primary protection', 'passed'] is None


@pytest.mark.slow
def test_phase_two_check_catches_unused_relay_power(first_setup, monkeypatch):
    def half_relay_power(cfg):
        alloc = full_allocation(cfg)
        if alloc.forbidden:
            return alloc
        return dataclasses.replace(alloc, p_r=tuple(0.5 * p for p in alloc.p_r))

    monkeypatch.setattr('src.services.experiment_service.full_allocation', half_relay_power)
    report = validate(first_setup, trials=20_000, seed=3)
    checks = report.to_frame().set_index('check')
    for select in ('opportunistic', 'statistical'):
        row = checks.loc[f'primary outage phase 2 [{select}]']
        assert row['reference'] == first_setup.p_th
        assert row['value'] < first_setup.p_th
        assert not row['passed']
    assert checks.loc['quadrature relay outage r1', 'tolerance'] == RELAY_QUADRATURE_TOLERANCE


@pytest.mark.slow
def test_validation_battery_passes(first_setup):
    report = validate(first_setup, trials=200_000, seed=11, sigma=5.0)
    assert report.passed, report.failures
    assert len(report.checks) > 20


# ============================================================================
# ALLOCATION COMPARISON AND SUMMARY
# ============================================================================

def test_power_allocation_compare(second_setup):
    df = power_allocation_compare(second_setup, [5.0, 0.0], resolution=50, alpha_points=201)
    assert list(df['N0_dB']) == [0.0, 5.0]
    assert list(df['forbidden']) == [False, True]
    live = df.iloc[0]
    assert 0.0 < live['outage_exhaustive'] < 1.0
    assert 0.0 < live['outage_lemma'] < 1.0
    assert live['P_d_cell'] > 0.0
    assert 0.0 <= live['alpha2_exhaustive'] <= 1.0
    assert df['within_cell'].dtype == bool
    cut = df.iloc[1]
    assert cut['outage_lemma'] == cut['outage_exhaustive'] == 1.0
    assert math.isnan(cut['P_d_cell'])
    assert not cut['within_cell']


def test_sequential_allocation_is_off_the_exhaustive_optimum(second_setup):
    # the sequential ST powers minimize the worst relay outage, not the total
    # outage, so they land a few tenths away from the exhaustive P_d
    df = power_allocation_compare(second_setup, [-5.0, 0.0], alpha_points=201)
    for _, row in df.iterrows():
        assert row['outage_exhaustive'] <= row['outage_lemma']
        assert row['outage_lemma'] - row['outage_exhaustive'] < 0.01
        assert row['P_d_exhaustive'] > row['P_d_lemma'] + row['P_d_cell']
        assert not row['within_cell']


def test_power_allocation_compare_needs_relays(second_setup):
    with pytest.raises(DomainError):
        power_allocation_compare(second_setup.with_updates(num_relays=0), [0.0])


def test_allocation_summary(three_relay_setup):
    alloc, table = allocation_summary(three_relay_setup)
    assert alloc.scheme == 'lemma'
    assert list(table['relay']) == ['r1', 'r2', 'r3']
    assert np.allclose(table['alpha'] + table['beta'], 1.0)
    assert table['relay_outage'].between(0.0, 1.0).all()
