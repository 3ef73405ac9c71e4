"""Shared scenarios for the test suite."""

from pathlib import Path

import pytest

from src.services.data_service import load_scenario, scenario_from_dict

SCENARIO_DIR = Path(__file__).resolve().parent.parent / 'scenarios'
FIRST_SETUP_FILE = SCENARIO_DIR / 'first_setup.json'
SECOND_SETUP_FILE = SCENARIO_DIR / 'second_setup.json'

RATES = {'Ru': 0.6, 'Rs': 0.2, 'Rd': 0.3}


def make_scenario(links, num_relays=2, rates=None, gamma_u_db=20.0, n0_db=0.0,
                  p_th=0.02, name='test'):
    """Scenario built in memory from dB link gains."""
    return scenario_from_dict({
        'name': name,
        'rates': rates or RATES,
        'gamma_u_dB': gamma_u_db,
        'N0_dB': n0_db,
        'P_th': p_th,
        'M': num_relays,
        'links': links,
    })


@pytest.fixture
def first_setup():
    return load_scenario(FIRST_SETUP_FILE)


@pytest.fixture
def second_setup():
    return load_scenario(SECOND_SETUP_FILE)


@pytest.fixture
def symmetric_setup():
    """Equal rates and mirror-image links for s and d."""
    links = {
        'u,v': 5.0, 's,d': 3.0, 's,r': 6.0, 'd,r': 6.0,
        'u,s': -4.0, 'u,d': -4.0, 's,v': -5.0, 'd,v': -5.0,
        'u,r': -5.0, 'r,v': -5.0,
    }
    return make_scenario(links, rates={'Ru': 0.6, 'Rs': 0.25, 'Rd': 0.25}, name='symmetric')


@pytest.fixture
def three_relay_setup():
    """Second-setup statistics with heterogeneous d -> relay links of 5, 8 and 11 dB."""
    links = {
        'u,v': 5.0, 's,r': 5.0, 's,d': 0.0,
        'd,r1': 5.0, 'd,r2': 8.0, 'd,r3': 11.0,
        'u,s': -5.0, 's,v': -5.0, 'd,v': -5.0, 'u,r': -5.0, 'r,v': -5.0, 'u,d': -8.0,
    }
    return make_scenario(links, num_relays=3, gamma_u_db=12.5, name='three_relays')
