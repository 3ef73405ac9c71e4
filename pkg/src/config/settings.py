"""
Analysis Settings and Configuration
Central configuration file for tolerances, Monte Carlo defaults and sweep ranges
"""

from pathlib import Path

# ============================================================================
# APPLICATION SETTINGS
# ============================================================================

APP_TITLE = "Cognitive Two-Way Relay Outage Analysis"
APP_DESCRIPTION = (
    "Exact and asymptotic outage analysis, power allocation and relay "
    "selection for cognitive two-way decode-and-forward relay networks"
)

# ============================================================================
# SCENARIO SETTINGS
# ============================================================================

SCENARIO_DIR = Path(__file__).resolve().parents[2] / 'scenarios'
FIRST_SETUP_PATH = SCENARIO_DIR / 'first_setup.json'
SECOND_SETUP_PATH = SCENARIO_DIR / 'second_setup.json'

# ============================================================================
# NUMERICAL TOLERANCES
# ============================================================================

RELATIVE_TOLERANCE = 1e-9      # primary-constraint and relay-cap checks
PROBABILITY_TOLERANCE = 1e-12  # clamp window around [0, 1]
PARTITION_TOLERANCE = 1e-9     # decode-set probabilities must sum to one
CASE_EPSILON = 1e-9            # EqualMeans vs DistinctMeans switch
SINGULAR_EPSILON = 1e-9        # removable singularities in the subset expansion
RATIO_EPSILON = 1e-9           # ab = cd branch of the forward power ratio
RATIO_PROJECTION_SLACK = 1e-9

# ============================================================================
# ENUMERATION LIMITS
# ============================================================================

M_MAX = 16  # 2^M decoding sets, 3^M sub-subset terms

# ============================================================================
# MONTE CARLO SETTINGS
# ============================================================================

MIN_TRIALS = 1000
MIN_CONDITIONING_COUNT = 100
MC_BLOCK_SIZE = 2 ** 16
DEFAULT_SEED = 42
DEFAULT_SWEEP_TRIALS = 10 ** 6
DEFAULT_VALIDATION_TRIALS = 10 ** 7
DEFAULT_SIGMA_TOLERANCE = 3.0
HIGH_SNR_NOISE_RATIO = 1e-6  # N0 / P_u used when checking the high-SNR form

# ============================================================================
# ORACLE SETTINGS
# ============================================================================

PA_GRID_RESOLUTION = 401
MIN_GRID_RESOLUTION = 50
ALPHA_GRID_POINTS = 10 ** 4
ALPHA_SEARCH_SWEEPS = 6        # coordinate passes over the relay ratios
QUADRATURE_TOLERANCE = 1e-6
RELAY_QUADRATURE_TOLERANCE = 1e-8
RATIO_GRID_SLACK = 1e-8

# ============================================================================
# SWEEP SETTINGS
# ============================================================================

SWEEP_VARIABLES = ('gamma_u_dB', 'P_th', 'N0_dB')
DEFAULT_RANGES = {
    'gamma_u_dB': (0.0, 60.0, 5.0),
    'P_th': (0.01, 0.2, 0.01),  # P_th = 0 is outside (0, 1)
    'N0_dB': (-10.0, 10.0, 1.0),
}
DEFAULT_PA_COMPARE_RANGE = (-5.0, 3.0, 1.0)
ALLOCATION_MODES = ('uniform', 'lemma')
SELECTION_MODES = ('opportunistic', 'statistical')

# ============================================================================
# OUTPUT SETTINGS
# ============================================================================

CSV_FLOAT_FORMAT = '%.12g'
BASE_COLUMNS = [
    'x', 'M', 'alloc', 'select', 'p_analytic', 'p_asymptotic', 'p_mc',
    'mc_se', 'g', 'forbidden', 'P_s', 'P_d',
]
