"""Services module for outage analysis, allocation and simulation."""

from .outage_service import *
from .allocation_service import *
from .asymptotic_service import *
from .montecarlo_service import *
from .oracle_service import *
from .data_service import *
from .experiment_service import *
