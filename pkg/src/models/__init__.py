"""Domain types and errors for the relay network model."""

from .errors import *
from .network import *
