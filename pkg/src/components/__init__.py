"""Text components for terminal reports."""

from .report_tables import *
