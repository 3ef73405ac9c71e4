"""Command handlers for the command-line entry point."""

from .allocate import run_allocate_command
from .pa_compare import run_pa_compare_command
from .sweep import run_sweep_command
from .validate import run_validate_command
