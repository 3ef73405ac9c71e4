"""
Error Types
Exception hierarchy shared by the analysis, allocation and simulation services
"""

from typing import Optional


class RelayAnalysisError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(RelayAnalysisError, ValueError):
    """Invalid input: bad rates, non-finite dB values, missing links, bad ranges."""


class UndefinedPowerCapError(ValidationError):
    """Primary rate of zero leaves the relay and ST power caps unbounded."""

    def __init__(self, message: Optional[str] = None):
        super().__init__(
            message
            or "relay power cap is undefined for a zero primary rate "
               "(Delta_u = 0): the primary tolerates unbounded interference"
        )


class ScenarioFileError(ValidationError):
    """Scenario file could not be read or parsed."""

    def __init__(self, path, message: str, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        location = f"{path}"
        if line is not None:
            location += f":{line}"
            if column is not None:
                location += f":{column}"
        super().__init__(f"{location}: {message}")


class DomainError(RelayAnalysisError, ValueError):
    """Operation called outside its domain (empty decoding set, no relays)."""


class CapacityError(RelayAnalysisError):
    """Relay count exceeds the exact-enumeration limit."""

    def __init__(self, num_relays: int, limit: int):
        self.num_relays = num_relays
        self.limit = limit
        super().__init__(
            f"M = {num_relays} exceeds the exact enumeration limit M_max = {limit}: "
            f"the subset expansion needs 2^M decoding sets and 3^M sub-subset "
            f"terms ({3 ** num_relays:,} here); use the Monte Carlo estimator instead"
        )


class NumericalConsistencyError(RelayAnalysisError, ArithmeticError):
    """A closed form produced a non-finite value or a probability outside [0, 1]."""


class SecondaryForbidden(RelayAnalysisError):
    """g = 1: the primary QoS constraint leaves no secondary power budget."""

    def __init__(self, g: float = 1.0):
        self.g = g
        super().__init__(
            "secondary transmission is forbidden: the primary outage constraint leaves no power "
            "budget (g = 1)"
        )


class InsufficientConditioning(RelayAnalysisError):
    """A conditional Monte Carlo estimate saw too few conditioning events."""

    def __init__(self, observed: int, required: int, target: str = ""):
        self.observed = observed
        self.required = required
        super().__init__(
            f"conditioning event for {target or 'estimate'} occurred {observed} "
            f"times; at least {required} are needed"
        )
