"""Exception hierarchy shared across the toolkit.

CLI exit codes: UsageError -> 1, DataError -> 2, NumericError -> 3.
"""


class GestureFlowError(Exception):
    """Base class for all toolkit errors."""


class UsageError(GestureFlowError):
    """Bad invocation or bad configuration."""

    exit_code = 1


class ConfigurationError(UsageError):
    """A config value is structurally valid but unusable (e.g. too many mel bins)."""


class DataError(GestureFlowError):
    """Input data is missing, malformed, or inconsistent."""

    exit_code = 2


class BvhParseError(DataError):
    """Malformed BVH input; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(GestureFlowError):
    """Caller handed in values that violate a documented precondition."""

    exit_code = 2


class NumericError(GestureFlowError):
    """Non-finite values or diverging optimization."""

    exit_code = 3
