"""Exception hierarchy shared across the package."""


class DidaError(Exception):
    """Base class for all package errors."""


class DimensionError(DidaError):
    """Operand shapes do not conform."""


class ContractError(DidaError):
    """A call violates an operation's contract (non-shape)."""


class ConfigError(DidaError):
    """Invalid or unknown configuration."""


class DomainError(DidaError):
    """Arguments outside the operation's domain."""


class NumericError(DidaError):
    """Non-finite values or solver breakdown."""


class CapacityError(DidaError):
    """Requested work exceeds an explicit budget."""

    def __init__(self, message, required_budget=None):
        super().__init__(message)
        self.required_budget = required_budget


class IngestionError(DidaError):
    """Unreadable or unusable input file."""


class FormatError(DidaError):
    """Malformed artifact (checkpoint, report input, ...)."""
