"""Exception types shared across the package."""


class BlinError(Exception):
    """Base class for all package errors."""


class SpecificationError(BlinError, ValueError):
    """Belief specification is malformed or inconsistent.

    ``violations`` carries every problem found, not only the first.
    """

    def __init__(self, message, violations=None):
        self.violations = list(violations) if violations else [message]
        super().__init__(message)


class DataError(BlinError, ValueError):
    """Observed data could not be used (non-finite values, bad shape)."""


class InsufficientDataError(DataError):
    """Too few observations for the requested statistic."""


class ModelError(BlinError, ValueError):
    """A diagram model violates its invariants."""


class DiagnosticError(BlinError):
    """A diagnostic was escalated to a failure (strict mode)."""
