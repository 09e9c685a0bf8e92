"""Exception types shared by all modules."""


class CSBPError(Exception):
    """Base class for errors raised by this package."""


class NumericFailure(CSBPError, ArithmeticError):
    """A numerical routine did not reach its tolerance.

    ``estimate`` carries the achieved error estimate when one is known.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DomainError(CSBPError, ValueError):
    """Arguments outside the domain where an operation is defined."""


class RangeError(CSBPError, ValueError):
    """Query beyond the range covered by a sampled path."""


class InternalConsistencyError(CSBPError, RuntimeError):
    """An internal bound or invariant was violated during a run."""


class ConfigError(CSBPError, ValueError):
    """Invalid experiment or mechanism configuration."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
