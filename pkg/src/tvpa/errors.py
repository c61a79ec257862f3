"""Exception types shared across the package."""


class TvpaError(Exception):
    """Base class for all package errors."""


class DomainError(TvpaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CapacityError(TvpaError):
    """A request is too large (enumeration) or too small (interval length)."""


class DegenerateError(TvpaError, ArithmeticError):
    """A variance or derivative needed for standardization vanishes."""


class ConfigError(TvpaError, ValueError):
    """Invalid schedule, design or command-line configuration."""


class TraceFormatError(TvpaError, ValueError):
    """A trace violates its structural invariants or cannot be parsed."""


class EstimationError(TvpaError):
    """An interval estimate failed; carries the interval for context."""

    def __init__(self, message, interval=None, index=None):
        super().__init__(message)
        self.interval = interval
        self.index = index
