"""Exception types shared across the package."""


class HistflowError(Exception):
    """Base class for errors raised by this package."""


class InvalidPointError(HistflowError, ValueError):
    """A trait point does not belong to the space or region it was used with."""


class DomainError(HistflowError, ValueError):
    """A numeric argument is outside its admissible domain."""


class ConfigError(HistflowError, ValueError):
    """A model or experiment configuration violates its declared constraints."""


class CapacityError(HistflowError, RuntimeError):
    """A hard capacity limit (event budget, jump count, resample cap) was hit."""


class HistoryError(HistflowError, RuntimeError):
    """The event history does not cover the time range required by a query."""


class CouplingViolationError(HistflowError, RuntimeError):
    """A coupled construction encountered a rate ordering it relies on being broken."""
