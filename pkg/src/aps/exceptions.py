"""Exception types raised by the aps library."""


class ApsError(Exception):
    """Base class for all aps errors."""


class InputError(ApsError, ValueError):
    """An argument violated a documented precondition."""


class UnsupportedConfigError(ApsError):
    """A configuration combination the library deliberately does not support."""


class DegenerateTruncationError(ApsError):
    """Truncation interval carries too little probability mass to normalize."""


class InfeasibleBoxError(ApsError):
    """Per-symbol boxes do not intersect the probability simplex."""


class RadiusTooSmallError(ApsError):
    """Rejection sampler acceptance rate collapsed; use a direct perturbation mode."""
