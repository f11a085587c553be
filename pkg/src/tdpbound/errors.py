"""Exception types raised by the package."""


class TdpError(ValueError):
    """Base class for input errors."""


class ParameterError(TdpError):
    """A parameter lies outside its documented range."""


class DomainError(TdpError):
    """A probability or threshold argument lies outside its domain."""


class DimensionError(TdpError):
    """Lengths of related inputs do not agree."""


class ValidityError(TdpError):
    """A constructed critical vector is not non-decreasing in [0, 1]."""


class SizeError(TdpError):
    """The problem is too large for an exhaustive algorithm."""
