"""Exception hierarchy shared by every horen module."""


class HorenError(Exception):
    """Base class for all library errors."""


class ZeroNorm(HorenError, ValueError):
    """A vector is too close to zero to define a direction."""


class DimensionMismatch(HorenError, ValueError):
    pass


class EmptyCodebook(HorenError, ValueError):
    pass


class NonFiniteLoss(HorenError, FloatingPointError):
    """A loss, energy or iterate became NaN or infinite."""


class FormatError(HorenError):
    """A serialized codebook is malformed, truncated or corrupted."""


class InvalidConfig(HorenError, ValueError):
    pass


class ResourceBudgetExceeded(HorenError, RuntimeError):
    pass
