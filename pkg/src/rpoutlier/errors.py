"""Exception types shared across the package."""


class RPOutlierError(Exception):
    """Base class for errors raised by this package."""


class DegenerateProjection(RPOutlierError):
    """The projected sample has zero MADN; the direction must be redrawn."""


class DegenerateData(RPOutlierError):
    """Too many consecutive degenerate projections; the data is rank-deficient."""


class CapExceeded(RPOutlierError):
    """A projection or round budget was exhausted without reaching a decision."""


class BracketFailure(RPOutlierError):
    """Bisection could not bracket the target level."""


class CacheError(RPOutlierError):
    """The calibration cache could not be read or written."""
