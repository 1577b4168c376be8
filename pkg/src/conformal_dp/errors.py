"""Exception types raised across the package."""


class ConformalDPError(Exception):
    """Base class for all package errors."""


class NumericError(ConformalDPError):
    """A numerical routine failed or received invalid numeric input."""


class DomainError(NumericError, ValueError):
    """A point or tangent vector violates its manifold invariants."""


class CutLocusError(NumericError):
    """log map requested between (near) antipodal sphere points."""


class BallTooLarge(NumericError):
    """Data ball radius violates r < r* for a positively curved manifold."""


class BandwidthTooLarge(NumericError, ValueError):
    pass


class AlreadySanitized(ConformalDPError):
    pass


class NonpositiveBudget(ConformalDPError, ValueError):
    pass


# sanitizer-facing alias
NonpositiveEpsilon = NonpositiveBudget


class DisconnectedGraph(NumericError):
    """The k-NN graph has more than one connected component."""


class CGDivergence(NumericError):
    pass


class DegenerateImage(NumericError):
    pass


class ConfigError(ConformalDPError, ValueError):
    pass
