"""Exception types raised across the package."""


class ChoquardError(Exception):
    """Base class for all errors raised by this package."""


class GridError(ChoquardError, ValueError):
    pass


class GridMismatchError(ChoquardError, ValueError):
    pass


class ZeroFieldError(ChoquardError, ValueError):
    pass


class PotentialError(ChoquardError, ValueError):
    pass


class NonDifferentiablePotentialError(PotentialError):
    pass


class AsymmetricPotentialError(PotentialError):
    pass


class NoSignChangeError(PotentialError):
    """The sign pattern of ``V + W/2`` required for ``r*`` was not found."""


class DimensionMismatchError(ChoquardError, ValueError):
    pass


class ZeroMassError(ChoquardError, ValueError):
    pass


class NaNEncounteredError(ChoquardError, FloatingPointError):
    pass


class InsufficientTailError(ChoquardError, ValueError):
    pass


class BracketNotFoundError(ChoquardError, RuntimeError):
    pass


class InconclusiveError(ChoquardError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NoConvergenceError(ChoquardError, RuntimeError):
    """An iteration ran out of budget; ``result`` holds its last state."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConstraintHitError(ChoquardError, RuntimeError):
    """The constrained flow crossed the kinetic-energy guard."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class GeometryViolatedError(ChoquardError, ValueError):
    pass


class NoAdmissibleRadiusError(ChoquardError, ValueError):
    pass


class InfiniteNormError(ChoquardError, ValueError):
    pass


class ThetaRangeError(ChoquardError, ValueError):
    pass


class ConfigError(ChoquardError, ValueError):
    pass


class ChecksumMismatchError(ChoquardError, ValueError):
    pass


class FieldFormatError(ChoquardError, ValueError):
    pass
