"""Exception types raised across the package."""


class SSFError(Exception):
    """Base class for all errors raised by ssflab."""


class InvalidGridError(SSFError, ValueError):
    pass


class InvalidPotentialError(SSFError, ValueError):
    pass


class CertificateRejectedError(SSFError, ValueError):
    pass


class SolverFailureError(SSFError, ArithmeticError):
    """Eigensolver output failed its residual or orthonormality check."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateEnergyError(SSFError, ValueError):
    pass


class DomainCoverageError(SSFError, ValueError):
    pass


class ResolutionError(SSFError, ValueError):
    """A sampled curve is too coarse for the requested quadrature."""


class ShiftTooSmallError(SSFError, ValueError):
    pass


class PoleProximityError(SSFError, ArithmeticError):
    pass


class QuadratureError(SSFError, ArithmeticError):
    pass


class BoundaryLimitUnstableError(SSFError, ArithmeticError):
    def __init__(self, message, values=None, spread=None):
        super().__init__(message)
        self.values = values
        self.spread = spread


class PathRefinementError(SSFError, ArithmeticError):
    pass


class InvalidBetaError(SSFError, ValueError):
    pass


class BoxContaminationError(SSFError, ValueError):
    pass


class ExtrapolationError(SSFError, ArithmeticError):
    """Cutoff-radius extrapolation was rejected; ``diagnostics`` holds the fit."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ResonantMatchingError(SSFError, ArithmeticError):
    pass


class RefineGridError(SSFError, ArithmeticError):
    pass


class TruncationError(SSFError, ArithmeticError):
    pass


class ConfigError(SSFError, ValueError):
    pass
