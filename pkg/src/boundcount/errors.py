"""Exception hierarchy shared by all modules."""


class BoundcountError(Exception):
    """Base class; ``origin`` names the module that raised it."""

    origin = "boundcount"


class ParameterError(BoundcountError, ValueError):
    origin = "kernel"


class DomainError(BoundcountError, ValueError):
    origin = "kernel"


class ResolutionError(BoundcountError, ValueError):
    origin = "kernel"


class UnboundedSublevelError(BoundcountError, ArithmeticError):
    origin = "kernel"


class NoCatalogError(BoundcountError, LookupError):
    origin = "gfunction"


class DivergentGError(BoundcountError, ArithmeticError):
    """The G function is infinite for this symbol (weak-coupling regime)."""

    origin = "bounds"

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class AlphaRangeError(BoundcountError, ValueError):
    origin = "bounds"


class WindowTooSmallError(BoundcountError, ValueError):
    origin = "oracle"


class FactorizationError(BoundcountError, ArithmeticError):
    origin = "oracle"


class ConvergenceError(BoundcountError, ArithmeticError):
    origin = "oracle"


class SupportTooLargeError(BoundcountError, ValueError):
    origin = "oracle"


class ConstructionError(BoundcountError, ValueError):
    origin = "existence"


class DuplicatePointsError(BoundcountError, ValueError):
    origin = "existence"


class ConfigError(BoundcountError, ValueError):
    origin = "cli"
