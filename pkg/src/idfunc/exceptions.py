"""Exception types raised across the package."""


class IdFuncError(Exception):
    """Base class for all package errors."""


class UnsupportedMomentError(IdFuncError, ValueError):
    """A required moment does not exist for the distribution."""


class DimensionMismatchError(IdFuncError, ValueError):
    pass


class SingularBatteryError(IdFuncError, ArithmeticError):
    """Expected identification vectors of a battery are not linearly independent."""


class InconsistentPairError(IdFuncError, ArithmeticError):
    """Held-out residual of a recovered matrix exceeds the tolerance.

    The partially computed result is attached as ``result`` so callers can
    still report the matrix and residual.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateSimplexError(IdFuncError, ArithmeticError):
    pass


class NonConvergenceError(IdFuncError, RuntimeError):
    pass


class EmptyRootError(IdFuncError, ValueError):
    """The empirical moment has no sign change inside the action domain."""


class SingularCovarianceError(IdFuncError, ArithmeticError):
    pass


class InsufficientDataError(IdFuncError, ValueError):
    pass
