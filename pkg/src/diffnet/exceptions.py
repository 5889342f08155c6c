"""Exception hierarchy shared by the estimators and the command line."""


class DiffNetError(Exception):
    """Base class for all errors raised by :mod:`diffnet`."""


class InvalidArgumentError(DiffNetError, ValueError):
    pass


class InvalidModelError(DiffNetError, ValueError):
    """A generated or supplied ground-truth model is numerically unusable."""


class SampleTooSmallError(DiffNetError, ValueError):
    pass


class SingularCovarianceError(DiffNetError, ValueError):
    pass


class DivergenceError(DiffNetError, FloatingPointError):
    """Raised when an iterate stops being finite.

    Attributes
    ----------
    iteration : int
        Index of the iteration that produced the non-finite value.
    trace : list of float
        Objective values recorded before the failure.
    """

    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.trace = list(trace) if trace is not None else []


class SolverStalledError(DiffNetError, RuntimeError):
    pass


# Errors of numerical origin; the CLI maps these to exit code 2.
NUMERICAL_ERRORS = (
    InvalidModelError,
    SampleTooSmallError,
    SingularCovarianceError,
    DivergenceError,
    SolverStalledError,
)
