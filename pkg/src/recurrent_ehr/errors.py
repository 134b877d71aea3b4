"""Exception hierarchy.

Data problems derive from ``ValueError``; numerical failures during fitting
derive from :class:`FittingError` so callers (and the command line) can tell
the two apart.
"""


class CohortError(ValueError):
    """Malformed or inconsistent input data."""


class FittingError(RuntimeError):
    """Base class for numerical failures of an estimator."""


class NoEventsError(FittingError):
    pass


class EmptyRiskSetError(FittingError):
    pass


class SingularInformationError(FittingError):
    pass


class ZeroDenominatorError(FittingError):
    """A kernel window held no usable observations at an evaluation time."""

    def __init__(self, t, window_count, message=None):
        self.t = float(t)
        self.window_count = int(window_count)
        if message is None:
            message = (f"zero smoothing denominator at t={self.t:.6g} "
                       f"(window_count={self.window_count})")
        super().__init__(message)


class ConvergenceError(FittingError):
    """Newton iterations stopped without reaching the score tolerance.

    The last iterate is kept on the exception for diagnostics.
    """

    def __init__(self, message, x=None, score_norm=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.score_norm = score_norm
        self.iterations = iterations


class ThinningBoundError(RuntimeError):
    """An intensity exceeded its declared envelope during thinning."""


class BootstrapError(RuntimeError):
    pass
