"""Exception hierarchy shared by all modules."""


class ProxEscapeError(Exception):
    """Base class for library errors."""


class ParameterError(ProxEscapeError, ValueError):
    """A parameter lies outside the range where an operation is defined."""


class PreconditionError(ProxEscapeError, ValueError):
    """An input violates an operation's precondition (wrong cone, not a fixed point, ...)."""


class CapabilityError(ProxEscapeError, NotImplementedError):
    """The requested computation is not available for this problem."""


class ConvergenceError(ProxEscapeError, RuntimeError):
    """An iterative inner solver stopped before meeting its tolerance.

    Attributes
    ----------
    best : ndarray or None
        Best iterate found before giving up.
    residual : float
        Residual of ``best`` at termination.
    partial_record : object or None
        Set by the iteration runner to the trajectory accumulated before the
        failure.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.partial_record = None


class CertificateError(ProxEscapeError, AssertionError):
    """A runtime certificate (descent, relative error, closed form match) failed."""

    def __init__(self, message, iteration=None, slack=None):
        super().__init__(message)
        self.iteration = iteration
        self.slack = slack
