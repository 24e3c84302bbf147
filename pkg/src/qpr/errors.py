"""Exception hierarchy shared by all qpr modules."""


class QPRError(Exception):
    """Base class for every error raised by this package."""


class InvalidModelError(QPRError, ValueError):
    pass


class SizeMismatchError(QPRError, ValueError):
    pass


class ResourceError(QPRError):
    """Request exceeds a desk-scale ceiling (qubits, RDM size, parameters)."""


class ConvergenceError(QPRError):
    """Iterative solver ran out of iterations.

    ``best`` carries the best iterate found so far so callers can inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NumericalConsistencyError(QPRError):
    pass


class StepFailure(QPRError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrackingDivergenceError(QPRError):
    pass


class TrainingDivergenceError(QPRError):
    pass


class InvalidThresholdError(QPRError, ValueError):
    pass


class ConfigError(QPRError, ValueError):
    pass
