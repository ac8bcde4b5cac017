"""Exception hierarchy shared by all asymflow modules."""


class AsymflowError(Exception):
    """Base class for library errors."""


class DomainError(AsymflowError, ValueError):
    """A point lies outside the domain of the space."""


class ParameterError(AsymflowError, ValueError):
    """An argument is outside its admissible range."""


class UnsupportedOperationError(AsymflowError):
    """The operation needs structure the inputs do not carry."""


class DegenerateInputError(AsymflowError, ValueError):
    """Input is well-typed but degenerate (e.g. a zero-length curve)."""


class ConvergenceError(AsymflowError):
    """Inner solver failed; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class CoercivityError(AsymflowError):
    """The inner objective looks unbounded below for this step size."""


class SchemeError(AsymflowError):
    """A minimizing-movement step failed; ``partial`` is the solution so far."""

    def __init__(self, message, partial=None, step=None):
        super().__init__(message)
        self.partial = partial
        self.step = step


class ConfigError(AsymflowError):
    """Unreadable or inconsistent experiment configuration."""
