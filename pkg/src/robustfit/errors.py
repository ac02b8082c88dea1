"""Exception types raised across the package."""


class RobustFitError(Exception):
    """Base class for errors raised by robustfit."""


class DomainError(RobustFitError, ValueError):
    """An argument lies outside the domain of a formula (e.g. x <= 0, sigma2 <= 0)."""


class DegenerateDataError(RobustFitError, ValueError):
    """The data cannot identify the requested model."""


class SingularMatrixError(RobustFitError, ArithmeticError):
    """A matrix that must be inverted is singular or numerically rank deficient."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class ConvergenceError(RobustFitError, RuntimeError):
    """The optimizer stopped without meeting its convergence criterion.

    The partially optimized result is attached as ``result`` and the
    per-stage trace as ``trace``.
    """

    def __init__(self, message, result=None, trace=None):
        super().__init__(message)
        self.result = result
        self.trace = trace if trace is not None else []


class DataFormatError(RobustFitError, ValueError):
    """A CSV input could not be parsed or lacks a requested column/region."""


class ConfigError(RobustFitError, ValueError):
    """A run configuration failed validation."""
