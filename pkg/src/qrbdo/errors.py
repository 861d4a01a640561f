"""Exception types raised across the package."""


class QrbdoError(Exception):
    """Base class for all package errors."""


class ParameterError(QrbdoError, ValueError):
    """Invalid distribution parameterization (non-positive mean or cov, ...)."""


class NumericError(QrbdoError, ArithmeticError):
    """A numerical sub-problem (root finding, factorization) did not converge."""


class DomainError(QrbdoError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(QrbdoError, ValueError):
    """Inconsistent or incomplete problem/run configuration."""


class FitError(QrbdoError, ArithmeticError):
    """Kriging fit failed (correlation matrix not positive definite)."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class ModelEvaluationError(QrbdoError, RuntimeError):
    """The true performance model failed or returned non-finite values."""
