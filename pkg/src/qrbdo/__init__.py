"""Quantile-based reliability-based design optimization with adaptive Kriging."""

from .distributions import DesignVariable, Kind, ProbabilisticModel, make_marginal
from .errors import (ConfigurationError, DomainError, ModelEvaluationError, ParameterError,
                     QrbdoError)
from .optimizer import RbdoConfig, RbdoResult, run_qrbdo
from .problem import Constraint, Problem, Reference, SoftConstraint

__all__ = [
    "Constraint", "ConfigurationError", "DesignVariable", "DomainError", "Kind",
    "ModelEvaluationError", "ParameterError", "ProbabilisticModel", "Problem", "QrbdoError",
    "RbdoConfig", "RbdoResult", "Reference", "SoftConstraint", "make_marginal", "run_qrbdo",
]
