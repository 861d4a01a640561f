"""Problem definition shared by the optimizer, the benchmarks and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distributions import ProbabilisticModel
from .errors import ConfigurationError, ModelEvaluationError


@dataclass(frozen=True)
class Constraint:
    """Hard constraint Q_alpha(response(X|d, Z)) <= threshold.

    ``response`` maps an (n, s_d + s_z) array of physical realizations to
    n responses.  A capacity-minus-demand limit state g with failure
    {g <= 0} is expressed as ``response = -g``, ``threshold = 0``.
    """

    name: str
    response: Callable[[np.ndarray], np.ndarray]
    threshold: float = 0.0
    alpha: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"constraint {self.name!r}: alpha must lie in (0, 1)")
        if not np.isfinite(self.threshold):
            raise ConfigurationError(f"constraint {self.name!r}: threshold must be finite")


@dataclass(frozen=True)
class SoftConstraint:
    """Cheap analytical constraint fn(d) <= 0 on the design vector."""

    name: str
    fn: Callable[[np.ndarray], float]


@dataclass(frozen=True)
class Reference:
    """Published reference solution used for acceptance checks."""

    d_star: tuple
    cost: float
    calls: float | None = None
    source: str = ""


@dataclass(frozen=True)
class Problem:
    name: str
    model: ProbabilisticModel
    cost: Callable[[np.ndarray], float]
    constraints: tuple
    soft: tuple = ()
    d0: tuple | None = None
    reference: Reference | None = None
    brute_force: Reference | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "soft", tuple(self.soft))
        if not self.constraints:
            raise ConfigurationError("a problem needs at least one hard constraint")
        if self.d0 is not None:
            self.model.check_design(np.asarray(self.d0, dtype=float))

    @property
    def n_constraints(self):
        return len(self.constraints)

    @property
    def thresholds(self):
        return np.array([c.threshold for c in self.constraints])

    @property
    def alphas(self):
        return np.array([c.alpha for c in self.constraints])

    def soft_values(self, d):
        return np.array([float(s.fn(d)) for s in self.soft])

    def start(self):
        if self.d0 is not None:
            return np.asarray(self.d0, dtype=float)
        return 0.5 * (self.model.design_lower + self.model.design_upper)


def evaluate_responses(constraints, phys):
    """Evaluate every true model at physical points; returns (n, n_h)."""
    phys = np.atleast_2d(phys)
    out = np.empty((phys.shape[0], len(constraints)))
    for l, c in enumerate(constraints):
        try:
            y = np.asarray(c.response(phys), dtype=float).reshape(-1)
        except Exception as exc:  # the user's model may raise anything
            raise ModelEvaluationError(f"model {c.name!r} failed: {exc}") from exc
        if y.size != phys.shape[0] or not np.all(np.isfinite(y)):
            raise ModelEvaluationError(f"model {c.name!r} returned non-finite or misshaped output")
        out[:, l] = y
    return out
