"""(1+1)-CMA-ES with constraint handling by active covariance reduction.

One parent generates one offspring per step.  Success is ruled by a
smoothed success rate (target 2/11); the covariance factor A (C = A A^T)
gets a rank-one update along the evolution path on success.  When an
offspring violates a constraint, a faded direction vector is kept per
constraint and A is shrunk along the violated directions, which lowers
the probability of sampling there again (Arnold and Hansen, GECCO 2012).

While the parent itself is infeasible, offspring are ranked by total
normalized violation first and cost second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DomainError, NumericError


@dataclass(frozen=True)
class CmaParams:
    damping: float
    c_path: float
    c_succ: float
    p_target: float
    c_cov: float
    c_constraint: float
    beta: float

    @classmethod
    def default(cls, n, **overrides):
        p = dict(damping=1.0 + n / 2.0, c_path=2.0 / (n + 2.0), c_succ=1.0 / 12.0,
                 p_target=2.0 / 11.0, c_cov=2.0 / (n * n + 6.0), c_constraint=1.0 / (n + 2.0),
                 beta=0.1 / (n + 2.0))
        p.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**p)


@dataclass(frozen=True)
class Evaluation:
    """Outcome of evaluating one candidate.

    ``violations`` holds one entry per constraint (positive means
    violated); hard constraints not evaluated because a soft one failed
    are reported as 0 with ``complete=False``.
    """

    cost: float
    violations: np.ndarray
    complete: bool = True
    info: object = None

    @property
    def feasible(self):
        return self.complete and bool(np.all(self.violations <= 0))

    @property
    def total_violation(self):
        return float(np.maximum(self.violations, 0.0).sum())


@dataclass(frozen=True)
class CmaState:
    current: np.ndarray
    step_size: float
    cov_chol: np.ndarray  # factor A with C = A A^T (not kept triangular)
    success_rate: float
    path: np.ndarray
    constraint_vectors: np.ndarray  # (n_constraints, n)
    iteration: int
    fitness: Evaluation

    @classmethod
    def initial(cls, x0, step_size, n_constraints, fitness, p_target=2.0 / 11.0):
        x0 = np.asarray(x0, dtype=float)
        n = x0.size
        if not step_size > 0:
            raise DomainError("step size must be positive")
        return cls(x0.copy(), float(step_size), np.eye(n), p_target, np.zeros(n),
                   np.zeros((n_constraints, n)), 0, fitness)


def _better(off: Evaluation, par: Evaluation):
    if par.feasible:
        return off.feasible and off.cost <= par.cost
    if not off.complete:
        return False
    if off.feasible:
        return True
    return off.total_violation < par.total_violation


def _adapt_step(state, params, success):
    p = (1.0 - params.c_succ) * state.success_rate + (params.c_succ if success else 0.0)
    sigma = state.step_size * math.exp((p - params.p_target) / (params.damping * (1.0 - params.p_target)))
    return p, sigma


def cma_step(state: CmaState, evaluate: Callable[[np.ndarray], Evaluation], rng,
             params: CmaParams | None = None):
    """One offspring: sample, evaluate, select, adapt.

    Parameters
    ----------
    state : CmaState
    evaluate : callable
        Maps a candidate to an :class:`Evaluation`.  Exceptions propagate
        and leave ``state`` untouched (states are immutable).
    rng : numpy.random.Generator
    params : CmaParams, optional

    Returns
    -------
    (CmaState, bool, np.ndarray, Evaluation)
        New state, whether the offspring replaced the parent, the
        offspring itself and its evaluation.
    """
    n = state.current.size
    params = params or CmaParams.default(n)
    z = rng.standard_normal(n)
    az = state.cov_chol @ z
    y = state.current + state.step_size * az
    ev = evaluate(y)
    nxt = replace(state, iteration=state.iteration + 1)

    violated = np.flatnonzero(ev.violations > 0)
    # constraint learning: only against a feasible parent, or for any
    # violation that short-circuited the evaluation
    if violated.size and (state.fitness.feasible or not ev.complete):
        v = state.constraint_vectors.copy()
        v[violated] = (1.0 - params.c_constraint) * v[violated] + params.c_constraint * az
        A = state.cov_chol
        Ainv = np.linalg.inv(A)
        upd = np.zeros_like(A)
        for j in violated:
            w = Ainv @ v[j]
            ww = w @ w
            if ww > 0:
                upd += np.outer(v[j], w) / ww
        A = A - params.beta / violated.size * upd
        if not np.all(np.isfinite(A)):
            raise NumericError("covariance factor became non-finite")
        return replace(nxt, cov_chol=A, constraint_vectors=v), False, y, ev

    success = _better(ev, state.fitness)
    p, sigma = _adapt_step(state, params, success)
    nxt = replace(nxt, success_rate=p, step_size=sigma)
    if not success:
        return nxt, False, y, ev

    c = params.c_path
    s = (1.0 - c) * state.path + math.sqrt(c * (2.0 - c)) * az
    A = nxt.cov_chol
    w = np.linalg.solve(A, s)
    ww = float(w @ w)
    a = 1.0 - params.c_cov
    if ww > 0:
        coef = math.sqrt(a) / ww * (math.sqrt(1.0 + (1.0 - a) / a * ww) - 1.0)
        A = math.sqrt(a) * A + coef * np.outer(s, w)
    if not np.all(np.isfinite(A)):
        raise NumericError("covariance factor became non-finite")
    return replace(nxt, current=y, path=s, cov_chol=A, fitness=ev), True, y, ev
