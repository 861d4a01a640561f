"""Quantile-based RBDO driver.

Pipeline: optimized-LHS initial DoE in the augmented space, Kriging fit,
global enrichment, then a constrained (1+1)-CMA-ES in the normalized
design box where every offspring gets Monte Carlo surrogate quantiles
(with local enrichment whenever the quantile bounds are too wide), and a
final gradient-based refinement on the frozen-noise surrogate quantiles.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .cma import CmaParams, CmaState, Evaluation, cma_step
from .distributions import sample_joint
from .doe import optimize_lhs
from .enrichment import U_STOP, SurrogateSet, global_stage, local_stage_step
from .errors import ConfigurationError
from .kriging import THETA_BOUNDS
from .quantile import estimate_quantiles, quantile_index
from .space import DEFAULT_ALPHA, build_augmented

# keys of the independent random streams derived from the run seed
DOE, GLOBAL, CMA, QUANT, FIT, LOCAL, REFINE = 1, 2, 3, 4, 5, 6, 7

# SLSQP satisfies active constraints only to about this (normalized) level
FEAS_TOL = 1e-6


def stream(seed, *keys):
    return np.random.default_rng([int(seed), *keys])


@dataclass(frozen=True)
class RbdoConfig:
    """Run settings.  See ``docs/config.md`` for the meaning of each key."""

    n_initial: int = 10
    lhs_restarts: int = 10
    eta_bar: float = 0.3
    n_candidates: int | None = None  # default 100 per design dimension
    n_mc_global: int = 1000
    k_global: int = 1
    max_global_iter: int = 50
    u_stop: float = U_STOP
    eta_q_schedule: tuple = (1.0, 0.5, 0.1)
    k_local: int = 1
    max_local_rounds: int = 10
    n_mc: int = 10_000
    max_iter: int = 150
    stagnation_tol: float = 1e-6
    stagnation_window: int = 30
    sigma0: float = 0.3
    cma: dict = field(default_factory=dict)
    enrich_only_on_improvement: bool = False
    refine: bool = True
    refine_eps: float = 1e-3
    refine_maxiter: int = 100
    n_starts: int = 10
    n_starts_refit: int = 3
    theta_bounds: tuple = THETA_BOUNDS
    alpha_aug: float = DEFAULT_ALPHA
    n_scale: int = 10_000
    d0: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "eta_q_schedule", tuple(float(v) for v in self.eta_q_schedule))
        object.__setattr__(self, "theta_bounds", tuple(float(v) for v in self.theta_bounds))
        if self.d0 is not None:
            object.__setattr__(self, "d0", tuple(float(v) for v in self.d0))
        object.__setattr__(self, "cma", dict(self.cma))
        self.validate()

    def validate(self):
        positive = ["eta_bar", "u_stop", "sigma0", "refine_eps", "alpha_aug"]
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key} must be positive")
        counts = ["n_initial", "lhs_restarts", "n_mc_global", "k_global", "k_local", "n_mc",
                  "n_starts", "n_starts_refit", "n_scale", "stagnation_window"]
        for key in counts:
            if int(getattr(self, key)) < 1:
                raise ConfigurationError(f"{key} must be >= 1")
        for key in ["max_global_iter", "max_local_rounds", "max_iter", "refine_maxiter"]:
            if int(getattr(self, key)) < 0:
                raise ConfigurationError(f"{key} must be >= 0")
        s = self.eta_q_schedule
        if not s or any(v <= 0 for v in s):
            raise ConfigurationError("eta_q_schedule levels must be positive")
        if any(b > a for a, b in zip(s, s[1:])):
            raise ConfigurationError("eta_q_schedule must be non-increasing")
        if self.n_initial < 2:
            raise ConfigurationError("n_initial must be >= 2")
        unknown = set(self.cma) - {f.name for f in dataclasses.fields(CmaParams)}
        if unknown:
            raise ConfigurationError(f"unknown cma key(s) {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config key(s) {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def eta_q_at(self, iteration):
        """Annealed local threshold: the schedule levels split the budget evenly."""
        s = self.eta_q_schedule
        if self.max_iter == 0:
            return s[-1]
        return s[min(len(s) - 1, iteration * len(s) // self.max_iter)]


@dataclass
class RbdoResult:
    problem: str
    seed: int
    d_star: np.ndarray
    cost: float
    feasible: bool
    quantiles: list
    true_model_calls: int
    history: list
    doe_final: list
    d_cma: np.ndarray
    cost_cma: float
    refined: bool
    global_stage: object
    local_logs: list
    stop_reason: str
    config: RbdoConfig
    doe_stages: list
    calls_by_stage: dict
    space: object = None

    def summary(self):
        return {
            "problem": self.problem,
            "seed": self.seed,
            "d_star": self.d_star.tolist(),
            "cost": self.cost,
            "feasible": self.feasible,
            "true_model_calls": self.true_model_calls,
            "calls_by_stage": self.calls_by_stage,
            "d_cma": self.d_cma.tolist(),
            "cost_cma": self.cost_cma,
            "refined": self.refined,
            "iterations": len(self.history) - 1,
            "stop_reason": self.stop_reason,
            "quantiles": [q.to_dict() for q in self.quantiles],
            "global_eta_history": list(self.global_stage.eta_history),
            "global_capped": self.global_stage.capped,
            "config": self.config.to_dict(),
        }


class _Runner:
    """Holds the mutable pieces of one run (surrogates, logs, counters)."""

    def __init__(self, problem, cfg, seed):
        self.problem, self.cfg, self.seed = problem, cfg, seed
        self.pm = problem.model
        self.lo, self.width = self.pm.design_lower, self.pm.design_upper - self.pm.design_lower
        self.n_h = problem.n_constraints
        self.local_logs = []
        self.enriched = 0

    def to_design(self, y):
        return self.lo + np.asarray(y) * self.width

    def soft_violations(self, y):
        box = np.concatenate([-y, y - 1.0])
        d = self.to_design(np.clip(y, 0.0, 1.0))
        return np.concatenate([box, self.problem.soft_values(d)])

    def quantiles(self, d, iteration, enrich):
        cfg, surr = self.cfg, self.surr
        alphas = self.problem.alphas
        for rnd in range(cfg.max_local_rounds + 1):
            phys = sample_joint(self.pm, d, cfg.n_mc, stream(self.seed, QUANT, iteration, rnd))
            ests, smp = estimate_quantiles(surr.models, alphas, surr.space, phys, surr.normalizers())
            if not enrich or rnd == cfg.max_local_rounds:
                break
            lg = local_stage_step(surr, ests, smp, cfg.eta_q_at(iteration), cfg.k_local,
                                  stream(self.seed, LOCAL, iteration, rnd), iteration)
            if lg is None:
                break
            self.local_logs.append(lg)
            self.enriched += lg.added_points.shape[0]
        return ests

    def evaluate(self, y, iteration, parent=None):
        cost = float(self.problem.cost(self.to_design(np.clip(y, 0.0, 1.0))))
        soft = self.soft_violations(y)
        hard = np.zeros(self.n_h)
        if np.any(soft > 0):
            return Evaluation(cost, np.concatenate([soft, hard]), complete=False)
        d = self.to_design(y)
        enrich = True
        if self.cfg.enrich_only_on_improvement and parent is not None and parent.feasible:
            enrich = cost < parent.cost
        ests = self.quantiles(d, iteration, enrich)
        norm = self.surr.normalizers()
        hard = np.array([(e.q - c.threshold) / norm[l]
                         for l, (e, c) in enumerate(zip(ests, self.problem.constraints))])
        return Evaluation(cost, np.concatenate([soft, hard]), True, ests)

    def row(self, iteration, y, ev, accepted, step, calls):
        ests = ev.info or []
        r = {"iter": iteration, "d": self.to_design(y).tolist(), "cost": ev.cost,
             "feasible": ev.feasible, "accepted": bool(accepted), "enriched": self.enriched,
             "calls": calls, "step_size": step, "eta_bar_q": self.cfg.eta_q_at(iteration),
             "q": [], "q_lo": [], "q_hi": [], "eta_q": []}
        for l in range(self.n_h):
            e = ests[l] if ests else None
            r["q"].append(e.q if e else math.nan)
            r["q_lo"].append(e.q_lo if e else math.nan)
            r["q_hi"].append(e.q_hi if e else math.nan)
            r["eta_q"].append(e.eta_q if e else math.nan)
        self.enriched = 0
        return r


def run_qrbdo(problem, config=None, seed=0):
    """Solve min cost(d) s.t. Q_alpha_k(M_k(X|d, Z)) <= g_bar_k with
    adaptive Kriging surrogates.

    Parameters
    ----------
    problem : Problem
    config : RbdoConfig, optional
    seed : int or numpy.random.Generator
        All random streams are derived from this seed, so identical
        (config, seed) pairs give identical results.

    Returns
    -------
    RbdoResult
    """
    cfg = config or RbdoConfig()
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**62))
    seed = int(seed)
    pm = problem.model
    for c in problem.constraints:
        quantile_index(cfg.n_mc, c.alpha)
    d0 = np.asarray(cfg.d0 if cfg.d0 is not None else problem.start(), dtype=float)
    pm.check_design(d0)

    run = _Runner(problem, cfg, seed)
    space = build_augmented(pm, cfg.alpha_aug, cfg.alpha_aug)
    x0 = optimize_lhs(cfg.n_initial, space.dim, cfg.lhs_restarts, stream(seed, DOE)).points
    surr = SurrogateSet.initialize(problem.constraints, space, x0, seed,
                                   theta_bounds=cfg.theta_bounds, n_starts=cfg.n_starts,
                                   n_starts_refit=cfg.n_starts_refit, n_scale=cfg.n_scale)
    run.surr = surr
    calls_initial = surr.calls
    glob = global_stage(surr, pm, cfg.eta_bar, stream(seed, GLOBAL), cfg.n_candidates,
                        cfg.n_mc_global, cfg.k_global, cfg.max_global_iter, cfg.u_stop)
    calls_global = surr.calls - calls_initial

    n_box = 2 * pm.s_d + len(problem.soft)
    y0 = (d0 - run.lo) / run.width
    fit0 = run.evaluate(y0, 0)
    params = CmaParams.default(pm.s_d, **cfg.cma)
    state = CmaState.initial(y0, cfg.sigma0, n_box + run.n_h, fit0, params.p_target)
    history = [run.row(0, y0, fit0, True, state.step_size, surr.calls)]
    offspring_costs = []
    rng = stream(seed, CMA)
    stop = "budget"
    for it in range(1, cfg.max_iter + 1):
        parent = state.fitness
        state, accepted, y, ev = cma_step(state, lambda v: run.evaluate(v, it, parent), rng, params)
        history.append(run.row(it, y, ev, accepted, state.step_size, surr.calls))
        offspring_costs.append(ev.cost)
        # cost-range stagnation: the parent and every offspring of the last
        # `window` iterations lie within a relative band of width tol
        w = cfg.stagnation_window
        if it >= w:
            recent = offspring_costs[-w:] + [state.fitness.cost]
            band = max(recent) - min(recent)
            if band <= cfg.stagnation_tol * max(abs(state.fitness.cost), 1e-300):
                stop = "stagnation"
                break
        if state.step_size < 1e-12:
            stop = "step_size"
            break

    d_cma = run.to_design(state.current)
    feasible = state.fitness.feasible
    cost_cma = state.fitness.cost
    d_star, refined = d_cma, False
    if cfg.refine and feasible:
        d_star = refine_local(problem, surr, d_cma, cfg.n_mc, stream(seed, REFINE),
                              cfg.refine_eps, cfg.refine_maxiter)
        refined = not np.array_equal(d_star, d_cma)
    phys = pm.transform(d_star, stream(seed, REFINE).random((cfg.n_mc, pm.dim)))
    final, _ = estimate_quantiles(surr.models, problem.alphas, space, phys, surr.normalizers())

    calls_local = surr.calls - calls_initial - calls_global
    return RbdoResult(problem.name, seed, np.asarray(d_star, dtype=float),
                      float(problem.cost(d_star)), bool(feasible), final, surr.calls, history,
                      surr.does(), d_cma, float(cost_cma), refined, glob, run.local_logs, stop,
                      cfg, list(surr.stages),
                      {"initial": calls_initial, "global": calls_global, "local": calls_local},
                      space)


def refine_local(problem, surr, d_start, n_mc, rng, eps=1e-3, maxiter=100):
    """Gradient-based polish of a design on the final surrogates.

    Minimizes the cost by SLSQP (finite-difference gradients with step
    ``eps`` in normalized design coordinates) subject to the surrogate
    quantile constraints evaluated on one frozen uniform sample, the soft
    constraints and the design box.  A feasible start is only replaced by
    a feasible design of lower or equal cost; an infeasible start (under
    the frozen sample) is replaced by any feasible design found.
    Returns ``d_start`` when no admissible improvement exists.
    """
    pm = problem.model
    lo, width = pm.design_lower, pm.design_upper - pm.design_lower
    u = rng.random((n_mc, pm.dim))
    thresholds, norm = problem.thresholds, np.asarray(surr.normalizers())
    ks = [quantile_index(n_mc, c.alpha) for c in problem.constraints]
    cache = {}

    def design(y):
        return lo + np.clip(y, 0.0, 1.0) * width

    def slack(y):
        key = np.asarray(y).tobytes()
        if key not in cache:
            unit = surr.space.to_unit(pm.transform(design(y), u))
            q = np.array([np.partition(m.predict_mean(unit), k - 1)[k - 1]
                          for m, k in zip(surr.models, ks)])
            cache.clear()
            cache[key] = (thresholds - q) / norm
        return cache[key]

    def soft(y):
        return -problem.soft_values(design(y)) if problem.soft else np.zeros(0)

    def admissible(y):
        return np.all(slack(y) >= -FEAS_TOL) and np.all(soft(y) >= -FEAS_TOL)

    y0 = (np.asarray(d_start, dtype=float) - lo) / width
    c0 = float(problem.cost(design(y0)))
    start_ok = admissible(y0)
    cons = [{"type": "ineq", "fun": slack}]
    if problem.soft:
        cons.append({"type": "ineq", "fun": soft})
    try:
        res = optimize.minimize(lambda y: float(problem.cost(design(y))) / abs(c0 or 1.0), y0,
                                method="SLSQP", bounds=[(0.0, 1.0)] * pm.s_d, constraints=cons,
                                options={"eps": eps, "maxiter": maxiter, "ftol": 1e-10})
    except (ValueError, ArithmeticError):
        return np.asarray(d_start, dtype=float)
    y = np.clip(res.x, 0.0, 1.0)
    if not np.all(np.isfinite(y)) or not admissible(y):
        return np.asarray(d_start, dtype=float)
    if start_ok and float(problem.cost(design(y))) > c0:
        return np.asarray(d_start, dtype=float)
    return design(y)
