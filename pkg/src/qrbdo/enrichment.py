"""Adaptive enrichment of the design of experiments.

The global stage targets the quantile contour q_alpha(d) = g_bar over the
whole design box; the local stage sharpens the quantile estimate at the
design currently visited by the optimizer.  Both stages rank candidates
with a deviation number |target - mu| / sigma and pick batches by a
weighted K-means clustering with weights phi(deviation).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kriging
from .doe import lhs
from .errors import DomainError
from .problem import evaluate_responses
from .quantile import prediction_scale, quantile_index

log = logging.getLogger(__name__)

U_STOP = 2.0
DUPLICATE_TOL = 1e-6  # max-norm, unit-cube coordinates


@dataclass(frozen=True)
class EnrichmentLog:
    stage: str  # "global" or "local"
    iteration: int
    added_points: np.ndarray  # physical coordinates
    responses: np.ndarray  # (k, n_h)
    u_min: float
    eta: float  # coverage ratio (global) or max eta_q (local)


@dataclass(frozen=True)
class GlobalStageResult:
    logs: list
    eta_history: list
    capped: bool


def deviation(num, sigma):
    """|num| / sigma with the limits +inf (sigma = 0 < |num|) and 0 (both 0)."""
    num = np.abs(np.asarray(num, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / sigma
    out = np.where(sigma > 0, out, np.where(num > 0, np.inf, 0.0))
    return float(out) if out.ndim == 0 else out


def u_function(model, point, g_bar):
    """Deviation number |g_bar - mu| / sigma at unit-cube ``point``."""
    mu, sigma = model.predict(point)
    return deviation(np.asarray(g_bar) - mu, sigma)


def weights_from_u(u):
    """phi(-U): positive (or 0 for U = inf) and decreasing in U."""
    return stats.norm.pdf(np.asarray(u, dtype=float))


# ---------------------------------------------------------------- K-means


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    selected: np.ndarray  # index of the max-weight member of each cluster
    inertia_history: list


def _sq_dist(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def weighted_kmeans(points, weights, K, rng, max_iter=100):
    """Weighted Lloyd clustering with weight-proportional k-means++ seeding.

    Points with zero weight are ignored.  Each cluster is represented by
    its member of largest weight, so selections are always candidates.

    Parameters
    ----------
    points : (n, s) array
    weights : (n,) array, non-negative, not all zero
    K : int
        Number of clusters; reduced to the number of weighted points if
        larger.
    rng : numpy.random.Generator

    Returns
    -------
    KMeansResult
        ``labels`` uses -1 for zero-weight points; ``selected`` indexes
        ``points``.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != x.shape[0]:
        raise DomainError("points and weights sizes differ")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and non-negative")
    active = np.flatnonzero(w > 0)
    if active.size == 0:
        raise DomainError("all weights are zero")
    if K < 1:
        raise DomainError("K must be >= 1")
    if K > active.size:
        log.info("K=%d exceeds the %d weighted candidates; reduced", K, active.size)
        K = active.size
    xa, wa = x[active], w[active]

    # seeding: first center by weight, the others by weight * D^2
    first = rng.choice(active.size, p=wa / wa.sum())
    centers = [xa[first]]
    d2 = ((xa - xa[first]) ** 2).sum(axis=1)
    for _ in range(1, K):
        p = wa * d2
        if p.sum() <= 0:
            break  # remaining points coincide with existing centers
        nxt = rng.choice(active.size, p=p / p.sum())
        centers.append(xa[nxt])
        d2 = np.minimum(d2, ((xa - xa[nxt]) ** 2).sum(axis=1))
    centers = np.array(centers)

    history = []
    labels = None
    for _ in range(max_iter):
        dist = _sq_dist(xa, centers)
        new_labels = dist.argmin(axis=1)
        history.append(float((wa * dist[np.arange(xa.shape[0]), new_labels]).sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(centers.shape[0]):
            mk = labels == k
            if mk.any():
                centers[k] = (wa[mk, None] * xa[mk]).sum(axis=0) / wa[mk].sum()

    selected = []
    for k in range(centers.shape[0]):
        members = np.flatnonzero(labels == k)
        if members.size:
            selected.append(active[members[np.argmax(wa[members])]])
    full_labels = np.full(x.shape[0], -1)
    full_labels[active] = labels
    return KMeansResult(centers, full_labels, np.array(selected, dtype=int), history)


def local_deviation(mu, sigma, q_alphas):
    """Composite local deviation min_l |q_l - mu_l| / sigma_l per sample.

    ``mu`` and ``sigma`` are (n_h, N) prediction arrays.
    """
    mu = np.atleast_2d(mu)
    sigma = np.atleast_2d(sigma)
    q = np.asarray(q_alphas, dtype=float).reshape(-1, 1)
    if q.shape[0] != mu.shape[0]:
        raise DomainError("one quantile per constraint is required")
    return deviation(q - mu, sigma).min(axis=0)


def select_points(unit, u, K, rng, existing=None, tol=DUPLICATE_TOL):
    """Indices of the enrichment points among candidates ``unit``.

    K = 1 takes the smallest deviation; otherwise a weighted K-means with
    weights phi(u).  Candidates within ``tol`` (max norm) of ``existing``
    points or of each other are skipped.
    """
    u = np.asarray(u, dtype=float)
    ok = np.isfinite(u)
    if existing is not None and len(existing):
        near = np.zeros(unit.shape[0], dtype=bool)
        cand = np.flatnonzero(ok)
        for lo in range(0, cand.size, 5000):
            part = cand[lo:lo + 5000]
            d = np.abs(unit[part, None, :] - existing[None, :, :]).max(axis=2).min(axis=1)
            near[part] = d <= tol
        ok &= ~near
    if not ok.any():
        return np.empty(0, dtype=int)
    w = np.where(ok, weights_from_u(np.where(ok, u, np.inf)), 0.0)
    if K == 1 or not (w > 0).any():
        idx = np.array([np.flatnonzero(ok)[np.argmin(u[ok])]])
    else:
        idx = weighted_kmeans(unit, w, K, rng).selected
    # drop mutual near-duplicates inside the batch
    keep = []
    for i in idx:
        if all(np.abs(unit[i] - unit[j]).max() > tol for j in keep):
            keep.append(int(i))
    return np.array(keep, dtype=int)


# ------------------------------------------------------------ surrogates


@dataclass
class SurrogateSet:
    """The shared DoE, one Kriging model per hard constraint, and the
    counter of true-model calls."""

    constraints: tuple
    space: object
    x: np.ndarray  # unit-cube DoE inputs, shared by all models
    y: np.ndarray  # (n, n_h) true responses
    stages: list
    seed: int
    theta_bounds: tuple = kriging.THETA_BOUNDS
    n_starts: int = 10
    n_starts_refit: int = 3
    n_scale: int = 10_000
    models: list = field(default_factory=list)
    scales: list = field(default_factory=list)
    calls: int = 0
    n_fits: int = 0

    @classmethod
    def initialize(cls, constraints, space, x_unit, seed, **opts):
        s = cls(tuple(constraints), space, np.empty((0, space.dim)),
                np.empty((0, len(constraints))), [], seed, **opts)
        s.x = np.array(x_unit, dtype=float)
        s.y = s.evaluate(s.x)
        s.stages = ["initial"] * s.x.shape[0]
        s.refit(s.n_starts)
        return s

    @property
    def n_h(self):
        return len(self.constraints)

    @property
    def thresholds(self):
        return np.array([c.threshold for c in self.constraints])

    def evaluate(self, unit):
        """True responses at unit-cube points; every point is one call."""
        y = evaluate_responses(self.constraints, self.space.from_unit(unit))
        self.calls += unit.shape[0]
        return y

    def refit(self, n_starts=None):
        n_starts = self.n_starts_refit if n_starts is None else n_starts
        old = self.models
        models = []
        for l in range(self.n_h):
            rng = np.random.default_rng([self.seed, 5, self.n_fits, l])
            theta0 = old[l].theta if old else None
            models.append(kriging.fit(kriging.Doe(self.x, self.y[:, l]), self.theta_bounds,
                                      rng, n_starts, theta0))
        self.models = models
        self.n_fits += 1
        # zero-threshold normalizer: spread of the mean over fixed LHS points
        self.scales = [prediction_scale(m, self.n_scale, np.random.default_rng([self.seed, 9]))
                       if c.threshold == 0 else abs(c.threshold)
                       for m, c in zip(models, self.constraints)]

    def normalizers(self):
        return list(self.scales)

    def add(self, unit, stage):
        """Evaluate, append to the DoE and refit; returns (phys, y)."""
        unit = np.atleast_2d(unit)
        y = self.evaluate(unit)
        self.x = np.vstack([self.x, unit])
        self.y = np.vstack([self.y, y])
        self.stages += [stage] * unit.shape[0]
        self.refit()
        return self.space.from_unit(unit), y

    def does(self):
        return [m.doe for m in self.models]


# ----------------------------------------------------------- global stage


def candidate_realizations(surr, pm, designs, n_mc, rng):
    """Per candidate design and constraint, the point realizing the
    surrogate quantile, with its composite deviation number.

    Returns ``(u_comp, points)`` where ``points`` are the unit-cube
    realizing points of the constraint attaining the minimum.
    """
    m = designs.shape[0]
    phys = np.concatenate([pm.transform(d, rng.random((n_mc, pm.dim))) for d in designs])
    unit = surr.space.to_unit(phys)
    u_all = np.empty((surr.n_h, m))
    pts = np.empty((surr.n_h, m, unit.shape[1]))
    rows = np.arange(m)
    for l, (model, c) in enumerate(zip(surr.models, surr.constraints)):
        mu = model.predict_mean(unit).reshape(m, n_mc)
        kq = quantile_index(n_mc, c.alpha)
        col = np.argsort(mu, axis=1, kind="stable")[:, kq - 1]
        pts[l] = unit.reshape(m, n_mc, -1)[rows, col]
        mu_a, sig_a = model.predict(pts[l])
        u_all[l] = deviation(c.threshold - mu_a, sig_a)
    best = u_all.argmin(axis=0)
    return u_all[best, rows], pts[best, rows]


def global_stage(surr, pm, eta_bar, rng, n_candidates=None, n_mc=1000, K=1,
                 max_iter=50, u_stop=U_STOP):
    """Global enrichment until the share of doubtful designs is <= eta_bar.

    Each iteration draws ``n_candidates`` designs by LHS over the design
    box (default 100 per design dimension), locates for each design the
    Monte Carlo point realizing every constraint's surrogate quantile and
    keeps the smallest deviation |g_bar - mu| / sigma over constraints.
    The coverage ratio eta is the share of designs with deviation <=
    ``u_stop``.  While eta > eta_bar, K realizing points are added.
    """
    if n_candidates is None:
        n_candidates = 100 * pm.s_d
    lo, hi = pm.design_lower, pm.design_upper
    logs, etas = [], []
    for it in range(max_iter + 1):
        designs = lo + lhs(n_candidates, pm.s_d, rng).points * (hi - lo)
        u_comp, pts = candidate_realizations(surr, pm, designs, n_mc, rng)
        eta = float(np.mean(u_comp <= u_stop))
        etas.append(eta)
        if eta <= eta_bar:
            return GlobalStageResult(logs, etas, False)
        if it == max_iter:
            break
        idx = select_points(pts, u_comp, K, rng, surr.x)
        if idx.size == 0:
            log.warning("global stage: no admissible enrichment candidate")
            break
        phys, y = surr.add(pts[idx], "global")
        logs.append(EnrichmentLog("global", it, phys, y, float(np.min(u_comp)), eta))
    return GlobalStageResult(logs, etas, True)


# ------------------------------------------------------------ local stage


def local_stage_step(surr, ests, sample, eta_bar_q, K, rng, iteration=0):
    """One local enrichment round at the current design.

    No-op (returns None) when every constraint has eta_q <= eta_bar_q;
    otherwise adds K points of the current Monte Carlo set chosen by the
    composite local deviation and refits.
    """
    eta = max(e.eta_q for e in ests)
    if eta <= eta_bar_q:
        return None
    u = local_deviation(sample.mu, sample.sigma, [e.q for e in ests])
    idx = select_points(sample.unit, u, K, rng, surr.x)
    if idx.size == 0:
        return None
    phys, y = surr.add(sample.unit[idx], "local")
    return EnrichmentLog("local", iteration, phys, y, float(np.min(u)), float(eta))
