"""Monte Carlo quantiles of surrogate responses at a fixed design.

For each constraint the alpha-quantile is read as the floor(N alpha)-th
order statistic of the Kriging mean over a Monte Carlo set of (X|d, Z),
with lower/upper bounds taken from mu - 2 sigma and mu + 2 sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import sample_joint
from .doe import lhs
from .errors import ConfigurationError, DomainError

BOUND_WIDTH = 2.0


@dataclass(frozen=True)
class QuantileEstimate:
    q: float
    q_lo: float
    q_hi: float
    realizing_point: np.ndarray  # physical coordinates (x_alpha, z_alpha)
    realizing_index: int  # row of the Monte Carlo set
    eta_q: float
    n: int
    alpha: float
    outside_fraction: float = 0.0  # share of the sample outside the unit cube

    def to_dict(self):
        return {"q": self.q, "q_lo": self.q_lo, "q_hi": self.q_hi, "eta_q": self.eta_q,
                "n": self.n, "alpha": self.alpha,
                "realizing_point": self.realizing_point.tolist()}


@dataclass(frozen=True)
class McSample:
    """A Monte Carlo set and the surrogate predictions on it.

    ``mu`` and ``sigma`` have one row per constraint model.
    """

    phys: np.ndarray
    unit: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray


def quantile_index(n, alpha):
    """1-based order-statistic index floor(n * alpha)."""
    # guard against binary representation error, e.g. 100 * 0.29
    k = math.floor(n * alpha * (1.0 + 1e-12))
    if k < 1 or k > n:
        raise DomainError(f"quantile index floor({n} * {alpha}) = {k} outside [1, {n}]")
    return k


def order_statistic_index(y, k):
    """Row of the k-th smallest value (1-based), as a stable sort would give.

    Linear time; ties resolve to the earliest rows first.
    """
    v = np.partition(y, k - 1)[k - 1]
    below = int(np.count_nonzero(y < v))
    return int(np.flatnonzero(y == v)[k - 1 - below])


def eta_ratio(est, g_bar, fallback_scale=None):
    """Local accuracy ratio (q_hi - q_lo) / |g_bar|.

    When the threshold is zero the spread is normalized by
    ``fallback_scale`` instead (the spread of the surrogate over the
    augmented space, see :func:`prediction_scale`).
    """
    width = est.q_hi - est.q_lo
    if g_bar != 0:
        return width / abs(g_bar)
    if fallback_scale is None or not fallback_scale > 0:
        raise ConfigurationError("zero threshold requires a positive fallback scale")
    return width / fallback_scale


def prediction_scale(model, n=10_000, rng=None):
    """Standard deviation of the Kriging mean over an LHS of the unit cube."""
    if rng is None:
        rng = np.random.default_rng(0)
    pts = lhs(n, model.doe.dim, rng).points
    return float(np.std(model.predict_mean(pts)))


def normalizer(g_bar, fallback_scale):
    return abs(g_bar) if g_bar != 0 else fallback_scale


def predict_sample(models, space, phys):
    unit = space.to_unit(phys)
    mu = np.empty((len(models), phys.shape[0]))
    sigma = np.empty_like(mu)
    for l, m in enumerate(models):
        mu[l], sigma[l] = m.predict(unit)
    return McSample(phys, unit, mu, sigma)


def quantile_from_predictions(mu, sigma, alpha, phys, scale=None, outside=0.0):
    """Quantile estimate from predictions on an existing sample.

    ``scale`` is the eta normalizer (|g_bar| or the fallback scale).
    """
    n = mu.size
    k = quantile_index(n, alpha)
    idx = order_statistic_index(mu, k)
    q = float(mu[idx])
    q_lo = float(np.partition(mu - BOUND_WIDTH * sigma, k - 1)[k - 1])
    q_hi = float(np.partition(mu + BOUND_WIDTH * sigma, k - 1)[k - 1])
    eta = (q_hi - q_lo) / scale if scale else math.nan
    return QuantileEstimate(q, q_lo, q_hi, np.array(phys[idx], dtype=float), idx, eta, n,
                            float(alpha), float(outside))


def _outside_fraction(unit):
    return float(np.mean(np.any((unit < 0) | (unit > 1), axis=1)))


def estimate_quantiles(models, alphas, space, phys, scales=None):
    """Quantiles of every constraint surrogate over one shared sample.

    Returns the list of estimates and the :class:`McSample` they were
    computed on.
    """
    smp = predict_sample(models, space, phys)
    out_frac = _outside_fraction(smp.unit)
    scales = scales if scales is not None else [None] * len(models)
    ests = [quantile_from_predictions(smp.mu[l], smp.sigma[l], alphas[l], phys, scales[l],
                                      out_frac)
            for l in range(len(models))]
    return ests, smp


def mc_quantile(model, space, pm, d, alpha, n, rng, g_bar=None, fallback_scale=None):
    """Monte Carlo alpha-quantile of one surrogate at design ``d``.

    Parameters
    ----------
    model : KrigingModel
        Surrogate trained in the unit cube of ``space``.
    space : AugmentedSpace
    pm : ProbabilisticModel
    d : array_like
        Design, inside the design bounds.
    alpha : float
        Quantile level.
    n : int
        Monte Carlo sample size; ``floor(n * alpha) >= 1`` is required.
    rng : numpy.random.Generator
    g_bar, fallback_scale : float, optional
        Threshold and zero-threshold normalizer used for ``eta_q``; when
        ``g_bar`` is omitted ``eta_q`` is NaN.

    Returns
    -------
    QuantileEstimate
    """
    quantile_index(n, alpha)
    phys = sample_joint(pm, d, n, rng)
    scale = None if g_bar is None else normalizer(g_bar, fallback_scale)
    ests, _ = estimate_quantiles([model], [alpha], space, phys, [scale])
    return ests[0]


def true_quantiles(functions, alphas, phys):
    """Order-statistic quantiles of exact response functions on a sample."""
    out = []
    for f, a in zip(functions, alphas):
        y = np.asarray(f(phys), dtype=float)
        k = quantile_index(y.size, a)
        out.append(float(np.partition(y, k - 1)[k - 1]))
    return out
