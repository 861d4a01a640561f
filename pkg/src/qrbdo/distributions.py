"""Marginal distributions and the probabilistic model of a design problem.

Marginals are parameterized the way structural-reliability tables report
them: a mean and a coefficient of variation (or explicit bounds for the
uniform law).  Non-normal laws are moment matched.  All sampling goes
through the inverse CDF applied to uniforms, so a fixed uniform matrix
gives common random numbers across designs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize, special, stats

from .errors import DomainError, NumericError, ParameterError

EULER_GAMMA = 0.5772156649015329

WEIBULL_SHAPE_BRACKET = (0.2, 50.0)

_TINY = np.finfo(float).tiny


class Kind(str, enum.Enum):
    NORMAL = "normal"
    LOGNORMAL = "lognormal"
    GUMBEL = "gumbel"
    GUMBEL_MIN = "gumbel_min"
    WEIBULL = "weibull"
    UNIFORM = "uniform"
    DETERMINISTIC = "deterministic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(f"unknown distribution kind {value!r}") from None


def _weibull_cov2(k):
    # cov^2 = Gamma(1 + 2/k) / Gamma(1 + 1/k)^2 - 1, evaluated in log space
    return math.expm1(special.gammaln(1.0 + 2.0 / k) - 2.0 * special.gammaln(1.0 + 1.0 / k))


def weibull_shape(cov, bracket=WEIBULL_SHAPE_BRACKET, xtol=1e-10):
    """Shape k of the Weibull law with coefficient of variation ``cov``.

    cov is strictly decreasing in k, so a bracketing root finder is safe.
    """
    lo, hi = bracket
    target = cov * cov
    f_lo, f_hi = _weibull_cov2(lo) - target, _weibull_cov2(hi) - target
    if f_lo * f_hi > 0:
        raise NumericError(
            f"Weibull cov={cov} outside the range reachable with shape in [{lo}, {hi}]"
        )
    try:
        return optimize.brentq(lambda k: _weibull_cov2(k) - target, lo, hi, xtol=xtol)
    except (RuntimeError, ValueError) as exc:
        raise NumericError(f"Weibull shape root-find failed for cov={cov}") from exc


@dataclass(frozen=True)
class Marginal:
    """One-dimensional distribution with moment-matched parameters.

    ``params`` holds the law's native parameters:

    - normal: (mu, sigma)
    - lognormal: (lambda, zeta), i.e. location and scale of ln X
    - gumbel (max type): (loc, scale)
    - gumbel_min (min type, long lower tail): (loc, scale)
    - weibull: (shape, scale)
    - uniform: (lower, upper)
    - deterministic: (value,)
    """

    kind: Kind
    mean: float
    std: float
    params: tuple

    @property
    def cov(self):
        return self.std / abs(self.mean) if self.mean != 0 else math.inf

    @cached_property
    def _dist(self):
        k, p = self.kind, self.params
        if k is Kind.NORMAL:
            return stats.norm(loc=p[0], scale=p[1])
        if k is Kind.LOGNORMAL:
            return stats.lognorm(s=p[1], scale=math.exp(p[0]))
        if k is Kind.GUMBEL:
            return stats.gumbel_r(loc=p[0], scale=p[1])
        if k is Kind.GUMBEL_MIN:
            return stats.gumbel_l(loc=p[0], scale=p[1])
        if k is Kind.WEIBULL:
            return stats.weibull_min(c=p[0], scale=p[1])
        if k is Kind.UNIFORM:
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        return None

    @property
    def is_deterministic(self):
        return self.kind is Kind.DETERMINISTIC

    def ppf(self, p):
        """Vectorized inverse CDF, no domain check (see :func:`inv_cdf`).

        Closed forms; freezing a scipy distribution for every design
        point dominated the sampling cost.
        """
        k, a = self.kind, self.params
        p = np.asarray(p, dtype=float)
        if k is Kind.NORMAL:
            return a[0] + a[1] * special.ndtri(p)
        if k is Kind.LOGNORMAL:
            return np.exp(a[0] + a[1] * special.ndtri(p))
        if k is Kind.GUMBEL:
            return a[0] - a[1] * np.log(-np.log(p))
        if k is Kind.GUMBEL_MIN:
            return a[0] + a[1] * np.log(-np.log1p(-p))
        if k is Kind.WEIBULL:
            return a[1] * (-np.log1p(-p)) ** (1.0 / a[0])
        if k is Kind.UNIFORM:
            return a[0] + p * (a[1] - a[0])
        return np.full(p.shape, a[0])

    def cdf(self, x):
        if self.is_deterministic:
            return np.where(np.asarray(x) >= self.params[0], 1.0, 0.0)
        return self._dist.cdf(x)

    def support(self):
        if self.is_deterministic:
            return (self.params[0], self.params[0])
        return tuple(float(v) for v in self._dist.support())

    def describe(self):
        return {"kind": self.kind.value, "mean": self.mean, "std": self.std,
                "params": list(self.params)}


def make_marginal(kind, mean=None, cov=None, *, std=None, lower=None, upper=None):
    """Build a marginal from its mean and coefficient of variation.

    Parameters
    ----------
    kind : Kind or str
        Distribution family.
    mean : float
        Mean value in problem units.  Must be positive for the lognormal,
        Gumbel and Weibull families.
    cov : float, optional
        Coefficient of variation (std / mean).
    std : float, optional
        Standard deviation, used instead of ``cov`` (needed when the mean
        may be zero, e.g. a normal design variable at the origin).
    lower, upper : float, optional
        Bounds of a uniform law.

    Returns
    -------
    Marginal
    """
    kind = Kind.parse(kind)

    if kind is Kind.DETERMINISTIC:
        if mean is None or not np.isfinite(mean):
            raise ParameterError("deterministic marginal needs a finite value")
        return Marginal(kind, float(mean), 0.0, (float(mean),))

    if kind is Kind.UNIFORM:
        if lower is None or upper is None:
            if mean is None or (cov is None and std is None):
                raise ParameterError("uniform marginal needs lower/upper or mean and cov")
            sd = std if std is not None else cov * abs(mean)
            half = math.sqrt(3.0) * sd
            lower, upper = mean - half, mean + half
        lower, upper = float(lower), float(upper)
        if not lower < upper:
            raise ParameterError(f"uniform marginal needs lower < upper, got [{lower}, {upper}]")
        return Marginal(kind, 0.5 * (lower + upper), (upper - lower) / math.sqrt(12.0),
                        (lower, upper))

    if mean is None or not np.isfinite(mean):
        raise ParameterError(f"{kind.value} marginal needs a finite mean")
    mean = float(mean)
    if std is None:
        if cov is None:
            raise ParameterError(f"{kind.value} marginal needs cov or std")
        if not cov > 0:
            raise ParameterError(f"cov must be positive, got {cov}")
        std = cov * abs(mean)
    std = float(std)
    if not std > 0:
        raise ParameterError(f"standard deviation must be positive, got {std}")

    if kind is Kind.NORMAL:
        return Marginal(kind, mean, std, (mean, std))

    if mean <= 0:
        raise ParameterError(f"{kind.value} marginal needs a positive mean, got {mean}")
    delta = std / mean

    if kind is Kind.LOGNORMAL:
        zeta = math.sqrt(math.log1p(delta * delta))
        lam = math.log(mean) - 0.5 * zeta * zeta
        return Marginal(kind, mean, std, (lam, zeta))

    if kind is Kind.GUMBEL:
        scale = std * math.sqrt(6.0) / math.pi
        return Marginal(kind, mean, std, (mean - EULER_GAMMA * scale, scale))

    if kind is Kind.GUMBEL_MIN:
        scale = std * math.sqrt(6.0) / math.pi
        return Marginal(kind, mean, std, (mean + EULER_GAMMA * scale, scale))

    if kind is Kind.WEIBULL:
        shape = weibull_shape(delta)
        scale = mean / math.exp(special.gammaln(1.0 + 1.0 / shape))
        return Marginal(kind, mean, std, (shape, scale))

    raise ParameterError(f"unsupported kind {kind}")  # pragma: no cover


def inv_cdf(m, p):
    """Inverse CDF of ``m`` at probability ``p`` (scalar or array) in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    out = m.ppf(arr)
    return float(out) if np.ndim(out) == 0 else out


def sample(m, n, rng):
    """Draw ``n`` values of ``m`` by inverse-transform sampling."""
    if n < 1:
        raise DomainError("sample size must be >= 1")
    return m.ppf(np.clip(rng.random(n), _TINY, None))


@dataclass(frozen=True)
class DesignVariable:
    """Template of the marginal of X_i given the nominal design value d_i.

    Exactly one of ``cov`` (std proportional to d_i) or ``std`` (constant
    spread) must be given unless the variable is deterministic.
    """

    name: str
    lower: float
    upper: float
    kind: Kind = Kind.DETERMINISTIC
    cov: float | None = None
    std: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if not (np.isfinite(self.lower) and np.isfinite(self.upper) and self.lower < self.upper):
            raise ParameterError(f"design variable {self.name!r} needs finite lower < upper")
        if self.kind is not Kind.DETERMINISTIC and (self.cov is None) == (self.std is None):
            raise ParameterError(f"design variable {self.name!r}: give exactly one of cov, std")

    @property
    def is_deterministic(self):
        return self.kind is Kind.DETERMINISTIC

    def marginal(self, d):
        if self.is_deterministic:
            return make_marginal(Kind.DETERMINISTIC, d)
        return make_marginal(self.kind, d, self.cov, std=self.std)


@dataclass(frozen=True)
class ProbabilisticModel:
    """Design-conditioned variables X|d plus environmental variables Z."""

    design: tuple
    env: tuple = ()
    env_names: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "design", tuple(self.design))
        object.__setattr__(self, "env", tuple(self.env))
        if len(self.design) < 1:
            raise ParameterError("at least one design variable is required")
        names = tuple(self.env_names) or tuple(f"z{j + 1}" for j in range(len(self.env)))
        if len(names) != len(self.env):
            raise ParameterError("env_names must match env marginals")
        object.__setattr__(self, "env_names", names)

    @property
    def s_d(self):
        return len(self.design)

    @property
    def s_z(self):
        return len(self.env)

    @property
    def dim(self):
        return self.s_d + self.s_z

    @property
    def names(self):
        return tuple(v.name for v in self.design) + self.env_names

    @property
    def design_lower(self):
        return np.array([v.lower for v in self.design])

    @property
    def design_upper(self):
        return np.array([v.upper for v in self.design])

    def check_design(self, d, rtol=1e-12):
        d = np.asarray(d, dtype=float)
        if d.shape != (self.s_d,):
            raise DomainError(f"design vector must have shape ({self.s_d},), got {d.shape}")
        lo, hi = self.design_lower, self.design_upper
        slack = rtol * np.maximum(1.0, np.abs(hi - lo))
        if np.any(d < lo - slack) or np.any(d > hi + slack) or not np.all(np.isfinite(d)):
            raise DomainError(f"design {d.tolist()} outside bounds {lo.tolist()} - {hi.tolist()}")
        return d

    def transform(self, d, u):
        """Map uniforms ``u`` (n x dim) to physical samples of (X|d, Z)."""
        d = self.check_design(d)
        # generator output is in [0, 1); keep 0 away from the ppf pole
        u = np.clip(np.asarray(u, dtype=float), _TINY, None)
        out = np.empty_like(u)
        for i, var in enumerate(self.design):
            out[:, i] = var.marginal(d[i]).ppf(u[:, i])
        for j, m in enumerate(self.env):
            out[:, self.s_d + j] = m.ppf(u[:, self.s_d + j])
        return out


def sample_joint(model, d, n, rng):
    """Draw ``n`` joint realizations of (X|d, Z) as an n x (s_d + s_z) array."""
    if n < 1:
        raise DomainError("sample size must be >= 1")
    model.check_design(d)
    return model.transform(d, rng.random((n, model.dim)))
