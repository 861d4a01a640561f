"""Ordinary Kriging with an anisotropic Matern 5/2 correlation.

Everything works in unit-hypercube coordinates with the raw response;
the constant trend absorbs the offset.  Hyperparameters are the
per-dimension length scales, estimated by minimizing the reduced
likelihood sigma^2(theta) * det(R(theta))^(1/n).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .errors import DomainError, FitError

SQRT5 = math.sqrt(5.0)

NUGGET_START = 1e-8
NUGGET_MAX = 1e-4
THETA_BOUNDS = (1e-3, 10.0)
PREDICT_CHUNK = 20_000


def matern52(h, l):
    """Matern 5/2 correlation at distance ``h`` for length scale ``l``."""
    if np.any(np.asarray(l) <= 0):
        raise DomainError("length scale must be positive")
    a = SQRT5 * np.abs(h) / l
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


def _cross_corr_numpy(x, y, scale):
    poly = np.ones((x.shape[0], y.shape[0]))
    dist = np.zeros_like(poly)
    for k in range(x.shape[1]):
        a = np.abs(x[:, k, None] - y[None, :, k]) * scale[k]
        poly *= 1.0 + a + a * a / 3.0
        dist += a
    return poly * np.exp(-dist)


try:
    import numba

    @numba.njit(cache=True)
    def _cross_corr(x, y, scale):  # pragma: no cover - compiled
        m, s = x.shape
        n = y.shape[0]
        out = np.empty((m, n))
        for i in range(m):
            for j in range(n):
                poly = 1.0
                dist = 0.0
                for k in range(s):
                    a = abs(x[i, k] - y[j, k]) * scale[k]
                    poly *= 1.0 + a + a * a / 3.0
                    dist += a
                out[i, j] = poly * np.exp(-dist)
        return out

except ImportError:  # pragma: no cover
    _cross_corr = _cross_corr_numpy


def correlation_matrix(x, theta, y=None):
    """Tensor-product Matern 5/2 correlation between rows of ``x`` and ``y``.

    With ``y`` omitted this is the n x n correlation matrix of ``x``.
    """
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    y = x if y is None else np.ascontiguousarray(np.atleast_2d(np.asarray(y, dtype=float)))
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("theta must be positive")
    return _cross_corr(x, y, SQRT5 / theta)


@dataclass(frozen=True)
class Doe:
    """Design of experiments: unit-cube inputs ``x`` and responses ``y``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float)).copy()
        y = np.asarray(self.y, dtype=float).ravel().copy()
        if x.shape[0] != y.size:
            raise DomainError("x and y sizes differ")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("DoE contains non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    def min_distance(self, pts):
        """Max-norm distance from each row of ``pts`` to the closest DoE point."""
        pts = np.atleast_2d(pts)
        return np.abs(pts[:, None, :] - self.x[None, :, :]).max(axis=2).min(axis=1)

    def append(self, x_new, y_new, tol=1e-10):
        x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
        y_new = np.asarray(y_new, dtype=float).ravel()
        merged = Doe(np.vstack([self.x, x_new]), np.concatenate([self.y, y_new]))
        for i in range(self.n, merged.n):
            d = np.abs(merged.x[:i] - merged.x[i]).max(axis=1).min()
            if d <= tol:
                raise DomainError(f"duplicate DoE point {merged.x[i].tolist()}")
        return merged


def _factorize(R, nugget=NUGGET_START, max_nugget=NUGGET_MAX, theta=None):
    n = R.shape[0]
    while nugget <= max_nugget * (1 + 1e-9):
        try:
            L = linalg.cholesky(R + nugget * np.eye(n), lower=True, check_finite=False)
            return L, nugget
        except linalg.LinAlgError:
            nugget *= 10.0
    raise FitError("correlation matrix not positive definite at maximum nugget", theta)


@dataclass(frozen=True)
class _Profile:
    L: np.ndarray
    nugget: float
    beta: float
    sigma2: float
    logdet: float
    Li1: np.ndarray
    e: np.ndarray  # L^-1 (y - beta)


def _profile(doe, theta, R=None):
    if R is None:
        R = correlation_matrix(doe.x, theta)
    L, nugget = _factorize(R, theta=theta)
    n = doe.n
    Li1 = linalg.solve_triangular(L, np.ones(n), lower=True, check_finite=False)
    Liy = linalg.solve_triangular(L, doe.y, lower=True, check_finite=False)
    beta = float(Li1 @ Liy / (Li1 @ Li1))
    e = Liy - beta * Li1
    sigma2 = float(e @ e / n)
    logdet = 2.0 * float(np.log(np.diag(L)).sum())
    return _Profile(L, nugget, beta, sigma2, logdet, Li1, e)


def reduced_likelihood(doe, theta):
    """Reduced likelihood psi(theta) = sigma2_hat(theta) * det R(theta)^(1/n)."""
    p = _profile(doe, np.asarray(theta, dtype=float))
    return p.sigma2 * math.exp(p.logdet / doe.n)


def _log_psi_and_grad(log_theta, doe):
    theta = np.exp(log_theta)
    n, s = doe.x.shape
    diff = np.abs(doe.x[:, None, :] - doe.x[None, :, :])  # n x n x s
    a = diff * (SQRT5 / theta)
    base = 1.0 + a + a * a / 3.0
    R = np.prod(base * np.exp(-a), axis=2)
    p = _profile(doe, theta, R)
    sigma2 = max(p.sigma2, 1e-300)
    value = math.log(sigma2) + p.logdet / n
    alpha = linalg.solve_triangular(p.L, p.e, lower=True, trans="T", check_finite=False)
    Rinv = linalg.cho_solve((p.L, True), np.eye(n), check_finite=False)
    # dR/dlog(theta_k) = R * a^2 (1 + a) / (3 (1 + a + a^2/3))
    ratio = a * a * (1.0 + a) / (3.0 * base)
    grad = np.empty(s)
    for k in range(s):
        dR = R * ratio[:, :, k]
        grad[k] = (-(alpha @ dR @ alpha) / sigma2 + np.sum(Rinv * dR)) / n
    return value, grad


@dataclass(frozen=True)
class KrigingModel:
    """Fitted ordinary Kriging model; immutable, safe to share."""

    doe: Doe
    theta: np.ndarray
    beta: float
    sigma2: float
    nugget: float
    chol: np.ndarray
    alpha: np.ndarray  # R^-1 (y - beta)
    linv: np.ndarray  # L^-1
    linv_one: np.ndarray  # L^-1 1
    one_rinv_one: float
    log_psi: float

    @classmethod
    def from_theta(cls, doe, theta):
        theta = np.asarray(theta, dtype=float)
        p = _profile(doe, theta)
        n = doe.n
        linv = linalg.solve_triangular(p.L, np.eye(n), lower=True, check_finite=False)
        alpha = linv.T @ p.e
        log_psi = math.log(max(p.sigma2, 1e-300)) + p.logdet / n
        return cls(doe, theta, p.beta, p.sigma2, p.nugget, p.L, alpha, linv, p.Li1,
                   float(p.Li1 @ p.Li1), log_psi)

    def _cross(self, x):
        # the nugget is a jitter on coincident points, so DoE points are
        # interpolated exactly and have zero predictive variance
        r = correlation_matrix(x, self.theta, self.doe.x)
        r[r >= 1.0] += self.nugget
        return r

    def predict_mean(self, x):
        """Predictive mean only (no variance), for large Monte Carlo sets."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for lo in range(0, x.shape[0], PREDICT_CHUNK):
            out[lo:lo + PREDICT_CHUNK] = self.beta + self._cross(x[lo:lo + PREDICT_CHUNK]) @ self.alpha
        return out

    def predict(self, x, clamp=True):
        """Predictive mean and standard deviation at unit-cube points ``x``.

        A 1-D ``x`` is a single point and yields scalars.  Points outside the
        unit cube are extrapolated.  With ``clamp=False`` the second output
        is the raw (possibly slightly negative) variance instead of sigma.
        """
        single = np.ndim(x) == 1
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mu = np.empty(x.shape[0])
        var = np.empty(x.shape[0])
        for lo in range(0, x.shape[0], PREDICT_CHUNK):
            sl = slice(lo, lo + PREDICT_CHUNK)
            r = self._cross(x[sl])
            mu[sl] = self.beta + r @ self.alpha
            v = r @ self.linv.T
            u = v @ self.linv_one - 1.0
            # the jitter belongs to the prior variance at coincident points
            prior = 1.0 + self.nugget * (r > 1.0).any(axis=1)
            var[sl] = self.sigma2 * (prior - np.einsum("ij,ij->i", v, v) + u * u / self.one_rinv_one)
        out = np.sqrt(np.maximum(var, 0.0)) if clamp else var
        if single:
            return float(mu[0]), float(out[0])
        return mu, out

    def summary(self):
        return {"n": int(self.doe.n), "theta": self.theta.tolist(), "beta": self.beta,
                "sigma2": self.sigma2, "nugget": self.nugget}


def fit(doe, theta_bounds=THETA_BOUNDS, rng=None, n_starts=10, theta0=None):
    """Maximum-likelihood ordinary Kriging fit.

    Parameters
    ----------
    doe : Doe
        Training data in unit-cube coordinates.
    theta_bounds : (float, float)
        Bounds on every length scale.
    rng : numpy.random.Generator
        Draws the random multi-start points (log-uniform in the bounds).
    n_starts : int
        Number of L-BFGS-B starts; the first one is ``theta0`` when given,
        otherwise the log-midpoint of the bounds.
    theta0 : array_like, optional
        Warm start, e.g. the length scales of the previous fit.

    Returns
    -------
    KrigingModel
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n, s = doe.x.shape
    if n < s + 2:
        warnings.warn(f"Kriging fit with n={n} points in dimension {s} (< s + 2)", stacklevel=2)
    lo, hi = math.log(theta_bounds[0]), math.log(theta_bounds[1])
    starts = [np.full(s, 0.5 * (lo + hi))]
    if theta0 is not None:
        starts[0] = np.clip(np.log(np.asarray(theta0, dtype=float)), lo, hi)
    starts += list(rng.uniform(lo, hi, size=(max(n_starts - 1, 0), s)))

    if np.ptp(doe.y) == 0.0:
        # flat data: the likelihood is degenerate, keep the first start
        return KrigingModel.from_theta(doe, np.exp(starts[0]))

    def objective(z):
        try:
            return _log_psi_and_grad(z, doe)
        except FitError:
            return 1e10, np.zeros(s)

    best_val, best_z = math.inf, None
    for z0 in starts:
        res = optimize.minimize(objective, z0, jac=True, method="L-BFGS-B",
                                bounds=[(lo, hi)] * s)
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_z = float(res.fun), res.x
    if best_z is None or best_val >= 1e10:
        raise FitError("Kriging fit failed from every start")
    return KrigingModel.from_theta(doe, np.exp(best_z))


def predict(model, x):
    return model.predict(x)
