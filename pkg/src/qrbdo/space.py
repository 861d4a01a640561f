"""Augmented space: a hyperrectangle covering design-conditioned and
environmental realizations, plus its affine map to the unit hypercube."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import inv_cdf
from .errors import ConfigurationError, DomainError

DEFAULT_ALPHA = 2.7e-3


@dataclass(frozen=True)
class AugmentedSpace:
    lower: np.ndarray
    upper: np.ndarray
    design_dims: int
    env_dims: int
    alpha_d: tuple = ()
    alpha_z: tuple = ()

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("lower and upper must be vectors of equal length")
        if lo.size != self.design_dims + self.env_dims:
            raise ConfigurationError("bounds length does not match design_dims + env_dims")
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise ConfigurationError("augmented-space bounds must be finite")
        if np.any(hi <= lo):
            bad = np.flatnonzero(hi <= lo).tolist()
            raise ConfigurationError(f"degenerate augmented-space dimension(s) {bad}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def from_unit(self, u):
        return self.lower + np.asarray(u, dtype=float) * self.width

    def to_dict(self):
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "design_dims": self.design_dims,
            "env_dims": self.env_dims,
            "alpha_d": list(self.alpha_d),
            "alpha_z": list(self.alpha_z),
            "design_conditioning": "extreme nominal values d-, d+",
        }


def _per_dim(alpha, n, label):
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (n,)).copy() if n else np.empty(0)
    if np.any((a <= 0) | (a >= 1)):
        raise DomainError(f"{label} must lie in (0, 1), got {alpha}")
    return a


def build_augmented(model, alpha_d=DEFAULT_ALPHA, alpha_z=DEFAULT_ALPHA):
    """Confidence hyperrectangle X x Z for a probabilistic model.

    Random design dimensions are bounded by the alpha_d/2 quantile of
    X_i | d_i^- and the 1 - alpha_d/2 quantile of X_i | d_i^+, i.e. the
    widest envelope over the design box.  Deterministic design dimensions
    keep the design bounds.  Environmental dimensions use the alpha_z/2
    and 1 - alpha_z/2 quantiles of Z_j.
    """
    ad = _per_dim(alpha_d, model.s_d, "alpha_d")
    az = _per_dim(alpha_z, model.s_z, "alpha_z")
    lower, upper = [], []
    for i, var in enumerate(model.design):
        if var.is_deterministic:
            lower.append(var.lower)
            upper.append(var.upper)
            continue
        lo = inv_cdf(var.marginal(var.lower), ad[i] / 2)
        hi = inv_cdf(var.marginal(var.upper), 1 - ad[i] / 2)
        lower.append(min(lo, var.lower))
        upper.append(max(hi, var.upper))
    for j, m in enumerate(model.env):
        lower.append(inv_cdf(m, az[j] / 2))
        upper.append(inv_cdf(m, 1 - az[j] / 2))
    return AugmentedSpace(np.array(lower), np.array(upper), model.s_d, model.s_z,
                          tuple(ad.tolist()), tuple(az.tolist()))


def to_unit(space, x):
    return space.to_unit(x)


def from_unit(space, u):
    return space.from_unit(u)
