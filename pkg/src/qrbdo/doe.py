"""Space-filling initial designs: Latin hypercubes optimized for the
centered L2 discrepancy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Design:
    """Points in the unit cube; the O(n^2) discrepancy is computed lazily."""

    points: np.ndarray
    _discrepancy: float | None = field(default=None, repr=False)

    @property
    def discrepancy(self):
        if self._discrepancy is None:
            object.__setattr__(self, "_discrepancy", centered_l2_discrepancy(self.points))
        return self._discrepancy


def centered_l2_discrepancy(points):
    """Centered L2 discrepancy (Hickernell) of points in the unit cube.

    Returns the discrepancy itself, i.e. the square root of the usual
    three-term expression.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError("points must lie in the unit hypercube")
    n, s = x.shape
    z = np.abs(x - 0.5)
    t2 = np.prod(1.0 + 0.5 * z - 0.5 * z * z, axis=1).sum()
    pair = _pair_products(x, z)
    cd2 = (13.0 / 12.0) ** s - 2.0 / n * t2 + pair.sum() / n**2
    return float(np.sqrt(max(cd2, 0.0)))


def _pair_products(x, z, rows=None):
    # prod_k (1 + z_ik/2 + z_jk/2 - |x_ik - x_jk|/2) for i in rows, all j
    xi = x if rows is None else x[rows]
    zi = z if rows is None else z[rows]
    f = 1.0 + 0.5 * zi[:, None, :] + 0.5 * z[None, :, :] - 0.5 * np.abs(xi[:, None, :] - x[None, :, :])
    return np.prod(f, axis=2)


def lhs(n, s, rng):
    """Jittered Latin hypercube of ``n`` points in ``[0, 1]^s``."""
    if n < 2 or s < 1:
        raise DomainError("lhs needs n >= 2 and s >= 1")
    strata = np.argsort(rng.random((n, s)), axis=0)
    points = (strata + rng.random((n, s))) / n
    return Design(points)


def _affected_sum(rows, p_ii, p_jj, p_ij):
    # sum of pair-matrix entries lying in rows/columns i and j
    return 2.0 * rows[0].sum() + 2.0 * rows[1].sum() - p_ii - p_jj - 2.0 * p_ij


def _improve_by_swaps(x, n_swaps, rng):
    """Hill climbing on column-entry swaps; only improving swaps are kept."""
    n, s = x.shape
    x = np.array(x, dtype=float)
    z = np.abs(x - 0.5)
    single = np.prod(1.0 + 0.5 * z - 0.5 * z * z, axis=1)
    pair = _pair_products(x, z)
    tol_scale = (13.0 / 12.0) ** s
    ks = rng.integers(s, size=n_swaps)
    iis = rng.integers(n, size=n_swaps)
    jjs = (iis + rng.integers(1, n, size=n_swaps)) % n
    for k, i, j in zip(ks, iis, jjs):
        # swap in place, undo if the discrepancy does not drop
        x[[i, j], k] = x[[j, i], k]
        z[[i, j], k] = z[[j, i], k]
        rows_new = _pair_products(x, z, rows=[i, j])
        single_new = np.prod(1.0 + 0.5 * z[[i, j]] - 0.5 * z[[i, j]] ** 2, axis=1)
        old = _affected_sum(pair[[i, j]], pair[i, i], pair[j, j], pair[i, j])
        new = _affected_sum(rows_new, rows_new[0, i], rows_new[1, j], rows_new[0, j])
        delta = (new - old) / n**2 - 2.0 / n * (single_new.sum() - single[[i, j]].sum())
        # round-off alone must not accept a swap (e.g. s = 1 relabelings)
        if delta < -1e-13 * tol_scale:
            single[[i, j]] = single_new
            pair[[i, j], :] = rows_new
            pair[:, [i, j]] = rows_new.T
        else:
            x[[i, j], k] = x[[j, i], k]
            z[[i, j], k] = z[[j, i], k]
    return x


def optimize_lhs(n, s, restarts, rng, n_swaps=None):
    """Best centered-L2 Latin hypercube over random restarts plus swap search.

    Parameters
    ----------
    n, s : int
        Number of points and dimension.
    restarts : int
        Number of independent Latin hypercubes to start from.
    rng : numpy.random.Generator
        The first restart consumes ``rng`` exactly like :func:`lhs`, so the
        result is never worse than a plain LHS drawn with the same seed.
    n_swaps : int, optional
        Swap attempts per restart (default ``20 * n``).

    Returns
    -------
    Design
    """
    if restarts < 1:
        raise DomainError("restarts must be >= 1")
    if n_swaps is None:
        n_swaps = 20 * n
    best = None
    for r in range(restarts):
        start = lhs(n, s, rng).points
        pts = _improve_by_swaps(start, n_swaps, rng) if n_swaps > 0 else start
        cand = Design(pts, centered_l2_discrepancy(pts))
        if best is None or cand.discrepancy < best.discrepancy:
            best = cand
    return best
