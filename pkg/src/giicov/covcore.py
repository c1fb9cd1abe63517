"""Segment location, the change-of-variables transform and weighted moments.

For a uniform draw ``u`` that falls in segment ``j`` of the critical grid at
the anchor ``theta*`` (``c_j(theta*) < u <= c_{j+1}(theta*)``), the transform
maps ``u`` affinely onto segment ``j`` of the grid at ``theta``::

    w     = (c_{j+1}(theta) - c_j(theta)) / (c_{j+1}(theta*) - c_j(theta*))
    u_new = c_j(theta) + w * (u - c_j(theta*))

Outcomes keep the segment found at the anchor, so their values do not move
with ``theta`` while ``w`` carries the derivative information.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DegenerateSegmentError

EPS_DEN = 1e-12


@dataclass(frozen=True)
class CovResult:
    u_new: object
    weight: object
    segment: np.ndarray


@dataclass(frozen=True)
class WeightedMoments:
    """Simulated auxiliary moments with the Jacobian weights folded in."""

    m: object
    n: int
    R: int

    @property
    def d_beta(self):
        return ad.value(self.m).shape[0]


def check_grid(values):
    """Validate grid values along the last axis; returns them as an array."""
    g = np.asarray(values, dtype=float)
    if g.shape[-1] < 2:
        raise ContractError("a critical grid needs at least the two end points")
    if np.any(g[..., 0] != 0.0) or np.any(g[..., -1] != 1.0):
        raise ContractError("critical grid must start at exactly 0 and end at exactly 1")
    if np.any(np.diff(g, axis=-1) < 0.0) or not np.all(np.isfinite(g)):
        bad = np.argwhere(~(np.diff(g, axis=-1) >= 0.0))
        raise ContractError(f"critical grid is not increasing at {tuple(bad[0])}")
    return g


def locate_segment(u, grid):
    """Index ``j`` with ``grid[j] < u <= grid[j+1]`` for a single draw."""
    grid = [float(c) for c in grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ContractError(f"critical grid must be strictly increasing: {grid}")
    if not grid[0] < u <= grid[-1]:
        raise ValueError(f"u={u} lies outside the grid support")
    return bisect.bisect_left(grid, u) - 1


def locate_segments(u, grid):
    """Vectorized :func:`locate_segment`; ``grid`` has points on the last axis."""
    g = np.asarray(grid, dtype=float)
    return (g[..., 1:-1] < np.asarray(u)[..., None]).sum(axis=-1)


def cov_transform(u, grid_theta, grid_star, segment=None):
    """Change of variables for draws ``u`` between two critical grids.

    Parameters
    ----------
    u : float or ndarray
        Uniform draws.
    grid_theta : Dual or ndarray
        Grid at ``theta``, points on the last axis.  Usually a dual seeded
        at the anchor.
    grid_star : ndarray
        Grid values at the anchor, same shape as ``grid_theta``'s value.
    segment : ndarray of int, optional
        Precomputed segment of each draw at the anchor.

    Returns
    -------
    CovResult
        Transformed draw, Jacobian weight and segment index.  When the two
        grids hold identical values, ``u_new`` equals ``u`` and ``weight``
        equals 1 exactly.
    """
    u = np.asarray(u, dtype=float)
    gs = np.asarray(grid_star, dtype=float)
    if segment is None:
        check_grid(gs)
        segment = locate_segments(u, gs)
    segment = np.asarray(segment)
    lo_s = np.take_along_axis(gs, segment[..., None], axis=-1)[..., 0]
    hi_s = np.take_along_axis(gs, segment[..., None] + 1, axis=-1)[..., 0]
    den_s = hi_s - lo_s
    bad = den_s < EPS_DEN
    if np.any(bad):
        loc = tuple(int(k) for k in np.argwhere(bad)[0]) if den_s.ndim else None
        raise DegenerateSegmentError(f"segment width {float(den_s[bad].flat[0]):.3g}", loc)
    lo = ad.pick(grid_theta, segment)
    hi = ad.pick(grid_theta, segment + 1)
    w = (hi - lo) / den_s
    # written as a correction to u so that identical grids give u back exactly
    u_new = u + (lo - lo_s) + (w - 1.0) * (u - lo_s)
    # guard the segment against last-bit rounding; derivatives are untouched
    lo_v, hi_v = ad.value(lo), ad.value(hi)
    clipped = np.minimum(np.maximum(ad.value(u_new), np.nextafter(lo_v, np.inf)), hi_v)
    if ad.is_dual(u_new):
        u_new.val = clipped
    else:
        u_new = clipped
    return CovResult(u_new, w, segment)


def simulated_outcome(levels, segment):
    """Outcome level of the anchor segment; ``levels`` stacked on the last axis."""
    if isinstance(levels, (list, tuple)):
        levels = ad.stack(list(levels))
    levels_arr = levels if ad.is_dual(levels) else np.asarray(levels, dtype=float)
    seg = np.asarray(segment)
    if not ad.is_dual(levels_arr) and levels_arr.ndim == 1:
        return levels_arr[seg]
    return ad.pick(levels_arr, seg)


def weighted_moment_panel(model, theta, theta_star, beta, draws, data, aux=None):
    """Jacobian-weighted simulated moments ``M_n(theta, theta*, beta)``.

    ``theta`` is usually ``seed_parameter(theta_star)``; a plain vector gives
    the value of the weighted criterion away from the anchor.
    """
    aux = aux if aux is not None else model.aux_design()
    anchor = model.simulate(np.asarray(theta_star, dtype=float), draws, data).anchor
    path = model.simulate(theta, draws, data, anchor=anchor)
    n, R = path.n, path.R
    return WeightedMoments(aux.sim_moments(path, data, beta), n, R)
