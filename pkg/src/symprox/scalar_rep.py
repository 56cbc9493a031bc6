"""Effective scalar representations and projection onto PR1 maps."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateGrid, NoConvergence, ValidationError
from .isotonic import isotonic_increasing
from .measures import GridMeasure
from .penalties import DEFAULT_TOL, prox
from .pr1 import PR1Map, Violation, apply, clip_slopes, validate_pr1  # noqa: F401

MIN_GRID = 16
PROJECTION_MAX_SWEEPS = 200_000


def effective_scalar_rep(f, mu, tol=DEFAULT_TOL):
    """PR1 map that the prox of ``f`` applies coordinate-wise to data ~ ``mu``.

    The penalty is materialized at the grid size m, its prox is taken at
    the quantile grid, and the resulting pairs are interpolated. Slopes that
    stray outside [0, 1] through floating-point error are clipped; the tails extend
    with the boundary segment slopes (one representative choice, since the
    map is not pinned down off the support).
    """
    if not isinstance(mu, GridMeasure):
        raise ValidationError("effective_scalar_rep expects a GridMeasure")
    if mu.m < MIN_GRID:
        raise ValidationError(f"grid size must be at least {MIN_GRID}")
    y = mu.quantile_grid
    if y[-1] - y[0] <= 1e-12:
        raise DegenerateGrid("all grid values coincide")
    if f.kind == "separable":
        return _separable_rep(f, y, mu.m)
    x = prox(f, y, tol=tol)

    new = np.ones(y.size, dtype=bool)
    new[1:] = np.diff(y) > 1e-12
    run = np.cumsum(new) - 1
    yu = y[new]
    xu = np.bincount(run, weights=x) / np.bincount(run)

    slopes = np.diff(xu) / np.diff(yu) if yu.size > 1 else np.zeros(1)
    if slopes.min() < 0 or slopes.max() > 1:
        xc, slopes = clip_slopes(yu, xu)
    else:
        xc = xu
    meta = {"penalty": f.to_dict() if f.scalar is None or f.scalar.kind != "tabulated"
            else {"variant": "separable", "scalar": "tabulated", "scale": f.scale},
            "grid_size": int(mu.m),
            "max_slope_repair": float(np.max(np.abs(xc - xu))) if xu.size else 0.0}
    return PR1Map(yu, xc, slopes[0], slopes[-1], metadata=meta)


def _scalar_kinks(f):
    s = f.scalar
    if s.kind == "abs":
        t = f.scale * s.weight
        return np.array([-t, t]) if t > 0 else np.zeros(0)
    if s.kind == "tabulated":
        return s.table.rescale(f.scale).breakpoints
    return np.zeros(0)


def _separable_rep(f, y, m):
    """Exact scalar prox of a separable penalty, tabulated on grid and kinks.

    For separable penalties the effective map does not depend on the data,
    so the kinks of prox[rho] are added to the grid nodes and every node
    value is exact; the tails continue the last linear pieces.
    """
    nodes = np.union1d(y, _scalar_kinks(f))
    new = np.ones(nodes.size, dtype=bool)
    new[1:] = np.diff(nodes) > 1e-12
    nodes = nodes[new]
    ends = np.array([nodes[0] - 1.0, nodes[-1] + 1.0])
    x = f.scalar.prox(nodes, f.scale)
    xe = f.scalar.prox(ends, f.scale)
    meta = {"penalty": f.to_dict() if f.scalar.kind != "tabulated"
            else {"variant": "separable", "scalar": "tabulated", "scale": f.scale},
            "grid_size": int(m), "max_slope_repair": 0.0}
    return PR1Map(nodes, x, x[0] - xe[0], xe[1] - x[-1], metadata=meta)


def _project_monotone(v, w):
    return isotonic_increasing(v, w)


def _project_lipschitz(v, y, w):
    # x_{i+1} - x_i <= y_{i+1} - y_i  <=>  y - x nondecreasing
    return y - isotonic_increasing(y - v, w)


def _max_violation(x, y):
    dx = np.diff(x)
    dy = np.diff(y)
    return float(max(np.max(-dx, initial=0.0), np.max(dx - dy, initial=0.0)))


def project_pr1(y_nodes, targets, weights=None, max_sweeps=PROJECTION_MAX_SWEEPS,
                feas_tol=1e-9, obj_tol=1e-10):
    """Weighted least-squares projection of node targets onto PR1.

    Minimizes sum w_i (x_i - t_i)^2 subject to 0 <= (x_{i+1} - x_i) /
    (y_{i+1} - y_i) <= 1 with Dykstra's algorithm, alternating the exact
    (PAV) projections onto the monotone family and the Lipschitz family.
    """
    y = np.asarray(y_nodes, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    if not (y.shape == t.shape == w.shape):
        raise ValidationError("nodes, targets and weights must be aligned")
    if np.any(np.diff(y) <= 0):
        raise ValidationError("nodes must be strictly increasing")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValidationError("weights must be nonnegative with positive sum")
    w = np.maximum(w, 1e-12 * w.max())
    if y.size == 1:
        return PR1Map(y, t, 0.0, 0.0)

    def objective(x):
        return float(np.dot(w, (x - t) ** 2))

    x = t.copy()
    p = np.zeros_like(t)
    q = np.zeros_like(t)
    prev = np.inf
    step_tol = obj_tol * (1.0 + float(np.max(np.abs(t))))
    for sweep in range(1, max_sweeps + 1):
        x_old = x
        a = _project_monotone(x + p, w)
        p = x + p - a
        x = _project_lipschitz(a + q, y, w)
        q = a + q - x
        obj = objective(x)
        viol = _max_violation(x, y)
        step = float(np.max(np.abs(x - x_old)))
        if viol <= feas_tol and abs(prev - obj) <= obj_tol * w.sum() and step <= step_tol:
            break
        prev = obj
    else:
        raise NoConvergence("PR1 projection did not converge", iterations=max_sweeps,
                            residual=viol)

    xc, slopes = clip_slopes(y, x)
    # a constant shift keeps PR1 membership and restores the weighted fit
    xc = xc + np.dot(w, x - xc) / w.sum()
    return PR1Map(y, xc, slopes[0], slopes[-1], metadata={"sweeps": sweep})
