"""Expectations over Theta + tau G with Theta discrete and G ~ N(0, 1).

Two routes are offered. The atom x Gauss-Hermite tensor rule suits smooth
integrands. Piecewise-linear maps have kinks that slow Hermite convergence
to a crawl, so for them :func:`pl_moments` integrates every linear piece
exactly against the Gaussian density.
"""
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import ndtr

_SQRT_2PI = np.sqrt(2.0 * np.pi)

MIN_NODES = 21
MAX_NODES = 200


@lru_cache(maxsize=32)
def gauss_hermite(q):
    """Nodes and weights with sum w_k h(g_k) ~ E[h(G)], G ~ N(0, 1)."""
    if not 1 <= q <= MAX_NODES:
        raise ValueError(f"node count must lie in [1, {MAX_NODES}]")
    nodes, weights = hermegauss(q)
    weights = weights / np.sqrt(2.0 * np.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def tensor_grid(mu, q):
    """(theta, g, weight) arrays of the product rule, flattened."""
    g, wg = gauss_hermite(q)
    theta = np.repeat(mu.atoms, g.size)
    gg = np.tile(g, len(mu))
    w = np.outer(mu.weights, wg).ravel()
    return theta, gg, w


def _partial_moments(lo, hi):
    """Integrals of 1, g, g^2 against the standard normal density over [lo, hi]."""
    m0 = ndtr(hi) - ndtr(lo)
    phi_lo = np.exp(-0.5 * lo * lo) / _SQRT_2PI
    phi_hi = np.exp(-0.5 * hi * hi) / _SQRT_2PI
    m1 = phi_lo - phi_hi
    with np.errstate(invalid="ignore"):
        t_lo = np.where(np.isfinite(lo), lo * phi_lo, 0.0)
        t_hi = np.where(np.isfinite(hi), hi * phi_hi, 0.0)
    m2 = m0 + t_lo - t_hi
    return m0, m1, m2


def pl_moments(pr1_map, mu, tau, chunk=2_000_000):
    """Exact Gaussian integrals of a piecewise-linear map.

    For Y = Theta + tau G with Theta ~ mu (discrete) and G ~ N(0, 1),
    returns ``(mse, cross)`` = (E[(A(Y) - Theta)^2], E[G A(Y)]), integrating
    each linear piece of A in closed form.
    """
    bp = pr1_map.breakpoints
    vals = pr1_map.values
    # segment k covers [edges[k], edges[k+1]]; A = a_k + b_k y on it
    edges = np.concatenate([[-np.inf], bp, [np.inf]])
    inner_b = np.diff(vals) / np.diff(bp) if bp.size > 1 else np.empty(0)
    b = np.concatenate([[pr1_map.slope_left], inner_b, [pr1_map.slope_right]])
    anchor_y = np.concatenate([[bp[0]], bp[:-1], [bp[-1]]])
    anchor_x = np.concatenate([[vals[0]], vals[:-1], [vals[-1]]])
    a = anchor_x - b * anchor_y

    mse = 0.0
    cross = 0.0
    atoms, weights = mu.atoms, mu.weights
    step = max(1, chunk // edges.size)
    for s in range(0, atoms.size, step):
        th = atoms[s:s + step, None]
        wt = weights[s:s + step]
        lo = (edges[None, :-1] - th) / tau
        hi = (edges[None, 1:] - th) / tau
        m0, m1, m2 = _partial_moments(lo, hi)
        c0 = a[None, :] + b[None, :] * th
        c1 = b[None, :] * tau
        d = c0 - th
        mse += float(wt @ np.sum(d * d * m0 + 2 * d * c1 * m1 + c1 * c1 * m2, axis=1))
        cross += float(wt @ np.sum(c0 * m1 + c1 * m2, axis=1))
    return mse, cross
