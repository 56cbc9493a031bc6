"""Independent reference computations used only by the tests.

Nothing here calls into the package's numerical routines; each oracle is
a separate, slower or more direct way of getting the same number.
"""
from __future__ import annotations

import math
from itertools import permutations

import numpy as np
from scipy.optimize import brentq, minimize

SQRT2 = math.sqrt(2.0)


def Phi(x):
    return 0.5 * (1.0 + math.erf(x / SQRT2))


def phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


# ----------------------------------------------------------------------
# soft thresholding under Theta + tau G, closed form via erf

def soft_threshold_moments(atoms, weights, tau, t):
    """(E[(eta_t(Y) - Theta)^2], E[G eta_t(Y)]) for Y = Theta + tau G."""
    mse = 0.0
    cross = 0.0
    for a, w in zip(atoms, weights):
        u = (t - a) / tau  # Y > t  <=>  G > u
        l = (-t - a) / tau  # Y < -t <=>  G < l
        upper = tau**2 * (1 - Phi(u) + u * phi(u)) - 2 * t * tau * phi(u) + t**2 * (1 - Phi(u))
        lower = tau**2 * (Phi(l) - l * phi(l)) - 2 * t * tau * phi(l) + t**2 * Phi(l)
        middle = a * a * (Phi(u) - Phi(l))
        mse += w * (upper + lower + middle)
        # Stein: E[G eta(Y)] = tau P(|Y| > t)
        cross += w * tau * (1 - Phi(u) + Phi(l))
    return mse, cross


def lasso_fixed_point(atoms, weights, delta, sigma, xi):
    """Solve tau^2 = sigma^2 + mse/delta, delta = lam (1 - cross/(delta tau)).

    The effective map of lam * xi |.| is soft thresholding at lam * xi. The
    inner equation is solved for lam by brentq at fixed tau, and the outer
    one by brentq in tau.
    """

    def lam_of(tau):
        def h(lam):
            _, c = soft_threshold_moments(atoms, weights, tau, lam * xi)
            return lam * (1 - c / (delta * tau)) - delta

        return brentq(h, 1e-8, 1e6, xtol=1e-15, rtol=1e-14)

    def outer(tau):
        lam = lam_of(tau)
        mse, _ = soft_threshold_moments(atoms, weights, tau, lam * xi)
        return tau**2 - sigma**2 - mse / delta

    second = float(np.dot(weights, np.square(atoms)))
    tau = brentq(outer, sigma * (1 + 1e-9), math.sqrt(sigma**2 + second / delta + 1.0),
                 xtol=1e-14, rtol=1e-14)
    return tau, lam_of(tau)


# ----------------------------------------------------------------------
# estimators

def lasso_coordinate_descent(X, y, xi, tol=1e-14, max_sweeps=100000):
    """argmin (1/2n)||y - X b||^2 + (xi/p) ||b||_1 by cyclic coordinate descent."""
    n, p = X.shape
    b = np.zeros(p)
    r = y.copy()
    col_sq = (X**2).sum(axis=0) / n
    thr = xi / p
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            rho = X[:, j] @ r / n + col_sq[j] * b[j]
            new = np.sign(rho) * max(abs(rho) - thr, 0.0) / col_sq[j]
            if new != b[j]:
                r -= X[:, j] * (new - b[j])
                biggest = max(biggest, abs(new - b[j]))
                b[j] = new
        if biggest < tol:
            break
    return b


def sowl_value_generic(x, lam):
    """1/2 min over eta > 0 of sum x_j^2/eta_j + lam_j eta_(j), by direct search.

    eta_(j) is eta sorted decreasingly. For each ordering of eta the sorted
    term is linear, so the problem is smooth and convex on a cone; SLSQP
    solves each of the p! pieces and the smallest value is returned.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p = x.size
    x2 = x**2 + 1e-300
    best = np.inf
    for order in permutations(range(p)):
        order = list(order)

        def obj(eta, order=order):
            return 0.5 * (np.sum(x2 / eta) + np.dot(lam, eta[order]))

        def grad(eta, order=order):
            g = -0.5 * x2 / eta**2
            g[order] += 0.5 * lam
            return g

        cons = [{"type": "ineq", "fun": (lambda e, a=order[i], b=order[i + 1]: e[a] - e[b]),
                 "jac": (lambda e, a=order[i], b=order[i + 1]:
                         np.eye(p)[a] - np.eye(p)[b])}
                for i in range(p - 1)]
        start = np.sort(np.abs(x) + 0.5)[::-1][np.argsort(order)]
        res = minimize(obj, start, jac=grad, method="SLSQP", constraints=cons,
                       bounds=[(1e-9, None)] * p, options={"ftol": 1e-15, "maxiter": 1000})
        best = min(best, float(res.fun))
    return best


def grid_search_prox(objective, y, step=1e-3, coarse=41):
    """Minimize a convex objective on a box by coarse-to-fine grid search.

    The box is [-max|y|, max|y|]^p. Each level evaluates a full tensor grid
    and recentres on the best point; the final level has spacing ``step``.
    """
    y = np.asarray(y, dtype=float)
    p = y.size
    half = float(np.max(np.abs(y))) if np.any(y) else 1.0
    center = np.zeros(p)
    lo_box, hi_box = -half, half
    width = half
    while True:
        h = max(2 * width / (coarse - 1), step)
        axes = [np.clip(c + h * np.arange(-(coarse // 2), coarse // 2 + 1), lo_box, hi_box)
                for c in center]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p)
        vals = objective(mesh)
        center = mesh[int(np.argmin(vals))]
        if h <= step:
            return center
        width = 2 * h


def slope_prox_cvxpy(y, lam):
    import cvxpy as cp

    p = y.size
    x = cp.Variable(p)
    diffs = np.append(lam[:-1] - lam[1:], lam[-1])
    pen = sum(diffs[k] * cp.sum_largest(cp.abs(x), k + 1) for k in range(p) if diffs[k] > 0)
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(y - x) + pen))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(x.value)


def pr1_projection_cvxpy(y, t, w):
    import cvxpy as cp

    x = cp.Variable(y.size)
    d = np.diff(y)
    cons = [cp.diff(x) >= 0, cp.diff(x) <= d]
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(w, cp.square(x - t)))), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(x.value), prob.value


def pr1_projection_brute(y, t, w, step=1e-3, points=11):
    """Brute force over the feasible polytope, coarse to fine.

    Parametrizes x by x_1 and increments d_i in [0, y_{i+1} - y_i]. Each
    level scans a full tensor grid of ``points`` values per coordinate,
    recentres on the best point and halves the window, until the spacing
    reaches ``step``. Returns (x, objective).
    """
    y, t, w = (np.asarray(v, dtype=float) for v in (y, t, w))
    gaps = np.diff(y)
    lo = np.concatenate([[t.min()], np.zeros(gaps.size)])
    hi = np.concatenate([[t.max()], gaps])
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    while True:
        axes = [np.clip(c + np.linspace(-r, r, points), a, b)
                for c, r, a, b in zip(center, half, lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, y.size)
        xs = mesh[:, :1] + np.concatenate([np.zeros((mesh.shape[0], 1)),
                                           np.cumsum(mesh[:, 1:], axis=1)], axis=1)
        vals = ((xs - t) ** 2) @ w
        k = int(np.argmin(vals))
        center = mesh[k]
        if np.max(2 * half / (points - 1)) <= step:
            return xs[k], float(vals[k])
        half = np.maximum(half * 0.5, 0.0)


# ----------------------------------------------------------------------
# transport

def w2_2d_brute(a, b):
    """W2 between equal-weight planar samples by enumerating permutations."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    best = np.inf
    for perm in permutations(range(n)):
        c = float(np.sum((a - b[list(perm)]) ** 2))
        best = min(best, c)
    return math.sqrt(best / n)


def best_matching_brute(cost):
    n = cost.shape[0]
    return max(sum(cost[i, s[i]] for i in range(n)) for s in permutations(range(n)))
