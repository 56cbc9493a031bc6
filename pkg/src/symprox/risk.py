"""Optimal separable risk, the Bayes estimator and the critical noise level."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import BracketFailure, ValidationError
from .measures import GridMeasure, gaussian_convolve
from .pr1 import PR1Map, from_samples
from .quadrature import gauss_hermite, pl_moments
from .scalar_rep import project_pr1

MIN_RISK_GRID = 256
BAYES_SLOPE_TOL = 1e-6
RISK_NODES = 101


def posterior_mean(mu, tau, y, chunk=4_000_000):
    """E[Theta | Theta + tau G = y] for Theta ~ mu, stabilized by log-sum-exp."""
    mu = mu.to_empirical() if isinstance(mu, GridMeasure) else mu
    y = np.atleast_1d(np.asarray(y, dtype=float))
    a, w = mu.atoms, mu.weights
    logw = np.log(w)
    out = np.empty_like(y)
    step = max(1, chunk // a.size)
    for s in range(0, y.size, step):
        z = -0.5 * ((y[s:s + step, None] - a[None, :]) / tau) ** 2 + logw[None, :]
        lse = logsumexp(z, axis=1, keepdims=True)
        out[s:s + step] = np.exp(z - lse) @ a
    return out


def bayes_estimator(mu, tau, m=4096):
    """Posterior mean tabulated on the m-point quantile grid of mu * N(0, tau^2).

    The result is a piecewise-linear map; it need not be 1-Lipschitz.
    """
    if not tau > 0:
        raise ValidationError("tau must be positive")
    grid = gaussian_convolve(mu, tau, m).quantile_grid
    return from_samples(grid, posterior_mean(mu, tau, grid))


def expected_square(fn, mu, tau, q=RISK_NODES):
    """E[fn(Theta + tau G)^2] by the atom x Gauss-Hermite product rule."""
    g, wg = gauss_hermite(q)
    vals = fn(mu.atoms[:, None] + tau * g[None, :])
    return float(mu.weights @ ((vals**2) @ wg))


@dataclass
class RiskResult:
    r_sep: float
    bayes_risk: float
    optimal_map: PR1Map = field(repr=False)
    bayes_in_pr1: bool
    max_bayes_slope: float
    tau: float

    @property
    def r_symm(self):
        """The symmetric-penalty optimum, which coincides with r_sep."""
        return self.r_sep

    def to_dict(self):
        return {"tau": self.tau, "r_sep": self.r_sep, "r_symm": self.r_symm,
                "bayes_risk": self.bayes_risk, "bayes_in_pr1": self.bayes_in_pr1,
                "max_bayes_slope": self.max_bayes_slope}


def optimal_separable_risk(mu, tau, m=4096, q=RISK_NODES):
    """Minimal risk over PR1 maps in the scalar model Theta + tau G.

    Splits E[(eta(Y) - Theta)^2] into E[(eta(Y) - B(Y))^2] + E[Var(Theta | Y)]
    with B the Bayes map. The first term is minimized by projecting B onto
    PR1 under the equal weights of the quantile grid of Y; the second is
    E[Theta^2] - E[B(Y)^2] by product quadrature.
    """
    if not tau > 0:
        raise ValidationError("tau must be positive")
    if m < MIN_RISK_GRID:
        raise ValidationError(f"grid size must be at least {MIN_RISK_GRID}")
    mu = mu.to_empirical() if isinstance(mu, GridMeasure) else mu
    full = gaussian_convolve(mu, tau, m).quantile_grid
    bayes = from_samples(full, posterior_mean(mu, tau, full))
    y, b = bayes.breakpoints, bayes.values
    # duplicated grid values were merged; weight nodes by multiplicity
    counts = np.bincount(np.searchsorted(y, full, side="left").clip(0, y.size - 1),
                         minlength=y.size)
    w = counts / counts.sum()
    if y.size == 1:
        eta = PR1Map.constant(b[0])
        first = 0.0
        max_slope = 0.0
    else:
        eta = project_pr1(y, b, w)
        first = float(np.dot(w, (eta.values - b) ** 2))
        max_slope = float(np.max(np.diff(b) / np.diff(y)))
    var_term = max(mu.second_moment() - expected_square(bayes, mu, tau, q), 0.0)
    return RiskResult(r_sep=first + var_term, bayes_risk=var_term, optimal_map=eta,
                      bayes_in_pr1=max_slope <= 1 + BAYES_SLOPE_TOL,
                      max_bayes_slope=max_slope, tau=float(tau))


def tau_sep(mu, sigma, delta, m=4096, risk=None, rtol=1e-6, max_iter=200):
    """Largest tau^2 with delta (tau^2 - sigma^2) < R_sep(tau), by bisection.

    ``risk`` maps tau to R_sep(tau); by default the optimal separable risk
    of ``mu``. Returns tau_sep^2.
    """
    if not sigma >= 0 or not delta > 0:
        raise ValidationError("need sigma >= 0 and delta > 0")
    if risk is None:
        def risk(t):
            return optimal_separable_risk(mu, t, m).r_sep

    s2 = float(sigma) ** 2
    second = mu.second_moment()
    lo = s2 if s2 > 0 else 1e-12 * (1.0 + second)
    hi = s2 + second / delta + 1.0

    def phi(t2):
        return risk(np.sqrt(t2)) - delta * (t2 - s2)

    f_lo, f_hi = phi(lo), phi(hi)
    if f_lo <= 0:
        return lo if s2 > 0 else 0.0
    if f_hi >= 0:
        raise BracketFailure("defining inequality does not flip on the bracket",
                             {"lo": (lo, f_lo), "hi": (hi, f_hi)})
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def soft_threshold_risk(mu, tau, t):
    """Exact risk of soft thresholding at t under Theta ~ mu."""
    return pl_moments(PR1Map.soft_threshold(t), mu, tau)[0]
