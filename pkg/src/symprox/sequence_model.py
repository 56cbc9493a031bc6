"""Gaussian sequence model simulations.

Observations are y = theta + tau z. The experiments compare the symmetric
prox of a penalty against its effective scalar representation applied
coordinate-wise, trial by trial.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import NoConvergence, ValidationError
from .measures import EmpiricalMeasure1D, gaussian_convolve, quantile, w2_1d
from .penalties import DEFAULT_TOL, PenaltySpec, prox
from .scalar_rep import MIN_GRID, effective_scalar_rep

SCATTER_POINTS = 100


def materialize_theta(mu, p):
    """Deterministic theta with coordinates at the (j - 1/2)/p quantiles of mu."""
    if p < 1:
        raise ValidationError("p must be at least 1")
    return quantile(mu, (np.arange(p) + 0.5) / p) * np.ones(p)


def normal_quantile_theta(p):
    """theta_j = Phi^{-1}(j / (p + 1)), j = 1..p."""
    return ndtri(np.arange(1, p + 1) / (p + 1))


def three_point_theta(p, mass=0.05, level=1.0):
    """round(mass p) coordinates at -level and at +level, zeros elsewhere."""
    k = int(round(mass * p))
    return np.concatenate([np.full(k, -level), np.zeros(p - 2 * k), np.full(k, level)])


def simulate_y(theta, tau, seed):
    """y = theta + tau z with z drawn from ``np.random.default_rng(seed)``."""
    if not tau >= 0:
        raise ValidationError("tau must be nonnegative")
    theta = np.asarray(theta, dtype=float).ravel()
    if tau == 0:
        return theta.copy()
    z = np.random.default_rng(seed).standard_normal(theta.size)
    return theta + tau * z


def trial_seeds(seed, trials):
    """Independent child seeds for each trial, derived by spawning."""
    return np.random.SeedSequence(seed).spawn(trials)


@dataclass
class SequenceConfig:
    """Settings for one separability experiment.

    Either ``theta`` is given explicitly or ``prior`` together with ``p``
    fixes it through quantile materialization.
    """

    penalty: PenaltySpec
    tau: float
    seed: int
    theta: np.ndarray | None = None
    prior: EmpiricalMeasure1D | None = None
    p: int | None = None
    grid_size: int = 4096
    trials: int = 1
    tol: float = DEFAULT_TOL
    population: EmpiricalMeasure1D | None = None  # build A from this instead of mu_theta

    def __post_init__(self):
        if self.theta is None:
            if self.prior is None or self.p is None:
                raise ValidationError("give theta, or prior together with p")
            self.theta = materialize_theta(self.prior, int(self.p))
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        self.p = self.theta.size
        if self.p < 1:
            raise ValidationError("p must be at least 1")
        if not self.tau >= 0:
            raise ValidationError("tau must be nonnegative")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        if self.grid_size < MIN_GRID:
            raise ValidationError(f"grid_size must be at least {MIN_GRID}")
        if self.seed is None:
            raise ValidationError("seed is required")

    @property
    def snr(self):
        if self.tau == 0:
            return float("inf")
        return float(np.dot(self.theta, self.theta) / (self.p * self.tau**2))

    def echo(self):
        return {"penalty": self.penalty.to_dict(), "tau": self.tau, "seed": int(self.seed),
                "p": int(self.p), "grid_size": int(self.grid_size),
                "trials": int(self.trials), "tol": self.tol,
                "population": self.population is not None}


@dataclass
class SeparabilityReport:
    gaps: np.ndarray
    w2: np.ndarray
    snr: float
    config: dict
    theory: object = field(repr=False, default=None)
    last_y: np.ndarray | None = field(repr=False, default=None)
    last_prox: np.ndarray | None = field(repr=False, default=None)

    def __len__(self):
        return self.gaps.size

    @property
    def bounds(self):
        """4 W2^2 per trial, the deterministic bound on each gap."""
        return 4.0 * self.w2**2

    def summary(self):
        q = [0.0, 0.25, 0.5, 0.75, 1.0]
        return {"gap_quantiles": dict(zip(map(str, q), np.quantile(self.gaps, q).tolist())),
                "w2_quantiles": dict(zip(map(str, q), np.quantile(self.w2, q).tolist())),
                "median_gap": float(np.median(self.gaps)), "snr": self.snr}

    def to_dict(self):
        return {"config": self.config, "summary": self.summary(),
                "gaps": self.gaps.tolist(), "w2": self.w2.tolist()}


def theory_map(cfg):
    """A = effective scalar representation at the convolved prior."""
    base = cfg.population if cfg.population is not None else EmpiricalMeasure1D(cfg.theta)
    grid = gaussian_convolve(base, cfg.tau, cfg.grid_size)
    return effective_scalar_rep(cfg.penalty, grid, tol=cfg.tol), grid


def _trial(cfg, amap, grid, seed):
    y = simulate_y(cfg.theta, cfg.tau, seed)
    xhat = prox(cfg.penalty, y, tol=cfg.tol)
    gap = float(np.mean((xhat - amap(y)) ** 2))
    return gap, w2_1d(EmpiricalMeasure1D(y), grid), y, xhat


def separability_experiment(cfg, workers=1):
    """Per-trial gap (1/p)||prox(f, y) - A(y)||^2 and W2(mu_y, mu^{*tau})."""
    amap, grid = theory_map(cfg)
    seeds = trial_seeds(cfg.seed, cfg.trials)

    def run(t):
        try:
            return _trial(cfg, amap, grid, seeds[t])
        except NoConvergence as exc:
            raise NoConvergence(f"trial {t}: {exc}", exc.iterations, exc.residual) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(cfg.trials)))
    else:
        results = [run(t) for t in range(cfg.trials)]
    gaps = np.array([r[0] for r in results])
    w2 = np.array([r[1] for r in results])
    return SeparabilityReport(gaps, w2, cfg.snr, cfg.echo(), theory=amap,
                              last_y=results[-1][2], last_prox=results[-1][3])


def scatter_sample(y, xhat, seed, size=SCATTER_POINTS):
    """Seeded subsample of (y_j, xhat_j) pairs, sorted by y."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(y.size, size=min(size, y.size), replace=False)
    idx = idx[np.argsort(y[idx], kind="stable")]
    return y[idx], xhat[idx]


def fitted_threshold(amap, tol=1e-12):
    """Largest breakpoint y with |A(y)| <= tol, or nan if A never vanishes."""
    zero = np.abs(amap.values) <= tol
    if not zero.any():
        return float("nan")
    return float(amap.breakpoints[zero].max())


@dataclass
class Panel:
    name: str
    tau: float
    theory: object
    scatter_y: np.ndarray
    scatter_x: np.ndarray


def figure_panels(penalty, theta, taus, seed, grid_size=4096, tol=DEFAULT_TOL, name=""):
    """One simulated draw and one theory curve per noise level."""
    panels = []
    children = trial_seeds(seed, len(taus))
    for tau, child in zip(taus, children):
        cfg = SequenceConfig(penalty=penalty, tau=float(tau), seed=0, theta=theta,
                             grid_size=grid_size, tol=tol)
        amap, _ = theory_map(cfg)
        draw, pick = child.spawn(2)
        y = simulate_y(theta, tau, draw)
        xhat = prox(penalty, y, tol=tol)
        sy, sx = scatter_sample(y, xhat, pick)
        panels.append(Panel(name, float(tau), amap, sy, sx))
    return panels


def appendix_setups(p=1000):
    """Panel definitions for the power-norm and smoothed OWL figures.

    Returns a list of ``(name, penalty, theta, taus)``.
    """
    sowl = PenaltySpec.sowl(profile=((1 / 3, 2.0), (2 / 3, 1.0), (1.0, 0.5)))
    normal = normal_quantile_theta(p)
    sparse = three_point_theta(p)
    setups = []
    for alpha in (1, 2, 4):
        setups.append((f"l2power_alpha{alpha}", PenaltySpec.l2_power(alpha), normal,
                       (0.25, 1.0, 5.0)))
    for alpha in (1, 2):
        setups.append((f"l1power_alpha{alpha}", PenaltySpec.l1_power(alpha), sparse,
                       (0.25, 1.0, 5.0)))
    for M in (0, 1, 10):
        setups.append((f"sowl_M{M}", sowl, three_point_theta(p, level=float(M)), (1.0,)))
    return setups


def appendix_figures(setups=None, seed=0, grid_size=4096, tol=DEFAULT_TOL):
    """Theory maps and scatter subsamples for every panel, keyed by name."""
    setups = appendix_setups() if setups is None else setups
    out = {}
    for k, (name, penalty, theta, taus) in enumerate(setups):
        out[name] = figure_panels(penalty, theta, taus, seed + k, grid_size, tol, name)
    return out
