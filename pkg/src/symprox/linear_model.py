"""Gaussian-design linear model: estimator, fixed-point system, experiments.

Conventions. X has iid N(0, 1/n) entries, n = round(delta p), and the
estimator minimizes

    (1/2n) ||y - X b||^2 + (lam / p) F(b),

where F is the penalty described by a :class:`PenaltySpec` (normalized to
grow linearly in p). The effective scalar map that enters the fixed-point
system is the effective scalar representation of lambda* F.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NoConvergence, NoSolution, Unevaluable, ValidationError
from .measures import EmpiricalMeasure1D, JointSample2D, gaussian_convolve, w2_2d
from .penalties import DEFAULT_TOL, PenaltySpec, evaluate, prox
from .pr1 import PR1Map, validate_pr1
from .quadrature import MIN_NODES, gauss_hermite, pl_moments
from .scalar_rep import MIN_GRID, effective_scalar_rep
from .sequence_model import materialize_theta, trial_seeds

LOG_LAMBDA_BRACKET = (-12.0, 12.0)
DAMPING = 0.5
OUTER_MAX = 500
FISTA_MAX = 50_000
POWER_ITERS = 30
W2_SUBSAMPLE = 512

# "paper": delta = lam (1 - cross / (delta tau)).
# "inverse": lam = delta (1 - cross / (delta tau)), the other way to read it.
NORMALIZATIONS = ("paper", "inverse")


def is_zero_penalty(f):
    return (f.kind == "separable" and f.scalar.kind != "tabulated"
            and f.scalar.weight == 0)


def effective_map(penalty, mu_theta, tau, lam, m, tol=DEFAULT_TOL):
    """A = effective scalar representation of lam * penalty at mu_theta * N(0, tau^2)."""
    if is_zero_penalty(penalty):
        return PR1Map.identity()
    grid = gaussian_convolve(mu_theta, tau, m)
    return effective_scalar_rep(penalty.scaled(lam), grid, tol=tol)


def map_moments(amap, mu_theta, tau, q=None):
    """(E[(A(Y) - Theta)^2], E[G A(Y)]) for Y = Theta + tau G.

    With ``q=None`` each linear piece of A is integrated exactly; an integer
    q switches to the atom x q-node Gauss-Hermite product rule.
    """
    if q is None:
        return pl_moments(amap, mu_theta, tau)
    if q < MIN_NODES:
        raise ValidationError(f"need at least {MIN_NODES} Hermite nodes")
    g, wg = gauss_hermite(q)
    th = mu_theta.atoms[:, None]
    a = amap(th + tau * g[None, :])
    mse = float(mu_theta.weights @ (((a - th) ** 2) @ wg))
    cross = float(mu_theta.weights @ ((a * g[None, :]) @ wg))
    return mse, cross


def se_expectations(penalty, mu_theta, tau, lam, m=4096, q=None, tol=DEFAULT_TOL):
    """Right-hand sides of the fixed-point system at (tau, lam)."""
    if not tau > 0 or not lam > 0:
        raise ValidationError("tau and lambda must be positive")
    amap = effective_map(penalty, mu_theta, tau, lam, m, tol)
    return map_moments(amap, mu_theta, tau, q)


@dataclass
class LinearConfig:
    penalty: PenaltySpec
    delta: float
    sigma: float
    seed: int
    theta: np.ndarray | None = None
    prior: EmpiricalMeasure1D | None = None
    p: int | None = None
    grid_size: int = 4096
    trials: int = 1
    tol: float = 1e-8
    fista_tol: float = 1e-9
    quadrature_nodes: int | None = None
    normalization: str = "paper"

    def __post_init__(self):
        if self.theta is None:
            if self.prior is None:
                raise ValidationError("give theta, or prior (with p for simulations)")
            if self.p is not None:
                self.theta = materialize_theta(self.prior, int(self.p))
        if self.theta is not None:
            self.theta = np.asarray(self.theta, dtype=float).ravel()
            self.p = self.theta.size
        if not self.delta > 0:
            raise ValidationError("delta must be positive")
        if not self.sigma >= 0:
            raise ValidationError("sigma must be nonnegative")
        if self.p is not None and self.n < 1:
            raise ValidationError("n = round(delta p) must be at least 1")
        if self.grid_size < MIN_GRID:
            raise ValidationError(f"grid_size must be at least {MIN_GRID}")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        if self.normalization not in NORMALIZATIONS:
            raise ValidationError(f"normalization must be one of {NORMALIZATIONS}")
        if self.seed is None:
            raise ValidationError("seed is required")

    @property
    def n(self):
        return int(round(self.delta * self.p))

    @property
    def mu_theta(self):
        return self.prior if self.theta is None else EmpiricalMeasure1D(self.theta)


@dataclass
class FixedPointSolution:
    tau_star: float
    lambda_star: float
    predicted_mse: float
    effective_map: PR1Map = field(repr=False)
    gordon_value: float
    residual_tau: float
    residual_lambda: float
    iterations: int
    normalization: str = "paper"

    def to_dict(self):
        return {"tau_star": self.tau_star, "lambda_star": self.lambda_star,
                "predicted_mse": self.predicted_mse, "gordon_value": self.gordon_value,
                "residual_tau": self.residual_tau, "residual_lambda": self.residual_lambda,
                "iterations": self.iterations, "normalization": self.normalization}


def _lambda_equation(lam, cross, delta, tau, normalization):
    if normalization == "paper":
        return lam * (1.0 - cross / (delta * tau)) - delta
    return delta * (1.0 - cross / (delta * tau)) - lam


def solve_lambda(penalty, mu, tau, delta, m, q=None, normalization="paper",
                 tol=DEFAULT_TOL):
    """Inner solve of the lambda equation at fixed tau, bisection-type on log lam."""
    if is_zero_penalty(penalty):
        # A = identity: cross = tau, both readings are then explicit in lam
        shrink = 1.0 - 1.0 / delta
        lam = delta / shrink if normalization == "paper" and shrink > 0 else delta * shrink
        if not (shrink > 0 and lam > 0):
            raise NoSolution("lambda equation has no positive root",
                             {"tau": tau, "delta": delta})
        return lam, PR1Map.identity(), (tau**2, tau)

    cache = {}
    grid = gaussian_convolve(mu, tau, m)

    def h(log_lam):
        lam = float(np.exp(log_lam))
        amap = effective_scalar_rep(penalty.scaled(lam), grid, tol=tol)
        mse, cross = map_moments(amap, mu, tau, q)
        cache[log_lam] = (amap, (mse, cross))
        return _lambda_equation(lam, cross, delta, tau, normalization)

    lo, hi = LOG_LAMBDA_BRACKET
    h_lo, h_hi = h(lo), h(hi)
    for _ in range(2):
        if np.sign(h_lo) != np.sign(h_hi):
            break
        lo, hi = 2 * lo, 2 * hi
        h_lo, h_hi = h(lo), h(hi)
    if np.sign(h_lo) == np.sign(h_hi):
        raise NoSolution("cannot bracket the lambda equation",
                         {"tau": tau, "log_lambda": (lo, hi), "values": (h_lo, h_hi)})
    root = brentq(h, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    if root not in cache:
        h(root)
    amap, moments = cache[root]
    return float(np.exp(root)), amap, moments


def gordon_value(penalty, amap, grid, tau, lam, delta):
    """L* = (tau delta / lam)^2 / 2 + F(A(grid)) / m, grid ~ mu^{*tau}."""
    y = grid.quantile_grid
    try:
        pen = evaluate(penalty, amap(y)) / y.size
    except Unevaluable:
        return float("nan")
    return 0.5 * (tau * delta / lam) ** 2 + pen


def _zero_penalty_solution(cfg):
    """Closed form for A = identity: tau^2 = sigma^2 + tau^2 / delta."""
    delta, sigma = cfg.delta, cfg.sigma
    if not delta > 1:
        raise NoSolution("zero penalty needs delta > 1", {"delta": delta})
    t2 = sigma**2 * delta / (delta - 1.0)
    tau = float(np.sqrt(t2))
    lam, amap, (mse, cross) = solve_lambda(cfg.penalty, cfg.mu_theta, tau, delta,
                                           cfg.grid_size, normalization=cfg.normalization)
    return FixedPointSolution(
        tau_star=tau, lambda_star=lam, predicted_mse=delta * (t2 - sigma**2),
        effective_map=amap, gordon_value=0.5 * (tau * delta / lam) ** 2,
        residual_tau=abs(t2 - sigma**2 - mse / delta),
        residual_lambda=abs(_lambda_equation(lam, cross, delta, tau, cfg.normalization)),
        iterations=0, normalization=cfg.normalization)


def solve_fixed_point(cfg, max_iter=OUTER_MAX, damping=DAMPING):
    """Solve the (tau*, lambda*) system by damped iteration on tau^2."""
    mu = cfg.mu_theta
    delta, sigma = cfg.delta, cfg.sigma
    m, q, norm = cfg.grid_size, cfg.quadrature_nodes, cfg.normalization
    if is_zero_penalty(cfg.penalty):
        return _zero_penalty_solution(cfg)
    t2 = sigma**2 + mu.second_moment() / delta
    history = []
    for k in range(1, max_iter + 1):
        tau = np.sqrt(t2)
        lam, amap, (mse, cross) = solve_lambda(cfg.penalty, mu, tau, delta, m, q, norm)
        target = sigma**2 + mse / delta
        history.append((t2, lam))
        new = (1 - damping) * t2 + damping * target
        if abs(new - t2) <= cfg.tol * t2:
            t2 = new
            break
        if not np.isfinite(new) or new > 1e12:
            raise NoSolution("tau iteration diverged", {"history": history[-5:]})
        t2 = new
    else:
        raise NoSolution(f"no convergence in {max_iter} outer steps",
                         {"history": history[-5:]})

    tau = float(np.sqrt(t2))
    lam, amap, (mse, cross) = solve_lambda(cfg.penalty, mu, tau, delta, m, q, norm)
    res_tau = abs(t2 - sigma**2 - mse / delta)
    res_lam = abs(_lambda_equation(lam, cross, delta, tau, norm))
    bad = validate_pr1(amap, tol=1e-9)
    if bad:
        raise NoSolution("effective map left PR1", {"violations": bad[:3]})
    grid = gaussian_convolve(mu, tau, m)
    return FixedPointSolution(
        tau_star=tau, lambda_star=lam, predicted_mse=delta * (t2 - sigma**2),
        effective_map=amap, gordon_value=gordon_value(cfg.penalty, amap, grid, tau, lam, delta),
        residual_tau=res_tau, residual_lambda=res_lam, iterations=k, normalization=norm)


# ----------------------------------------------------------------------
# estimator

def _power_sigma_max_sq(X, rng, iters=POWER_ITERS):
    v = rng.standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        w = X.T @ (X @ v)
        s = float(np.linalg.norm(w))
        if s == 0:
            return 0.0
        v = w / s
    # Rayleigh quotient after the last step, slightly inflated for safety
    return float(np.dot(v, X.T @ (X @ v))) * 1.01


def fit_penalized_ls(X, y, penalty, lam=1.0, tol=1e-9, max_iter=FISTA_MAX, seed=0):
    """argmin (1/2n)||y - X b||^2 + (lam / p) F(b) by FISTA with restarts.

    One minimizer is returned; the minimizing set need not be a singleton.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.size != n:
        raise ValidationError("X and y disagree on n")
    if not lam >= 0:
        raise ValidationError("lambda must be nonnegative")
    L = _power_sigma_max_sq(X, np.random.default_rng(seed)) / n
    if L == 0:
        return np.zeros(p)
    step = 1.0 / L
    zero = lam == 0 or is_zero_penalty(penalty)
    pen = None if zero else penalty.scaled(lam * step / p)

    def smooth(b):
        r = y - X @ b
        return 0.5 * float(r @ r) / n, -(X.T @ r) / n

    def prox_step(v):
        return v if zero else prox(pen, v)

    try:
        evaluate(penalty, np.zeros(1))
        value = (lambda b: 0.0) if zero else (lambda b: lam / p * evaluate(penalty, b))
    except Unevaluable:
        value = None

    b = np.zeros(p)
    z = b.copy()
    t = 1.0
    f_b, _ = smooth(b)
    obj = f_b + (value(b) if value else 0.0)
    for it in range(1, max_iter + 1):
        _, grad_z = smooth(z)
        b_new = prox_step(z - step * grad_z)
        f_new, grad_new = smooth(b_new)
        if value is not None:
            obj_new = f_new + value(b_new)
            restart = obj_new > obj
        else:
            obj_new = f_new
            restart = float(np.dot(z - b_new, b_new - b)) > 0
        if restart and t > 1.0:
            # drop momentum and redo the step from the current iterate
            z = b.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = b_new + ((t - 1) / t_new) * (b_new - b)
        rel = abs(obj - obj_new) / max(1.0, abs(obj_new))
        b, t, obj = b_new, t_new, obj_new
        if rel <= tol:
            fp = np.linalg.norm(b - prox_step(b - step * grad_new)) / (1 + np.linalg.norm(b))
            if fp <= 10 * tol:
                return b
    raise NoConvergence("FISTA hit the iteration cap", iterations=max_iter, residual=rel)


def lm_objective(X, y, b, penalty, lam=1.0):
    n, p = X.shape
    r = y - X @ b
    pen = 0.0 if lam == 0 or is_zero_penalty(penalty) else lam / p * evaluate(penalty, b)
    return 0.5 * float(r @ r) / n + pen


# ----------------------------------------------------------------------
# experiments

def draw_problem(cfg, seed):
    """X with iid N(0, 1/n) entries, Gaussian noise of scale sigma, and y."""
    rng = np.random.default_rng(seed)
    n, p = cfg.n, cfg.p
    X = rng.standard_normal((n, p)) / np.sqrt(n)
    w = cfg.sigma * rng.standard_normal(n)
    return X, X @ cfg.theta + w


@dataclass
class LMReport:
    w2: np.ndarray
    scalar_gap: np.ndarray
    empirical_mse: np.ndarray
    solution: FixedPointSolution
    joints: list = field(repr=False, default_factory=list)
    predicted: JointSample2D | None = field(repr=False, default=None)

    def summary(self):
        return {"median_w2": float(np.median(self.w2)),
                "median_scalar_gap": float(np.median(self.scalar_gap)),
                "median_empirical_mse": float(np.median(self.empirical_mse)),
                "predicted_mse": self.solution.predicted_mse}

    def to_dict(self):
        return {"fixed_point": self.solution.to_dict(), "summary": self.summary(),
                "w2": self.w2.tolist(), "scalar_gap": self.scalar_gap.tolist(),
                "empirical_mse": self.empirical_mse.tolist()}


def separable_equivalent(solution):
    """Separable penalty whose lambda* multiple has prox equal to A*."""
    return PenaltySpec.tabulated(solution.effective_map, scale=1.0 / solution.lambda_star)


def lm_concentration_experiment(cfg, solution=None, penalty=None, subsample=W2_SUBSAMPLE):
    """Compare the estimator's joint law with (A*(Theta + tau* G), Theta).

    ``penalty`` overrides the penalty used by the estimator (the fixed point
    is still that of ``cfg.penalty`` unless ``solution`` is passed).
    """
    if cfg.theta is None:
        raise ValidationError("the experiment needs a materialized theta (set p)")
    sol = solve_fixed_point(cfg) if solution is None else solution
    pen = cfg.penalty if penalty is None else penalty
    theta, p = cfg.theta, cfg.p
    k = min(p, subsample)
    w2, gaps, mses, joints = [], [], [], []
    predicted = None
    for t, child in enumerate(trial_seeds(cfg.seed, cfg.trials)):
        s_prob, s_pred, s_sub = child.spawn(3)
        X, y = draw_problem(cfg, s_prob)
        try:
            bhat = fit_penalized_ls(X, y, pen, 1.0, tol=cfg.fista_tol)
        except NoConvergence as exc:
            raise NoConvergence(f"trial {t}: {exc}", exc.iterations, exc.residual) from exc
        g = np.random.default_rng(s_pred).standard_normal(p)
        pred = JointSample2D.from_columns(sol.effective_map(theta + sol.tau_star * g), theta)
        emp = JointSample2D.from_columns(bhat, theta)
        # one index set for both samples keeps their theta marginals identical
        idx = np.sort(np.random.default_rng(s_sub).choice(p, size=k, replace=False))
        w2.append(w2_2d(JointSample2D(emp.pairs[idx]), JointSample2D(pred.pairs[idx])))
        mse = float(np.mean((bhat - theta) ** 2))
        mses.append(mse)
        gaps.append(abs(mse - sol.predicted_mse))
        joints.append(emp)
        predicted = pred
    return LMReport(np.array(w2), np.array(gaps), np.array(mses), sol, joints, predicted)
