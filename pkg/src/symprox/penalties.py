"""Symmetric convex penalties, their values and proximal maps.

A :class:`PenaltySpec` is declarative: SLOPE and smoothed-OWL weights are
stored as a step profile on (0, 1] and materialized at the dimension of
each call, so one spec drives experiments across dimensions. Every family
here is normalized so that its value grows linearly in the dimension for
a fixed empirical distribution of coordinates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import NoConvergence, Unevaluable, ValidationError
from .isotonic import isotonic_decreasing, pooled_blocks_root_ratio, pooled_root_ratio
from .pr1 import PR1Map, validate_pr1

DEFAULT_TOL = 1e-8
MAX_ITERS = 10_000

KINDS = ("separable", "slope", "sowl", "l2_power", "l1_power")


@dataclass(frozen=True)
class ScalarPenalty:
    """rho in a separable penalty sum_j rho(x_j).

    ``kind`` is ``"abs"`` (rho = weight |x|), ``"quadratic"``
    (rho = weight x^2) or ``"tabulated"`` (only prox[rho] is known).
    """

    kind: str
    weight: float = 0.0
    table: PR1Map | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("abs", "quadratic", "tabulated"):
            raise ValidationError(f"unknown scalar penalty kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValidationError("tabulated scalar penalty needs a PR1 map")
            bad = validate_pr1(self.table, tol=1e-9)
            if bad:
                raise ValidationError(f"tabulated prox is not in PR1: {bad[:3]}")
        elif not self.weight >= 0:
            raise ValidationError("scalar penalty weight must be >= 0")

    def prox(self, y, kappa=1.0):
        if self.kind == "abs":
            t = kappa * self.weight
            return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)
        if self.kind == "quadratic":
            return y / (1.0 + 2.0 * kappa * self.weight)
        return self.table.rescale(kappa)(y)


def _as_profile(profile):
    prof = [(float(t), float(v)) for t, v in profile]
    if not prof:
        raise ValidationError("weight profile must not be empty")
    ts = [t for t, _ in prof]
    vs = [v for _, v in prof]
    if any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] <= 0:
        raise ValidationError("profile breakpoints must increase within (0, 1]")
    if abs(ts[-1] - 1.0) > 1e-9:
        raise ValidationError("last profile breakpoint must be 1")
    if any(b > a for a, b in zip(vs, vs[1:])):
        raise ValidationError("profile weights must be nonincreasing")
    if vs[-1] < 0:
        raise ValidationError("profile weights must be nonnegative")
    return tuple(prof)


def profile_from_weights(weights):
    """Step profile reproducing ``weights`` exactly at its own length."""
    w = np.asarray(weights, dtype=float).ravel()
    k = w.size
    return tuple(((j + 1) / k, float(w[j])) for j in range(k))


@dataclass(frozen=True)
class PenaltySpec:
    """Declarative description of a symmetric convex penalty ``scale * f_p``."""

    kind: str
    scale: float = 1.0
    profile: tuple = ()
    alpha: float | None = None
    scalar: ScalarPenalty | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown penalty kind {self.kind!r}")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValidationError("penalty scale must be positive and finite")
        if self.kind in ("slope", "sowl"):
            object.__setattr__(self, "profile", _as_profile(self.profile))
            if self.kind == "sowl" and self.profile[-1][1] <= 0:
                raise ValidationError("smoothed OWL weights must be strictly positive")
        if self.kind in ("l2_power", "l1_power"):
            if self.alpha is None or not self.alpha >= 1:
                raise ValidationError("power penalties need alpha >= 1")
        if self.kind == "separable" and self.scalar is None:
            raise ValidationError("separable penalty needs a scalar penalty")

    # constructors -----------------------------------------------------
    @classmethod
    def slope(cls, weights=None, profile=None, scale=1.0):
        return cls("slope", scale, profile=profile or profile_from_weights(weights))

    @classmethod
    def sowl(cls, weights=None, profile=None, scale=1.0):
        return cls("sowl", scale, profile=profile or profile_from_weights(weights))

    @classmethod
    def l2_power(cls, alpha, scale=1.0):
        return cls("l2_power", scale, alpha=float(alpha))

    @classmethod
    def l1_power(cls, alpha, scale=1.0):
        return cls("l1_power", scale, alpha=float(alpha))

    @classmethod
    def lasso(cls, xi, scale=1.0):
        return cls("separable", scale, scalar=ScalarPenalty("abs", float(xi)))

    @classmethod
    def ridge(cls, c, scale=1.0):
        return cls("separable", scale, scalar=ScalarPenalty("quadratic", float(c)))

    @classmethod
    def zero(cls):
        return cls.ridge(0.0)

    @classmethod
    def tabulated(cls, pr1_map, scale=1.0):
        return cls("separable", scale, scalar=ScalarPenalty("tabulated", table=pr1_map))

    def scaled(self, factor):
        return replace(self, scale=self.scale * float(factor))

    def weights(self, p):
        """Materialize the weight profile at dimension p, sampled at (j - 1/2)/p."""
        ts = np.array([t for t, _ in self.profile])
        vs = np.array([v for _, v in self.profile])
        levels = (np.arange(p) + 0.5) / p
        idx = np.searchsorted(ts, levels - 1e-12, side="left")
        return vs[np.clip(idx, 0, len(vs) - 1)]

    @property
    def is_separable(self):
        return self.kind == "separable" or (self.kind == "l2_power" and self.alpha == 2)

    # serialization ----------------------------------------------------
    def to_dict(self):
        d = {"variant": self.kind, "scale": self.scale}
        if self.kind in ("slope", "sowl"):
            d["profile"] = [list(tv) for tv in self.profile]
        elif self.kind in ("l2_power", "l1_power"):
            d["alpha"] = self.alpha
        elif self.scalar.kind == "tabulated":
            t = self.scalar.table
            d["scalar"] = {"kind": "tabulated", "y": t.breakpoints.tolist(),
                           "x": t.values.tolist(), "slope_left": t.slope_left,
                           "slope_right": t.slope_right}
        else:
            d["scalar"] = {"kind": self.scalar.kind, "weight": self.scalar.weight}
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kind = d["variant"]
        except (KeyError, TypeError):
            raise ValidationError("penalty JSON needs a 'variant' field") from None
        scale = float(d.get("scale", 1.0))
        kind = {"smoothed_owl": "sowl", "owl": "slope", "l2power": "l2_power",
                "l1power": "l1_power"}.get(kind, kind)
        if kind in ("slope", "sowl"):
            if "profile" in d:
                return cls(kind, scale, profile=tuple(map(tuple, d["profile"])))
            if "weights" in d:
                return cls(kind, scale, profile=profile_from_weights(d["weights"]))
            raise ValidationError(f"{kind} penalty needs 'profile' or 'weights'")
        if kind in ("l2_power", "l1_power"):
            if "alpha" not in d:
                raise ValidationError(f"{kind} penalty needs 'alpha'")
            return cls(kind, scale, alpha=float(d["alpha"]))
        if kind == "separable":
            s = d.get("scalar")
            if not isinstance(s, dict) or "kind" not in s:
                raise ValidationError("separable penalty needs a 'scalar' object")
            if s["kind"] == "tabulated":
                table = PR1Map(s["y"], s["x"], s["slope_left"], s["slope_right"])
                return cls(kind, scale, scalar=ScalarPenalty("tabulated", table=table))
            return cls(kind, scale, scalar=ScalarPenalty(s["kind"], float(s.get("weight", 0.0))))
        raise ValidationError(f"unknown penalty kind {kind!r}")

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# ----------------------------------------------------------------------
# evaluation

def _sorted_abs_desc(x):
    a = np.abs(x)
    # stable sort by value, ties by original index
    order = np.lexsort((np.arange(a.size), -a))
    return a[order], order


def _sowl_value(a_desc, lam):
    if not np.any(a_desc):
        return 0.0
    starts, s_num, s_den = pooled_blocks_root_ratio(a_desc**2, lam)
    return float(np.sum(np.sqrt(s_num * s_den)))


def evaluate(f, x):
    """scale * f_p(x)."""
    x = np.asarray(x, dtype=float).ravel()
    p = x.size
    if p < 1:
        raise ValidationError("dimension must be at least 1")
    k = f.scale
    if f.kind == "separable":
        s = f.scalar
        if s.kind == "abs":
            return k * s.weight * float(np.abs(x).sum())
        if s.kind == "quadratic":
            return k * s.weight * float(np.dot(x, x))
        raise Unevaluable("a tabulated scalar penalty has a prox but no value")
    if f.kind == "slope":
        a, _ = _sorted_abs_desc(x)
        return k * float(np.dot(f.weights(p), a))
    if f.kind == "sowl":
        a, _ = _sorted_abs_desc(x)
        # k * sowl_lam == sowl_{k^2 lam}
        return _sowl_value(a, k * k * f.weights(p))
    if f.kind == "l2_power":
        return k * p ** (1 - f.alpha / 2) * float(np.linalg.norm(x)) ** f.alpha
    if f.kind == "l1_power":
        return k * p ** (1 - f.alpha) * float(np.abs(x).sum()) ** f.alpha
    raise ValidationError(f"unknown penalty kind {f.kind!r}")


# ----------------------------------------------------------------------
# proximal maps

def _slope_prox(y, lam):
    a, order = _sorted_abs_desc(y)
    v = np.maximum(isotonic_decreasing(a - lam), 0.0)
    out = np.empty_like(y)
    out[order] = v
    return np.sign(y) * out


def _sowl_prox(y, lam):
    a, order = _sorted_abs_desc(y)
    if not np.any(a):
        return np.zeros_like(y)
    # reduced problem in eta: min sum y^2/(2(1+eta)) + lam eta / 2, eta
    # nonincreasing along |y|; blockwise 1 + eta = sqrt(sum y^2 / sum lam)
    r = pooled_root_ratio(a**2, lam)
    with np.errstate(divide="ignore"):
        shrink = np.where(r > 1.0, 1.0 - 1.0 / r, 0.0)
    out = np.empty_like(y)
    out[order] = a * shrink
    return np.sign(y) * out


def sowl_prox_alternating(y, lam, tol=DEFAULT_TOL, max_iter=MAX_ITERS):
    """Smoothed-OWL prox by alternating minimization over (x, eta).

    Kept as an independent cross-check of the pooled closed form used by
    :func:`prox`. Stops when successive iterates move less than ``tol``.
    """
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    a, order = _sorted_abs_desc(y)
    x = a.copy()
    for it in range(1, max_iter + 1):
        if not np.any(x):
            eta = np.zeros_like(x)
        else:
            eta = pooled_root_ratio(x**2, lam)
        x_new = a * eta / (1.0 + eta)
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if step <= tol:
            out = np.empty_like(y)
            out[order] = x
            return np.sign(y) * out
    raise NoConvergence("alternating smoothed-OWL prox did not converge",
                        iterations=max_iter, residual=step)


def _l2_power_prox(y, c, alpha):
    r = float(np.linalg.norm(y))
    if r == 0.0:
        return np.zeros_like(y)
    if alpha == 1:
        s = max(r - c, 0.0)
    elif alpha == 2:
        s = r / (1.0 + 2.0 * c)
    else:
        def h(s):
            return s + c * alpha * s ** (alpha - 1) - r
        s = brentq(h, 0.0, r, xtol=1e-15 * r, rtol=1e-14, maxiter=500)
    return (s / r) * y


def _l1_power_prox(y, c, alpha):
    a = np.abs(y)
    top = float(a.max()) if a.size else 0.0
    if top == 0.0:
        return np.zeros_like(y)
    if alpha == 1:
        t = c
    else:
        def h(t):
            return t - c * alpha * float(np.maximum(a - t, 0.0).sum()) ** (alpha - 1)
        if h(0.0) >= 0:
            t = 0.0
        else:
            t = brentq(h, 0.0, top, xtol=1e-15 * top, rtol=1e-14, maxiter=500)
    return np.sign(y) * np.maximum(a - t, 0.0)


def prox(f, y, tol=DEFAULT_TOL):
    """argmin_x 1/2 ||y - x||^2 + scale * f_p(x)."""
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValidationError("prox input must be finite")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    p = y.size
    k = f.scale
    if not np.any(y):
        return np.zeros_like(y)
    if f.kind == "separable":
        return f.scalar.prox(y, k)
    if f.kind == "slope":
        return _slope_prox(y, k * f.weights(p))
    if f.kind == "sowl":
        return _sowl_prox(y, k * k * f.weights(p))
    if f.kind == "l2_power":
        return _l2_power_prox(y, k * p ** (1 - f.alpha / 2), f.alpha)
    if f.kind == "l1_power":
        return _l1_power_prox(y, k * p ** (1 - f.alpha), f.alpha)
    raise ValidationError(f"unknown penalty kind {f.kind!r}")


# ----------------------------------------------------------------------
# optimality certificate

PROBE_SCALES = (0.01, 0.1, 1.0)


def kkt_probes(y, x, n_probes, rng):
    """Probe points for the subgradient inequality at x."""
    p = x.size
    base = [x, y, np.zeros_like(x), -x]
    probes = list(base[:n_probes])
    radius = 1.0 + float(np.linalg.norm(x))
    kinds = ("flip", "perm") + tuple(PROBE_SCALES)
    i = 0
    while len(probes) < n_probes:
        kind = kinds[i % len(kinds)]
        if kind == "flip":
            probes.append(x * rng.choice((-1.0, 1.0), size=p))
        elif kind == "perm":
            probes.append(x[rng.permutation(p)])
        else:
            probes.append(x + kind * radius * rng.standard_normal(p) / np.sqrt(p))
        i += 1
    return probes


def kkt_residual(f, y, x, n_probes=200, seed=0):
    """Largest normalized violation of f(x') >= f(x) + <y - x, x' - x> over probes.

    Zero means ``y - x`` passes as a subgradient of f at x on every probe,
    which certifies x = prox(f, y) up to the probe set.
    """
    if n_probes < 1:
        raise ValidationError("n_probes must be at least 1")
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    g = y - x
    fx = evaluate(f, x)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for xp in kkt_probes(y, x, n_probes, rng):
        d = xp - x
        viol = fx + float(np.dot(g, d)) - evaluate(f, xp)
        worst = max(worst, viol / (1.0 + float(np.linalg.norm(d))))
    return worst
