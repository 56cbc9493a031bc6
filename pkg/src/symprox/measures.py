"""Finitely supported probability measures on the line and the plane.

Everything here is immutable after construction. One-dimensional measures
carry sorted, merged atoms; W2 between them is computed through the quantile
coupling. Two-dimensional samples are compared by exact assignment.
"""
from __future__ import annotations

import csv
import io
import json

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import ndtr, ndtri

from .errors import InvalidGrid, OutOfRange, SizeMismatch, TooLarge, ValidationError

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-9
W2_2D_MAX_ATOMS = 4096

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _fmt(x):
    return format(float(x), ".17g")


class EmpiricalMeasure1D:
    """Weighted atoms on the real line.

    Atoms are sorted on construction and atoms closer than ``MERGE_TOL``
    are merged by adding their weights. Weights must sum to one (up to
    ``WEIGHT_TOL``); they are renormalized exactly afterwards.
    """

    __slots__ = ("_atoms", "_weights", "_cumw")

    def __init__(self, atoms, weights=None):
        atoms = np.asarray(atoms, dtype=float).ravel()
        if atoms.size == 0:
            raise ValidationError("a measure needs at least one atom")
        if weights is None:
            weights = np.full(atoms.size, 1.0 / atoms.size)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != atoms.shape:
            raise ValidationError("atoms and weights must have the same length")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(weights)):
            raise ValidationError("atoms and weights must be finite")
        if np.any(weights < 0):
            raise ValidationError("weights must be nonnegative")
        total = weights.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {total!r}, expected 1")

        order = np.argsort(atoms, kind="stable")
        atoms, weights = atoms[order], weights[order]
        keep = weights > 0
        atoms, weights = atoms[keep], weights[keep]

        # merge runs of atoms closer than MERGE_TOL to their run start
        new_run = np.ones(atoms.size, dtype=bool)
        new_run[1:] = np.diff(atoms) > MERGE_TOL
        run_id = np.cumsum(new_run) - 1
        merged_w = np.bincount(run_id, weights=weights)
        merged_a = atoms[new_run]

        merged_w = merged_w / merged_w.sum()
        self._atoms = merged_a
        self._weights = merged_w
        self._cumw = np.cumsum(merged_w)
        self._atoms.setflags(write=False)
        self._weights.setflags(write=False)
        self._cumw.setflags(write=False)

    @classmethod
    def from_samples(cls, x):
        x = np.asarray(x, dtype=float).ravel()
        return cls(x, np.full(x.size, 1.0 / x.size))

    @property
    def atoms(self):
        return self._atoms

    @property
    def weights(self):
        return self._weights

    @property
    def cumulative_weights(self):
        return self._cumw

    def __len__(self):
        return self._atoms.size

    def __eq__(self, other):
        if not isinstance(other, EmpiricalMeasure1D):
            return NotImplemented
        return (
            self._atoms.shape == other._atoms.shape
            and np.array_equal(self._atoms, other._atoms)
            and np.allclose(self._weights, other._weights, rtol=0, atol=1e-12)
        )

    def __repr__(self):
        return f"EmpiricalMeasure1D(n_atoms={len(self)}, mean={self.mean():.6g})"

    def mean(self):
        return float(np.dot(self._weights, self._atoms))

    def second_moment(self):
        return float(np.dot(self._weights, self._atoms**2))

    def variance(self):
        m = self.mean()
        return float(np.dot(self._weights, (self._atoms - m) ** 2))

    def quantile(self, t):
        return quantile(self, t)

    def to_dict(self):
        return {"atoms": [float(a) for a in self._atoms],
                "weights": [float(w) for w in self._weights]}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["atoms"], d["weights"])
        except KeyError as exc:
            raise ValidationError(f"measure JSON is missing field {exc}") from None

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["atom", "weight"])
        for a, w in zip(self._atoms, self._weights):
            writer.writerow([_fmt(a), _fmt(w)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["atom", "weight"]:
            raise ValidationError("measure CSV must have header 'atom,weight'")
        rows = [r for r in reader if r]
        atoms = [float(r[0]) for r in rows]
        weights = [float(r[1]) for r in rows]
        return cls(atoms, weights)


class GridMeasure:
    """Uniform measure on m quantile values taken at t_i = (i - 1/2)/m."""

    __slots__ = ("_q",)

    def __init__(self, quantile_grid):
        q = np.array(quantile_grid, dtype=float).ravel()
        if q.size < 2:
            raise InvalidGrid("a grid measure needs m >= 2 points")
        if not np.all(np.isfinite(q)):
            raise ValidationError("grid values must be finite")
        if np.any(np.diff(q) < 0):
            raise ValidationError("quantile grid must be nondecreasing")
        q.setflags(write=False)
        self._q = q

    @property
    def quantile_grid(self):
        return self._q

    @property
    def m(self):
        return self._q.size

    @property
    def levels(self):
        m = self._q.size
        return (np.arange(m) + 0.5) / m

    def __len__(self):
        return self._q.size

    def __repr__(self):
        return f"GridMeasure(m={self.m})"

    def to_empirical(self):
        return EmpiricalMeasure1D(self._q, np.full(self.m, 1.0 / self.m))

    def mean(self):
        return float(self._q.mean())

    def second_moment(self):
        return float(np.mean(self._q**2))

    def variance(self):
        return float(self._q.var())

    def quantile(self, t):
        return quantile(self, t)


class JointSample2D:
    """Weighted atoms in the plane, stored as an (n, 2) array of pairs."""

    __slots__ = ("_pairs", "_weights")

    def __init__(self, pairs, weights=None):
        pairs = np.array(pairs, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
            raise ValidationError("pairs must be a non-empty (n, 2) array")
        n = pairs.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.array(weights, dtype=float).ravel()
        if weights.shape != (n,):
            raise ValidationError("one weight per pair is required")
        if not np.all(np.isfinite(pairs)) or not np.all(np.isfinite(weights)):
            raise ValidationError("pairs and weights must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError("weights must be nonnegative and sum to 1")
        pairs.setflags(write=False)
        weights.setflags(write=False)
        self._pairs = pairs
        self._weights = weights

    @classmethod
    def from_columns(cls, u, v):
        return cls(np.column_stack([np.ravel(u), np.ravel(v)]))

    @property
    def pairs(self):
        return self._pairs

    @property
    def weights(self):
        return self._weights

    @property
    def u(self):
        return self._pairs[:, 0]

    @property
    def v(self):
        return self._pairs[:, 1]

    def __len__(self):
        return self._pairs.shape[0]

    def is_equal_weight(self):
        n = len(self)
        return bool(np.all(np.abs(self._weights - 1.0 / n) <= 1e-12))

    def subsample(self, size, rng):
        """Equal-weight subsample of ``size`` distinct atoms drawn with ``rng``."""
        n = len(self)
        if size >= n:
            return self
        idx = np.sort(rng.choice(n, size=size, replace=False))
        return JointSample2D(self._pairs[idx])

    def to_csv(self, header=("u", "v")):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([*header, "weight"])
        for (a, b), w in zip(self._pairs, self._weights):
            writer.writerow([_fmt(a), _fmt(b), _fmt(w)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValidationError("coupling CSV needs a header with two columns")
        rows = [r for r in reader if r]
        pairs = [(float(r[0]), float(r[1])) for r in rows]
        weights = [float(r[2]) for r in rows] if len(header) >= 3 else None
        return cls(pairs, weights)


def quantile(mu, t):
    """Left-continuous generalized inverse CDF of ``mu`` at level(s) ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)) or np.any(~(t_arr < 1)):
        raise OutOfRange("quantile levels must lie in the open interval (0, 1)")
    if isinstance(mu, GridMeasure):
        m = mu.m
        idx = np.ceil(t_arr * m - 1e-9).astype(int) - 1
        out = mu.quantile_grid[np.clip(idx, 0, m - 1)]
    else:
        cw = mu.cumulative_weights
        idx = np.searchsorted(cw, t_arr - 1e-12, side="left")
        out = mu.atoms[np.clip(idx, 0, len(mu) - 1)]
    return float(out) if np.ndim(out) == 0 else out


def _as_empirical(mu):
    return mu.to_empirical() if isinstance(mu, GridMeasure) else mu


def w2_1d(a, b):
    """W2 distance between two measures on the line via the quantile coupling."""
    a, b = _as_empirical(a), _as_empirical(b)
    breaks = np.union1d(a.cumulative_weights, b.cumulative_weights)
    breaks = np.clip(breaks, 0.0, 1.0)
    edges = np.concatenate([[0.0], breaks])
    edges[-1] = 1.0
    lengths = np.diff(edges)
    keep = lengths > 0
    mids = 0.5 * (edges[:-1] + edges[1:])[keep]
    lengths = lengths[keep]
    ia = np.clip(np.searchsorted(a.cumulative_weights, mids), 0, len(a) - 1)
    ib = np.clip(np.searchsorted(b.cumulative_weights, mids), 0, len(b) - 1)
    d2 = np.dot(lengths, (a.atoms[ia] - b.atoms[ib]) ** 2)
    return float(np.sqrt(max(d2, 0.0)))


def optimal_assignment(cost):
    """Exact minimum-cost perfect matching of a square cost matrix.

    Returns ``(rows, cols, total)``; ``cols[i]`` is the column matched to row i.
    """
    cost = np.asarray(cost, dtype=float)
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, float(cost[rows, cols].sum())


def w2_2d(a, b, max_atoms=W2_2D_MAX_ATOMS):
    """Exact W2 between two equal-size, equal-weight samples in the plane."""
    if len(a) != len(b):
        raise SizeMismatch(f"sample sizes differ: {len(a)} vs {len(b)}")
    n = len(a)
    if n > max_atoms:
        raise TooLarge(f"{n} atoms exceeds the exact-assignment cap of {max_atoms}")
    if not (a.is_equal_weight() and b.is_equal_weight()):
        raise ValidationError("w2_2d requires equal-weight samples")
    pa, pb = a.pairs, b.pairs
    cost = (
        (pa[:, 0, None] - pb[None, :, 0]) ** 2
        + (pa[:, 1, None] - pb[None, :, 1]) ** 2
    )
    _, _, total = optimal_assignment(cost)
    return float(np.sqrt(max(total / n, 0.0)))


def _mixture_cdf_pdf(x, atoms, weights, tau):
    # chunked so that the (points x atoms) block stays around 4M entries
    F = np.empty_like(x)
    f = np.empty_like(x)
    step = max(1, 4_000_000 // max(atoms.size, 1))
    for s in range(0, x.size, step):
        z = (x[s:s + step, None] - atoms[None, :]) / tau
        F[s:s + step] = ndtr(z) @ weights
        f[s:s + step] = (np.exp(-0.5 * z * z) @ weights) / (tau * _SQRT_2PI)
    return F, f


def gaussian_convolve(mu, tau, m, max_iter=200):
    """m-point quantile grid of ``mu * N(0, tau^2)``.

    The mixture CDF is inverted at the midpoint levels by safeguarded Newton
    steps inside a bisection bracket [min atom - 10 tau, max atom + 10 tau];
    iteration stops once every root is pinned to 1e-10 * max(1, tau).
    """
    if m < 2:
        raise InvalidGrid("grid size m must be at least 2")
    if tau < 0:
        raise ValidationError("tau must be nonnegative")
    mu = _as_empirical(mu)
    levels = (np.arange(m) + 0.5) / m
    if tau == 0:
        return GridMeasure(quantile(mu, levels))

    atoms, weights = mu.atoms, mu.weights
    tol = 1e-10 * max(1.0, tau)
    lo = np.full(m, atoms[0] - 10 * tau)
    hi = np.full(m, atoms[-1] + 10 * tau)
    x = np.clip(mu.mean() + np.sqrt(mu.variance() + tau**2) * ndtri(levels),
                lo, hi)
    active = np.arange(m)
    for _ in range(max_iter):
        if active.size == 0:
            break
        xa = x[active]
        F, f = _mixture_cdf_pdf(xa, atoms, weights, tau)
        resid = F - levels[active]
        below = resid < 0
        lo[active] = np.where(below, xa, lo[active])
        hi[active] = np.where(below, hi[active], xa)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            newton = xa - resid / f
        la, ha = lo[active], hi[active]
        ok = np.isfinite(newton) & (newton > la) & (newton < ha)
        x_new = np.where(ok, newton, 0.5 * (la + ha))
        done = (np.abs(x_new - xa) <= 0.5 * tol) | (ha - la <= tol) | (resid == 0)
        x[active] = np.where(resid == 0, xa, x_new)
        active = active[~done]
    # guard tiny non-monotonicity from independent root solves
    return GridMeasure(np.maximum.accumulate(x))
