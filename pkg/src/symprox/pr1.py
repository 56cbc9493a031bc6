"""Piecewise-linear nondecreasing 1-Lipschitz maps on the line.

A map in this class is exactly the proximal map of some convex scalar
function, so it doubles as a tabulated scalar prox.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LIPSCHITZ_TOL = 1e-12


@dataclass(frozen=True)
class Violation:
    kind: str  # "monotonicity" or "lipschitz"
    segment: int  # -1 for the left extension, m - 1 for the right one
    excess: float


class PR1Map:
    """Interpolate (y_i, x_i) inside [y_1, y_m] and extend linearly outside.

    Construction only checks shapes and strictly increasing breakpoints;
    use :func:`validate_pr1` for the monotone / 1-Lipschitz invariants.
    """

    __slots__ = ("_y", "_x", "slope_left", "slope_right", "metadata")

    def __init__(self, breakpoints, values, slope_left, slope_right, metadata=None):
        y = np.array(breakpoints, dtype=float).ravel()
        x = np.array(values, dtype=float).ravel()
        if y.size == 0 or y.shape != x.shape:
            raise ValidationError("breakpoints and values must be non-empty and aligned")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValidationError("breakpoints and values must be finite")
        if np.any(np.diff(y) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")
        y.setflags(write=False)
        x.setflags(write=False)
        self._y = y
        self._x = x
        self.slope_left = float(slope_left)
        self.slope_right = float(slope_right)
        self.metadata = dict(metadata or {})

    @property
    def breakpoints(self):
        return self._y

    @property
    def values(self):
        return self._x

    def __len__(self):
        return self._y.size

    def __repr__(self):
        return (f"PR1Map(m={len(self)}, range=[{self._y[0]:.4g}, {self._y[-1]:.4g}], "
                f"slopes=({self.slope_left:.3g}, {self.slope_right:.3g}))")

    def __call__(self, y):
        return apply(self, y)

    @classmethod
    def identity(cls):
        return cls([0.0], [0.0], 1.0, 1.0)

    @classmethod
    def constant(cls, c):
        return cls([0.0], [float(c)], 0.0, 0.0)

    @classmethod
    def soft_threshold(cls, t):
        t = float(t)
        if t <= 0:
            return cls.identity()
        return cls([-t, t], [0.0, 0.0], 1.0, 1.0)

    def segment_slopes(self):
        return np.diff(self._x) / np.diff(self._y)

    def rescale(self, kappa):
        """Map of prox[kappa * rho] given that this map is prox[rho].

        The graph of the subdifferential of rho is {(A(y), y - A(y))}, so
        prox[kappa rho] sends (1 - kappa) A(y) + kappa y to A(y).
        """
        kappa = float(kappa)
        if kappa <= 0:
            raise ValidationError("rescale factor must be positive")
        if kappa == 1.0:
            return self
        u = (1.0 - kappa) * self._x + kappa * self._y

        def tail(s):
            return s / ((1.0 - kappa) * s + kappa)

        return PR1Map(u, self._x, tail(self.slope_left), tail(self.slope_right),
                      metadata=self.metadata)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["y", "x"])
        for a, b in zip(self._y, self._x):
            writer.writerow([format(float(a), ".17g"), format(float(b), ".17g")])
        return buf.getvalue()

    def sidecar(self):
        return {"slope_left": self.slope_left, "slope_right": self.slope_right,
                "extension": "boundary_slope", **self.metadata}

    def to_sidecar_json(self):
        return json.dumps(self.sidecar(), indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, text, sidecar=None):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["y", "x"]:
            raise ValidationError("PR1 map CSV must have header 'y,x'")
        rows = [r for r in reader if r]
        y = [float(r[0]) for r in rows]
        x = [float(r[1]) for r in rows]
        meta = dict(json.loads(sidecar)) if isinstance(sidecar, str) else dict(sidecar or {})
        sl = meta.pop("slope_left", None)
        sr = meta.pop("slope_right", None)
        meta.pop("extension", None)
        if sl is None or sr is None:
            slopes = np.diff(x) / np.diff(y) if len(y) > 1 else [1.0]
            sl = slopes[0] if sl is None else sl
            sr = slopes[-1] if sr is None else sr
        return cls(y, x, sl, sr, metadata=meta)


def apply(pr1_map, y):
    """Evaluate the map; scalar in, scalar out."""
    yy = np.asarray(y, dtype=float)
    bp, vals = pr1_map.breakpoints, pr1_map.values
    out = np.interp(yy, bp, vals)
    out = np.where(yy < bp[0], vals[0] + pr1_map.slope_left * (yy - bp[0]), out)
    out = np.where(yy > bp[-1], vals[-1] + pr1_map.slope_right * (yy - bp[-1]), out)
    return float(out) if np.ndim(out) == 0 else out


def validate_pr1(pr1_map, tol=LIPSCHITZ_TOL):
    """List every monotonicity / Lipschitz violation; empty means valid."""
    violations = []
    dy = np.diff(pr1_map.breakpoints)
    dx = np.diff(pr1_map.values)
    for i in np.flatnonzero(dx < -tol):
        violations.append(Violation("monotonicity", int(i), float(-dx[i])))
    for i in np.flatnonzero(dx > dy + tol):
        violations.append(Violation("lipschitz", int(i), float(dx[i] / dy[i] - 1.0)))
    m = len(pr1_map)
    for seg, s in ((-1, pr1_map.slope_left), (m - 1, pr1_map.slope_right)):
        if s < -tol:
            violations.append(Violation("monotonicity", seg, float(-s)))
        elif s > 1 + tol:
            violations.append(Violation("lipschitz", seg, float(s - 1.0)))
    return violations


def from_samples(y, x, tol=1e-12):
    """Interpolating map through samples; duplicate y (within tol) are averaged.

    Tail slopes copy the boundary segment slopes. No repair is applied.
    """
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    order = np.argsort(y, kind="stable")
    y, x = y[order], x[order]
    new = np.ones(y.size, dtype=bool)
    new[1:] = np.diff(y) > tol
    run = np.cumsum(new) - 1
    counts = np.bincount(run)
    yu = y[new]
    xu = np.bincount(run, weights=x) / counts
    if yu.size == 1:
        return PR1Map(yu, xu, 0.0, 0.0)
    slopes = np.diff(xu) / np.diff(yu)
    return PR1Map(yu, xu, slopes[0], slopes[-1])


def clip_slopes(y, x):
    """Clip segment slopes into [0, 1] and re-accumulate from the left node."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    dy = np.diff(y)
    s = np.clip(np.diff(x) / dy, 0.0, 1.0)
    out = np.empty_like(x)
    out[0] = x[0]
    out[1:] = x[0] + np.cumsum(s * dy)
    return out, s
