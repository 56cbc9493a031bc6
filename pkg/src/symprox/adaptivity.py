"""Finite checks of cyclic-monotonicity structure.

The joint check is a necessary-condition audit only: it looks at cycles
of bounded length over finitely supported couplings, so passing it does
not prove joint cyclic monotonicity of the family.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .errors import TooLarge, ValidationError
from .measures import JointSample2D, optimal_assignment
from .pr1 import from_samples, validate_pr1

MAX_ATOMS = 256
MAX_TUPLES = 20_000
CM_TOL = 1e-9


class DiscreteCoupling:
    """Equal-weight coupling of (X, G) over m atom pairs."""

    def __init__(self, x, g):
        x = np.asarray(x, dtype=float).ravel()
        g = np.asarray(g, dtype=float).ravel()
        if x.size == 0 or x.shape != g.shape:
            raise ValidationError("x and g must be non-empty and aligned")
        self.x = x
        self.g = g

    @classmethod
    def from_sample(cls, sample):
        if not sample.is_equal_weight():
            raise ValidationError("couplings must carry equal weights")
        return cls(sample.u, sample.v)

    @classmethod
    def from_map(cls, amap, y):
        """Coupling of (A(Y), Y - A(Y)) at the sample points y."""
        y = np.asarray(y, dtype=float).ravel()
        x = amap(y)
        return cls(x, y - x)

    def __len__(self):
        return self.x.size

    @property
    def m(self):
        return self.x.size

    def cross(self):
        """E[X G]."""
        return float(np.dot(self.x, self.g) / self.m)

    def to_sample(self):
        return JointSample2D.from_columns(self.x, self.g)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "g"])
        for a, b in zip(self.x, self.g):
            w.writerow([format(float(a), ".17g"), format(float(b), ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["x", "g"]:
            raise ValidationError("coupling CSV must have header 'x,g'")
        rows = [r for r in reader if r]
        return cls([float(r[0]) for r in rows], [float(r[1]) for r in rows])


@dataclass
class MonotoneResult:
    ok: bool
    witness: tuple | None = None  # ((x_i, g_i), (x_j, g_j)) with x_i < x_j, g_i > g_j

    def __bool__(self):
        return self.ok


def support_cyclically_monotone(pi, tol=None):
    """True iff no two atoms are ordered oppositely in x and in g.

    An inversion in g smaller than ``tol`` (default 1e-12 (1 + max|g|)) is
    treated as rounding noise.
    """
    x, g = pi.x, pi.g
    if tol is None:
        tol = 1e-12 * (1.0 + float(np.max(np.abs(g))))
    order = np.lexsort((g, x))
    xs, gs = x[order], g[order]
    best_g = -np.inf
    best_i = -1
    i = 0
    n = xs.size
    while i < n:
        j = i
        while j + 1 < n and xs[j + 1] == xs[i]:
            j += 1
        # atoms i..j share one x value; gs is sorted within the run
        if best_i >= 0 and gs[i] < best_g - tol:
            a, b = order[best_i], order[i]
            return MonotoneResult(False, ((float(x[a]), float(g[a])), (float(x[b]), float(g[b]))))
        top = i + int(np.argmax(gs[i:j + 1]))
        if gs[top] > best_g:
            best_g, best_i = gs[top], top
        i = j + 1
    return MonotoneResult(True)


def _cycles(k):
    """All cyclic permutations of range(k) with a single k-cycle."""
    out = []
    for rest in permutations(range(1, k)):
        cyc = (0,) + rest
        sigma = [0] * k
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            sigma[a] = b
        out.append(tuple(sigma))
    return out


def _max_matching(cost):
    rows, cols, total = optimal_assignment(-cost)
    return cols, -total


def _chain_value(fam, idx, sigma, start):
    """Value of a joint realization built link by link around the cycle."""
    k = len(idx)
    m = fam[idx[0]].m
    rho = {start: np.arange(m)}
    cur = start
    total = 0.0
    for _ in range(k - 1):
        nxt = sigma[cur]
        xa = fam[idx[cur]].x[rho[cur]]
        gb = fam[idx[nxt]].g
        cols, val = _max_matching(np.outer(xa, gb))
        rho[nxt] = cols
        total += val
        cur = nxt
    # closing link is forced by the choices already made
    total += float(np.dot(fam[idx[cur]].x[rho[cur]], fam[idx[sigma[cur]]].g[rho[sigma[cur]]]))
    return total / m


@dataclass
class CycleMargin:
    members: tuple
    sigma: tuple
    own: float  # sum_j E[X_j G_j]
    achieved: float  # value of an explicit joint realization
    upper: float  # sum of pairwise assignment optima
    exact: bool  # achieved equals the supremum (two-member cycles)

    @property
    def margin(self):
        return self.own - self.achieved

    @property
    def upper_margin(self):
        return self.own - self.upper

    @property
    def status(self):
        if self.margin < -CM_TOL:
            return "violation"
        if self.exact or self.upper_margin >= -CM_TOL:
            return "pass"
        return "inconclusive"

    def to_dict(self):
        return {"members": list(self.members), "sigma": list(self.sigma), "own": self.own,
                "achieved": self.achieved, "upper": self.upper, "margin": self.margin,
                "upper_margin": self.upper_margin, "status": self.status}


@dataclass
class JointCMReport:
    support_checks: list
    cycles: list = field(default_factory=list)

    @property
    def support_ok(self):
        return all(r.ok for r in self.support_checks)

    @property
    def violations(self):
        return [c for c in self.cycles if c.status == "violation"]

    @property
    def passed(self):
        return self.support_ok and not self.violations

    def to_dict(self):
        return {
            "passed": self.passed,
            "support_ok": self.support_ok,
            "support": [{"index": i, "ok": r.ok, "witness": r.witness}
                        for i, r in enumerate(self.support_checks)],
            "cycles": [c.to_dict() for c in self.cycles],
            "note": "necessary-condition audit over bounded cycles; not a proof",
        }


def joint_cm_check(family, max_cycle=2):
    """Audit a family of equal-weight couplings for joint cyclic monotonicity.

    Condition (i): every coupling has a monotone support. Condition (ii):
    for each set of members and each cyclic permutation sigma, no joint
    realization may give sum_j E[X_j G_sigma(j)] above sum_j E[X_j G_j].
    Two-member cycles are decided exactly by one assignment problem; longer
    cycles are probed with a link-by-link construction and bounded above by
    the sum of pairwise assignment optima.
    """
    fam = list(family)
    if not 2 <= max_cycle <= 4:
        raise ValidationError("max_cycle must lie in [2, 4]")
    if not fam:
        raise ValidationError("family must not be empty")
    for pi in fam:
        if pi.m > MAX_ATOMS:
            raise TooLarge(f"coupling with {pi.m} atoms exceeds the cap of {MAX_ATOMS}")
    report = JointCMReport([support_cyclically_monotone(pi) for pi in fam])
    sizes = {pi.m for pi in fam}
    if len(fam) < 2:
        return report
    if len(sizes) != 1:
        raise ValidationError("cycle checks need couplings with a common atom count")
    n_tuples = sum(len(list(combinations(range(len(fam)), k))) * len(_cycles(k))
                   for k in range(2, min(max_cycle, len(fam)) + 1))
    if n_tuples > MAX_TUPLES:
        raise TooLarge(f"{n_tuples} cycles exceed the cap of {MAX_TUPLES}")

    m = sizes.pop()
    pair_opt = {}

    def pair(a, b):
        if (a, b) not in pair_opt:
            pair_opt[(a, b)] = _max_matching(np.outer(fam[a].x, fam[b].g))[1] / m
        return pair_opt[(a, b)]

    for k in range(2, min(max_cycle, len(fam)) + 1):
        for idx in combinations(range(len(fam)), k):
            own = sum(fam[i].cross() for i in idx)
            for sigma in _cycles(k):
                upper = sum(pair(idx[j], idx[sigma[j]]) for j in range(k))
                if k == 2:
                    a, b = fam[idx[0]], fam[idx[1]]
                    cost = np.outer(a.x, b.g) + np.outer(a.g, b.x)
                    achieved = _max_matching(cost)[1] / m
                    exact = True
                else:
                    achieved = max(_chain_value(fam, idx, sigma, s) for s in range(k))
                    exact = False
                report.cycles.append(CycleMargin(idx, sigma, own, achieved, upper, exact))
    return report


def is_pr1(y, values, tol=1e-9):
    """True iff the interpolant through (y, values) is nondecreasing and 1-Lipschitz."""
    y = np.asarray(y, dtype=float).ravel()
    if np.unique(y).size != y.size:
        raise ValidationError("y values must be distinct")
    return not validate_pr1(from_samples(y, values), tol=tol)
