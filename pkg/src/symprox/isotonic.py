"""Stack-based pool-adjacent-violators routines.

All solvers work on a chain order and pool blocks through sufficient
statistics, so the same loop serves weighted least squares and the
ratio-type block minimizers used by the smoothed OWL penalty.
"""
import numpy as np


def _pool(s1, s2, value, decreasing):
    """Generic PAV over blocks described by additive statistics (s1, s2).

    ``value(a, b)`` maps block statistics to the block's optimal value and
    must be compatible with pooling (the pooled value lies between the
    values of the merged blocks). Returns the per-element fitted values.
    """
    n = len(s1)
    sums1 = []
    sums2 = []
    vals = []
    counts = []
    for i in range(n):
        a, b, c = s1[i], s2[i], 1
        v = value(a, b)
        while vals and ((vals[-1] < v) if decreasing else (vals[-1] > v)):
            a += sums1.pop()
            b += sums2.pop()
            c += counts.pop()
            vals.pop()
            v = value(a, b)
        sums1.append(a)
        sums2.append(b)
        counts.append(c)
        vals.append(v)
    return np.repeat(np.asarray(vals, dtype=float), counts)


def _mean(a, b):
    return a / b


def isotonic_decreasing(y, w=None):
    """argmin sum w (v - y)^2 subject to v_1 >= v_2 >= ... >= v_n."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    return _pool((w * y).tolist(), w.tolist(), _mean, decreasing=True)


def isotonic_increasing(y, w=None):
    """argmin sum w (v - y)^2 subject to v_1 <= v_2 <= ... <= v_n."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    return _pool((w * y).tolist(), w.tolist(), _mean, decreasing=False)


def _root_ratio(a, b):
    return (a / b) ** 0.5


def pooled_root_ratio(num, den):
    """Nonincreasing PAV fit for block values sqrt(sum num / sum den).

    This is the order-restricted minimizer shared by the smoothed OWL
    penalty and its proximal map: blockwise, sum(num)/eta + eta*sum(den)
    is minimized at eta = sqrt(sum num / sum den).
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return _pool(num.tolist(), den.tolist(), _root_ratio, decreasing=True)


def pooled_blocks_root_ratio(num, den):
    """Like :func:`pooled_root_ratio` but returns block boundaries too.

    Returns ``(starts, num_sums, den_sums)``.
    """
    num = np.asarray(num, dtype=float).tolist()
    den = np.asarray(den, dtype=float).tolist()
    sums1, sums2, vals, starts = [], [], [], []
    for i in range(len(num)):
        a, b, s = num[i], den[i], i
        v = (a / b) ** 0.5
        while vals and vals[-1] < v:
            a += sums1.pop()
            b += sums2.pop()
            s = starts.pop()
            vals.pop()
            v = (a / b) ** 0.5
        sums1.append(a)
        sums2.append(b)
        starts.append(s)
        vals.append(v)
    return np.asarray(starts), np.asarray(sums1), np.asarray(sums2)
