"""Slow, obviously-correct reference implementations used as test oracles."""

import numpy as np


def sqdist(a, b):
    d = a - b
    return d[0] * d[0] + d[1] * d[1] + d[2] * d[2]


def brute_nearest(points, q):
    best, best_d = -1, np.inf
    for i, p in enumerate(points):
        d = sqdist(q, p)
        if d < best_d:
            best, best_d = i, d
    return best, best_d


def brute_knn(points, q, k):
    ds = [(sqdist(q, p), i) for i, p in enumerate(points)]
    ds.sort()
    return [(i, d) for d, i in ds[:k]]


def brute_chamfer(p1, p2):
    a = np.mean([min(sqdist(x, y) for y in p2) for x in p1])
    b = np.mean([min(sqdist(y, x) for x in p1) for y in p2])
    return a + b


def brute_rw_chamfer(p1, p2, m1):
    w1 = [1.0 + m for m in m1]
    t1 = sum(w * min(sqdist(x, y) for y in p2) for w, x in zip(w1, p1)) / sum(w1)
    w2, d2 = [], []
    for y in p2:
        j, d = brute_nearest(p1, y)
        w2.append(w1[j])
        d2.append(d)
    t2 = sum(w * d for w, d in zip(w2, d2)) / sum(w2)
    return t1 + t2


def trapezoid_bd(xa, ya, xb, yb, samples=200001):
    """Average gap of two cubic fits via dense trapezoid integration.

    The fits come from a direct Vandermonde solve (least squares), not polyfit.
    """
    def fit(x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        deg = min(3, len(x) - 1)
        v = np.vander(x, deg + 1)
        coef, *_ = np.linalg.lstsq(v, y, rcond=None)
        return coef

    ca, cb = fit(xa, ya), fit(xb, yb)
    lo, hi = max(min(xa), min(xb)), min(max(xa), max(xb))
    t = np.linspace(lo, hi, samples)
    diff = np.polyval(cb, t) - np.polyval(ca, t)
    h = t[1] - t[0]
    area = h * (diff.sum() - 0.5 * (diff[0] + diff[-1]))
    return area / (hi - lo)
