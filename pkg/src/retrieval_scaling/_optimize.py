"""Small deterministic one-dimensional minimizers."""

import math

import numpy as np

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


def golden_section(f, a, b, tol=1e-6):
    """Minimize a unimodal ``f`` on [a, b].

    Returns ``(x, f(x))`` for the best point evaluated once the bracket is
    narrower than ``tol``.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    yc, yd = f(c), f(d)
    for _ in range(n - 1):
        if yc <= yd:
            b, d, yd = d, c, yc
            h *= INV_PHI
            c = a + INV_PHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
    return (c, yc) if yc <= yd else (d, yd)


def grid_bracket(f, grid):
    """Evaluate ``f`` on a sorted grid; return (lo, hi, values) around the argmin.

    Ties resolve to the smallest grid point.
    """
    values = np.array([f(x) for x in grid], dtype=float)
    values[~np.isfinite(values)] = np.inf
    i = int(np.argmin(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    return lo, hi, values
