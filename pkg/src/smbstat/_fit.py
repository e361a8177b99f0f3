"""Small least-squares fits shared by the diagnostics modules."""

from __future__ import annotations

import math

import numpy as np


def linear_fit(x, y):
    """Ordinary least squares ``y = a + b x``. Returns ``(a, b, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (a + b * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(a), float(b), r2


def loglog_slope(x, y) -> float:
    return linear_fit(np.log(x), np.log(y))[1]


def upper_half(n: int) -> slice:
    return slice(n // 2, None)


def growth_exponent(ns, values) -> float:
    """Asymptotic power ``e`` in ``values ~ C n^e``.

    Local log-log slopes between consecutive grid points are regressed on
    ``1/n`` over the upper half of the grid and extrapolated to ``1/n -> 0``;
    this removes the leading ``O(1/n)`` bias that lower-order terms put on a
    plain log-log fit at small ``n``.
    """
    ns = np.asarray(ns, dtype=float)
    v = np.asarray(values, dtype=float)
    if ns.size < 3:
        return loglog_slope(ns, v)
    local = np.diff(np.log(v)) / np.diff(np.log(ns))
    mid = np.sqrt(ns[1:] * ns[:-1])
    sl = upper_half(local.size)
    if local[sl].size < 2:
        return float(local[-1])
    a, _, _ = linear_fit(1.0 / mid[sl], local[sl])
    return a


def aitken(seq) -> float:
    """Aitken delta-squared limit from the last three terms of ``seq``."""
    a, b, c = (float(x) for x in seq[-3:])
    denom = (c - b) - (b - a)
    if denom == 0.0 or not math.isfinite(denom):
        return c
    return c - (c - b) ** 2 / denom
