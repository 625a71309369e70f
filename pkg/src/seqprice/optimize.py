"""Scalar maximization on a bounded bracket.

Brent's golden-section/parabolic search, seeded from a uniform grid so that
objectives with several local maxima are handled, with an optional
first-order polish when the caller can supply the derivative.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

_GOLD = 0.5 * (3.0 - math.sqrt(5.0))
_EPS = np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, best=None, residual: float = math.nan):
        super().__init__(message)
        self.best = best
        self.residual = residual


def brent_max(f: Callable[[float], float], a: float, b: float,
              xtol: float = 1e-10, maxiter: int = 500) -> tuple[float, float]:
    """Maximize ``f`` on ``[a, b]``; return ``(x, f(x))``.

    Endpoints are compared against the interior result so that a maximum
    sitting on the boundary of the bracket is returned exactly.
    """
    if b < a:
        a, b = b, a
    lo, hi = a, b
    x = w = v = a + _GOLD * (b - a)
    fx = fw = fv = -f(x)
    d = e = 0.0
    for _ in range(maxiter):
        m = 0.5 * (a + b)
        tol1 = 4.0 * _EPS * abs(x) + xtol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < m else -tol1
                use_golden = False
        if use_golden:
            e = (b - x) if x < m else (a - x)
            d = _GOLD * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d))
        fu = -f(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    best_x, best_f = x, -fx
    for end in (lo, hi):
        fe = f(end)
        if fe > best_f or (fe == best_f and end < best_x):
            best_x, best_f = end, fe
    return best_x, best_f


def maximize_scalar(f: Callable, lo: float, hi: float, *, n_seeds: int = 32,
                    xtol: float = 1e-10, fprime: Optional[Callable] = None,
                    max_refine: int = 4) -> tuple[float, float]:
    """Global-ish maximization of ``f`` over ``[lo, hi]``.

    ``f`` must accept both floats and numpy arrays (it is evaluated once
    on an ``n_seeds + 1`` point grid, then pointwise). Up to ``max_refine`` grid-local maxima are
    refined with :func:`brent_max`; the best wins and ties go to the
    smaller argument. When ``fprime`` is given and the refined point is
    interior, it is polished to a root of ``fprime``: function-value
    comparisons alone cannot resolve the argmax below ~sqrt(eps).
    """
    if hi < lo:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    if hi == lo:
        return lo, float(f(lo))
    grid = np.linspace(lo, hi, n_seeds + 1)
    vals = np.asarray(f(grid), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    padded = np.concatenate(([-np.inf], vals, [-np.inf]))
    is_peak = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:])
    peaks = np.flatnonzero(is_peak)
    # best peaks first; stable order keeps the smallest x among equal values
    peaks = peaks[np.argsort(-vals[peaks], kind="stable")][:max_refine]

    def scalar(x):
        return float(f(x))

    best_x, best_f = float(grid[peaks[0]]), float(vals[peaks[0]])
    for k in peaks:
        a = grid[max(k - 1, 0)]
        b = grid[min(k + 1, n_seeds)]
        x, fx = brent_max(scalar, a, b, xtol=xtol)
        if fprime is not None and a < x < b:
            x, fx = _polish(scalar, fprime, x, fx, a, b)
        if fx > best_f or (fx == best_f and x < best_x):
            best_x, best_f = x, fx
    return best_x, best_f


def _polish(f, fprime, x, fx, a, b):
    r = 1e-6 * (1.0 + abs(x))
    left, right = max(a, x - r), min(b, x + r)
    g_left, g_right = fprime(left), fprime(right)
    if not (g_left > 0.0 > g_right):
        return x, fx
    root = brentq(fprime, left, right, xtol=1e-15, rtol=4 * _EPS, maxiter=200)
    froot = f(root)
    if froot >= fx - 1e-14 * max(1.0, abs(fx)):
        return root, froot
    return x, fx


def damped_fixed_point(g: Callable[[np.ndarray], np.ndarray], x0, *,
                       damping: float = 0.5, tol: float = 1e-14,
                       max_iter: int = 100_000) -> tuple[np.ndarray, int]:
    """Iterate ``x <- (1 - damping) x + damping g(x)`` to a fixed point.

    Returns ``(x, iterations)``; raises :class:`ConvergenceError` with the
    last iterate attached when ``max_iter`` is exhausted.
    """
    x = np.asarray(x0, dtype=float)
    step = math.inf
    for it in range(1, max_iter + 1):
        x_new = (1.0 - damping) * x + damping * np.asarray(g(x), dtype=float)
        if not np.all(np.isfinite(x_new)):
            raise ConvergenceError("fixed-point iterate left the finite reals", best=x)
        step = float(np.max(np.abs(x_new - x)))
        x = x_new
        if step < tol:
            return x, it
    raise ConvergenceError(f"no fixed point after {max_iter} iterations",
                           best=x, residual=step)
