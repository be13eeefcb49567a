"""Small root-finding and optimisation helpers shared by the package."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


class OptimizerError(RuntimeError):
    """A numerical solver failed to converge.

    ``best`` holds the best iterate found and ``diagnostics`` a dict of
    whatever the solver knew when it gave up.
    """

    def __init__(self, message: str, best: float | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


def safeguarded_newton(
    f: Callable[[float], float],
    df: Callable[[float], float],
    lo: float,
    hi: float,
    x0: float | None = None,
    tol: float = 1e-10,
    maxiter: int = 100,
) -> float:
    """Root of ``f`` on ``[lo, hi]`` by Newton steps with a bisection fallback.

    ``f(lo)`` and ``f(hi)`` must have opposite signs. A Newton step that leaves
    the current bracket, or fails to halve ``|f|``, is replaced by bisection.
    Convergence is declared when ``|f(x)| <= tol`` or the bracket has collapsed
    to machine precision.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise OptimizerError(
            "root not bracketed", best=None, diagnostics={"lo": lo, "hi": hi, "f(lo)": flo, "f(hi)": fhi}
        )
    x = 0.5 * (lo + hi) if x0 is None or not lo < x0 < hi else x0
    fx = f(x)
    for it in range(maxiter):
        if abs(fx) <= tol:
            return x
        if np.sign(fx) == np.sign(flo):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        d = df(x)
        step_ok = False
        if d != 0.0 and math.isfinite(d):
            xn = x - fx / d
            if lo < xn < hi:
                fn = f(xn)
                if abs(fn) < 0.5 * abs(fx):
                    x, fx = xn, fn
                    step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
            fx = f(x)
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            return x
    if abs(fx) <= 1e3 * tol:
        return x
    raise OptimizerError(
        "Newton iteration did not converge", best=x, diagnostics={"f": fx, "bracket": (lo, hi), "maxiter": maxiter}
    )


def bisect_vec(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    iters: int = 200,
    xtol: float = 1e-13,
) -> np.ndarray:
    """Vectorised bisection for many independent brackets at once.

    Each pair ``(lo[i], hi[i])`` must bracket a sign change of ``f``. Stops when
    every bracket is narrower than ``xtol * max(1, |x|)`` or after ``iters``
    halvings.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
        if np.all(np.abs(hi - lo) <= xtol * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max_vec(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    iters: int = 60,
) -> np.ndarray:
    """Vectorised golden-section search for the maximiser of unimodal ``f``."""
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc >= fd
        # left: keep [a, d]; otherwise keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _INVPHI * (b - a)
        new_d = a + _INVPHI * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, np.nan, fd)
        fd_next = np.where(left, fc, np.nan)
        need = np.where(left, c_next, d_next)
        fneed = f(need)
        fc = np.where(left, fneed, fc_next)
        fd = np.where(left, fd_next, fneed)
        c, d = c_next, d_next
    return 0.5 * (a + b)


def chebyshev_nodes(lo: float, hi: float, count: int) -> np.ndarray:
    """Chebyshev-Lobatto nodes on ``[lo, hi]``, increasing, endpoints included."""
    k = np.arange(count)
    x = -np.cos(np.pi * k / (count - 1))
    return lo + 0.5 * (hi - lo) * (x + 1.0)
