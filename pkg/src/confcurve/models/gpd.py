"""Generalised Pareto exceedances with a record-probability interest parameter.

Density ``f(x; a, sigma) = (1/sigma) (1 - a x / sigma)^(1/a - 1)`` on
``0 <= x <= sigma / a`` with ``a, sigma > 0``. The interest parameter is the
probability that a Poisson(rate) number of future exceedances contains one
beyond the record margin ``m``::

    p(a, sigma) = 1 - exp(-rate * (1 - a m / sigma) ** (1 / a))

Fitting is vectorised over many data sets at once because the median
correction needs tens of thousands of refits per parameter value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .._numeric import OptimizerError, bisect_vec, golden_max_vec

DEFAULT_RATE = 195.0 / 8.0
DEFAULT_MARGIN = 0.285

_SCAN = 24
_GOLDEN_ITERS = 48


def gpd_loglik(a, sigma, x):
    """Log-likelihood, data on the last axis; ``-inf`` outside the support."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)[..., None]
    sigma = np.asarray(sigma, dtype=float)[..., None]
    n = x.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.log1p(-a * x / sigma)
        ll = -n * np.log(sigma[..., 0]) + (1.0 / a[..., 0] - 1.0) * np.sum(z, axis=-1)
    return np.where(np.isnan(ll), -np.inf, ll)


def tail_probability(a, sigma, margin):
    """``P(X > margin) = (1 - a margin / sigma)^(1/a)``, zero past the endpoint."""
    a = np.asarray(a, dtype=float)
    arg = -a * margin / np.asarray(sigma, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.exp(np.log1p(arg) / a)
    return np.where(arg > -1.0, out, 0.0)


def p_of(a, sigma, rate=DEFAULT_RATE, margin=DEFAULT_MARGIN):
    """Interest parameter ``p(a, sigma)``."""
    return -np.expm1(-rate * tail_probability(a, sigma, margin))


def sigma_for_p(a, p0, rate=DEFAULT_RATE, margin=DEFAULT_MARGIN):
    """Scale on the constraint ``p(a, sigma) = p0`` for given shape ``a``."""
    a = np.asarray(a, dtype=float)
    log_tau = np.log(-np.log1p(-np.asarray(p0, dtype=float)) / rate)
    return a * margin / -np.expm1(a * log_tau)


def sample_gpd(a: float, sigma: float, rng: np.random.Generator, size: int | None, n: int) -> np.ndarray:
    """Inverse-CDF draws; shape ``(size, n)`` or ``(n,)``."""
    shape = (n,) if size is None else (size, n)
    u = rng.random(shape)
    return sigma * -np.expm1(a * np.log1p(-u)) / a


def _profile_theta(x, theta):
    """Log-likelihood maximised over ``a`` at fixed ``theta = a / sigma``."""
    n = x.shape[-1]
    s = np.sum(np.log1p(-theta[..., None] * x), axis=-1)
    a = -s / n
    return -n * np.log(a) + n * np.log(theta) - n - s


def fit_gpd_batch(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """MLE ``(a, sigma, loglik)`` for each row of ``x``.

    Reduces to one dimension in ``theta = a / sigma`` (for fixed ``theta`` the
    optimal shape is ``-mean(log(1 - theta x))``), scans a grid, then runs
    golden section and two Newton polish steps. The shape is kept below 1,
    where the likelihood is bounded.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    xmax = x.max(axis=1)
    top = (1.0 - 1e-10) / xmax

    def shape_at(theta, rows):
        return -np.mean(np.log1p(-theta[:, None] * rows), axis=1)

    over = shape_at(top, x) > 1.0
    cap = top.copy()
    if over.any():
        sub = x[over]
        cap[over] = bisect_vec(lambda t: shape_at(t, sub) - 1.0, np.full(sub.shape[0], 1e-12), top[over])

    grid = cap[:, None] * (np.arange(1, _SCAN + 1) / _SCAN)[None, :]
    vals = np.stack([_profile_theta(x, grid[:, j]) for j in range(_SCAN)], axis=1)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    j = np.argmax(vals, axis=1)
    lo = np.where(j > 0, grid[np.arange(m), np.maximum(j - 1, 0)], cap * 1e-9)
    hi = grid[np.arange(m), np.minimum(j + 1, _SCAN - 1)]
    theta = golden_max_vec(lambda t: _profile_theta(x, t), lo, hi, iters=_GOLDEN_ITERS)

    for _ in range(2):
        d = 1.0 - theta[:, None] * x
        s = np.sum(np.log(d), axis=1)
        s1 = -np.sum(x / d, axis=1)
        s2 = -np.sum((x / d) ** 2, axis=1)
        g = -n * s1 / s + n / theta - s1
        hess = -n * (s2 * s - s1**2) / s**2 - n / theta**2 - s2
        step = np.where(hess < 0, -g / hess, 0.0)
        cand = theta + step
        ok = (cand > lo) & (cand < hi)
        better = _profile_theta(x, np.where(ok, cand, theta)) >= _profile_theta(x, theta)
        theta = np.where(ok & better, cand, theta)

    a = -np.mean(np.log1p(-theta[:, None] * x), axis=1)
    sigma = a / theta
    ll = _profile_theta(x, theta)
    return a, sigma, ll


def _shape_cap(xmax, log_tau, margin):
    """Largest admissible shape on the constraint for each data set."""
    cap = np.full(np.shape(xmax), 1.0 - 1e-9)
    tight = xmax > margin
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.log1p(-margin / xmax) / log_tau
    return np.where(tight, np.minimum(cap, bound * (1.0 - 1e-12)), cap)


def _constrained_ll(x, a, log_tau, margin):
    n = x.shape[-1]
    one_minus = -np.expm1(a * log_tau)
    sigma = a * margin / one_minus
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.sum(np.log1p(-x * (one_minus / margin)[..., None]), axis=-1)
        ll = -n * np.log(sigma) + (1.0 / a - 1.0) * z
    return np.where(np.isnan(ll), -np.inf, ll)


def profile_loglik_batch(x, p0, rate=DEFAULT_RATE, margin=DEFAULT_MARGIN) -> tuple[np.ndarray, np.ndarray]:
    """``max{l(a, sigma): p(a, sigma) = p0}`` per row; returns ``(loglik, a)``.

    ``sigma`` is eliminated through the constraint, leaving a bounded search
    over the shape by grid scan plus golden section.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = x.shape[0]
    p0 = float(p0)
    if not 0.0 < p0 < -math.expm1(-rate):
        raise ValueError(f"p0={p0} outside the attainable range")
    log_tau = math.log(-math.log1p(-p0) / rate)
    cap = _shape_cap(x.max(axis=1), log_tau, margin)
    grid = cap[:, None] * (np.arange(1, _SCAN + 1) / (_SCAN + 1))[None, :]
    vals = np.stack([_constrained_ll(x, grid[:, j], log_tau, margin) for j in range(_SCAN)], axis=1)
    j = np.argmax(vals, axis=1)
    rows = np.arange(m)
    lo = np.where(j > 0, grid[rows, np.maximum(j - 1, 0)], cap * 1e-7)
    hi = np.where(j < _SCAN - 1, grid[rows, np.minimum(j + 1, _SCAN - 1)], cap)
    a = golden_max_vec(lambda t: _constrained_ll(x, t, log_tau, margin), lo, hi, iters=_GOLDEN_ITERS)
    return _constrained_ll(x, a, log_tau, margin), a


def load_exceedances(path: str | Path) -> np.ndarray:
    """Read a one-column CSV of exceedances; a non-numeric first row is a header."""
    values = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0:
                    continue
                raise
    return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class GpdFit:
    shape: float
    scale: float
    loglik: float
    p: float


@dataclass(frozen=True)
class GpdStudy:
    """Exceedance data with the Poisson rate and record margin of the study."""

    data: np.ndarray = field(repr=False)
    rate: float = DEFAULT_RATE
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 1 or data.size < 3:
            raise ValueError("need a flat sample of at least 3 exceedances")
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise ValueError("exceedances must be finite and non-negative")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.size

    @cached_property
    def fit(self) -> GpdFit:
        a, s, ll = fit_gpd_batch(self.data[None, :])
        a, s, ll = float(a[0]), float(s[0]), float(ll[0])
        return GpdFit(a, s, ll, float(p_of(a, s, self.rate, self.margin)))

    @property
    def shape(self) -> float:
        return self.fit.shape

    @property
    def scale(self) -> float:
        return self.fit.scale

    @property
    def p_hat(self) -> float:
        return self.fit.p

    def loglik(self, a, sigma):
        return gpd_loglik(a, sigma, self.data)

    def p(self, a, sigma):
        return p_of(a, sigma, self.rate, self.margin)

    def profile_loglik(self, p0: float) -> float:
        return gpd_profile_loglik(self, p0)

    def w(self, p0):
        """Profile log-likelihood ratio ``2 (l_P(p_hat) - l_P(p0))``."""
        p0 = np.atleast_1d(np.asarray(p0, dtype=float))
        out = np.array([2.0 * (self.fit.loglik - gpd_profile_loglik(self, float(q))) for q in p0])
        return np.maximum(out, 0.0)


def gpd_profile_loglik(study: GpdStudy, p0: float) -> float:
    """Profile log-likelihood at ``p0``: golden section on the shape, then Newton polish."""
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1)")
    x = study.data[None, :]
    ll, a = profile_loglik_batch(x, p0, study.rate, study.margin)
    a = float(a[0])
    log_tau = math.log(-math.log1p(-p0) / study.rate)
    cap = float(_shape_cap(np.array([study.data.max()]), log_tau, study.margin)[0])

    def f(t):
        return float(_constrained_ll(x, np.array([t]), log_tau, study.margin)[0])

    best = f(a)
    for _ in range(20):
        e = 1e-5 * max(a, 1e-6)
        if a - e <= 0 or a + e >= cap:
            break
        f1 = (f(a + e) - f(a - e)) / (2 * e)
        f2 = (f(a + e) - 2 * best + f(a - e)) / (e * e)
        if f2 >= 0 or not math.isfinite(f2):
            break
        cand = a - f1 / f2
        if not 0.0 < cand < cap:
            break
        fc = f(cand)
        if fc < best:
            break
        converged = abs(cand - a) <= 1e-12 * max(1.0, a)
        a, best = cand, fc
        if converged:
            break
    if not math.isfinite(best):
        raise OptimizerError(f"profile likelihood failed at p0={p0}", best=a, diagnostics={"loglik": best})
    return best
