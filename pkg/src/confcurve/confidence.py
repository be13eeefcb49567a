"""Confidence curves, confidence distributions and the transforms between them.

A confidence curve ``cc`` maps the parameter to ``[0, 1)``; its level sets
``{theta: cc(theta) <= 1 - alpha}`` are the confidence intervals. A confidence
distribution is a CDF on the parameter space whose quantiles are confidence
limits. Both are immutable wrappers around vectorised callables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy import stats

from ._numeric import OptimizerError, bisect_vec, chebyshev_nodes
from .models.base import Model, ParamScale, exact_w_cdf

CACHE_NODES = 513
WORKING_WIDTH = 6.0


class ModelViolationError(ValueError):
    """The estimator distribution breaks a monotonicity assumption."""


class IrregularCurveError(ValueError):
    """A confidence curve without a unique minimiser or with non-interval level sets."""


class CalibrationError(LookupError):
    """No sampling distribution of the likelihood ratio at the requested parameter."""


def _sign_at(center, theta):
    """``sign(center - theta)`` with the tie resolved to +1."""
    return np.where(np.asarray(theta) > center, -1.0, 1.0)


def _expand_bracket(g, u0, step, direction, tries=80):
    """Push ``u0 + direction * step * 2^k`` until ``g`` turns non-negative."""
    far = u0 + direction * step
    for _ in range(tries):
        short = g(far) < 0
        if not np.any(short):
            return far
        far = np.where(short, u0 + 2.0 * (far - u0), far)
    raise OptimizerError("could not bracket the level set", diagnostics={"direction": direction})


@dataclass(frozen=True)
class ConfidenceDistribution:
    """A confidence distribution ``theta -> [0, 1]``.

    ``center`` and ``spread`` describe where the mass sits (usually the
    estimate and its standard error); they size the quantile cache.
    """

    func: Callable = field(repr=False)
    center: float
    spread: float
    domain: tuple[float, float] = (-math.inf, math.inf)
    scale: ParamScale = ParamScale()

    def cdf(self, theta):
        return np.clip(self.func(np.asarray(theta, dtype=float)), 0.0, 1.0)

    __call__ = cdf

    def _free_window(self, width):
        u0 = float(self.scale.to_free(self.center))
        su = float(self.spread * self.scale.derivative(self.center))
        lo, hi = u0 - width * su, u0 + width * su
        # the free scale already maps finite endpoints to infinity unless identity
        if self.scale.kind == "identity":
            dlo, dhi = self.domain
            if math.isfinite(dlo):
                lo = max(lo, dlo + 1e-12 * max(1.0, abs(dlo)))
            if math.isfinite(dhi):
                hi = min(hi, dhi - 1e-12 * max(1.0, abs(dhi)))
        return lo, hi

    @cached_property
    def _cache(self):
        lo, hi = self._free_window(WORKING_WIDTH)
        u = chebyshev_nodes(lo, hi, CACHE_NODES)
        return u, self.cdf(self.scale.from_free(u))

    def quantile(self, q):
        """Inverse CDF by bisection inside brackets read off the node cache."""
        q = np.asarray(q, dtype=float)
        if np.any((q <= 0) | (q >= 1)):
            raise ValueError("quantile level must lie in (0, 1)")
        shape = q.shape
        q = q.ravel()
        u, c = self._cache
        c = np.maximum.accumulate(c)
        j = np.searchsorted(c, q, side="left")
        lo = u[np.clip(j - 1, 0, len(u) - 1)]
        hi = u[np.clip(j, 0, len(u) - 1)]
        span = u[-1] - u[0]

        def g(v):
            return self.cdf(self.scale.from_free(v)) - q

        below = j == 0
        above = j >= len(u)
        if below.any():
            lo = np.where(below, _expand_bracket(lambda v: -g(v), np.full(q.shape, u[0]), span, -1.0), lo)
        if above.any():
            hi = np.where(above, _expand_bracket(g, np.full(q.shape, u[-1]), span, 1.0), hi)
        root = bisect_vec(g, lo, hi, xtol=1e-15)
        return self.scale.from_free(root).reshape(shape)

    @property
    def median(self) -> float:
        return float(self.quantile(0.5))

    def interval(self, level: float) -> tuple[float, float]:
        """Equal-tailed interval ``(C^{-1}(alpha/2), C^{-1}(1 - alpha/2))``."""
        alpha = 1.0 - level
        lo, hi = self.quantile(np.array([alpha / 2, 1 - alpha / 2]))
        return float(lo), float(hi)

    def check_monotone(self, count: int = 201, tol: float = 1e-10) -> None:
        lo, hi = self._free_window(WORKING_WIDTH)
        vals = self.cdf(self.scale.from_free(np.linspace(lo, hi, count)))
        if np.any(np.diff(vals) < -tol):
            raise IrregularCurveError("distribution estimate is not monotone on the probed grid")


@dataclass(frozen=True)
class ConfidenceCurve:
    """A regular confidence curve with minimiser ``minimizer``."""

    func: Callable = field(repr=False)
    minimizer: float
    spread: float
    domain: tuple[float, float] = (-math.inf, math.inf)
    scale: ParamScale = ParamScale()

    def __call__(self, theta):
        return np.clip(self.func(np.asarray(theta, dtype=float)), 0.0, 1.0)

    def level_set(self, level: float) -> tuple[float, float]:
        """Endpoints of ``{theta: cc(theta) <= level}`` by bracketed bisection."""
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        u0 = float(self.scale.to_free(self.minimizer))
        su = float(self.spread * self.scale.derivative(self.minimizer))

        def g(v):
            return self(self.scale.from_free(v)) - level

        out = []
        for direction, edge in ((-1.0, self.domain[0]), (1.0, self.domain[1])):
            far = u0 + direction * su
            for _ in range(80):
                theta = float(self.scale.from_free(far))
                if theta == edge or not math.isfinite(theta):
                    # the curve stays below the level all the way to the boundary
                    out.append(edge)
                    break
                if g(far) >= 0:
                    root = bisect_vec(g, np.array([u0]), np.array([far]), xtol=1e-15)
                    out.append(float(self.scale.from_free(root)[0]))
                    break
                far = u0 + 2.0 * (far - u0)
            else:
                raise OptimizerError("could not bracket the level set", diagnostics={"direction": direction})
        return out[0], out[1]


def cc_from_distribution_values(c):
    """``|1 - 2 C|``."""
    return np.abs(1.0 - 2.0 * np.asarray(c, dtype=float))


def h_from_curve_values(cc, center, theta):
    """``(1 - sign(center - theta) cc) / 2`` with the tie at ``center`` read as +1."""
    return 0.5 * (1.0 - _sign_at(center, theta) * np.asarray(cc, dtype=float))


def curve_to_distribution(cc: ConfidenceCurve, check: bool = True) -> ConfidenceDistribution:
    """Distribution estimator ``H`` from a confidence curve."""
    center = cc.minimizer

    def func(theta):
        return h_from_curve_values(cc(theta), center, theta)

    cd = ConfidenceDistribution(func, center, cc.spread, cc.domain, cc.scale)
    if check:
        cd.check_monotone()
    return cd


def distribution_to_curve(cd: ConfidenceDistribution) -> ConfidenceCurve:
    """Tail-symmetric curve ``|1 - 2 C(theta)|`` pointing at the median of ``cd``."""
    return ConfidenceCurve(lambda t: cc_from_distribution_values(cd.cdf(t)), cd.median, cd.spread, cd.domain, cd.scale)


def exact_cd(model: Model, that: float, probe: int = 65) -> ConfidenceDistribution:
    """``C(theta) = 1 - G(that; theta)`` from the estimator distribution.

    Raises :class:`ModelViolationError` when ``G`` increases in ``theta`` on a
    probe grid around the estimate.
    """
    that = float(that)
    model.check_theta(that)

    def func(theta):
        return 1.0 - model.estimator_cdf(that, theta)

    lo, hi = model.working_interval(that)
    grid = model.scale.from_free(np.linspace(model.scale.to_free(lo), model.scale.to_free(hi), probe))
    vals = func(grid)
    if np.any(np.diff(vals) < -1e-12):
        raise ModelViolationError(f"{model.key}: G(y; theta) is not non-increasing in theta")
    return ConfidenceDistribution(func, that, float(model.se(that)), model.domain, model.scale)


def median_estimate(model: Model, that: float) -> float:
    """Median confidence estimator ``b^{-1}(that)``."""
    return float(model.median_inverse(that))


# -- calibrations -----------------------------------------------------------


class Calibration(Protocol):
    def cdf(self, y, theta):
        """``F(y; theta) = P(w(theta) <= y; theta)``."""


@dataclass(frozen=True)
class ChiSquareCalibration:
    """First-order chi-square reference, optionally Bartlett scaled."""

    df: int = 1
    bartlett: float = 1.0

    def cdf(self, y, theta=None):
        return stats.chi2.cdf(np.asarray(y, dtype=float) / self.bartlett, self.df)

    def ppf(self, q):
        return self.bartlett * stats.chi2.ppf(q, self.df)


@dataclass(frozen=True)
class ExactCalibration:
    """Exact ``F`` via the estimator distribution.

    With ``median`` given, the ratio is evaluated at ``median(theta)``, giving
    the law of the corrected ratio ``w(b(theta))`` under ``theta``.
    """

    model: Model
    median: Callable | None = None

    def cdf(self, y, theta):
        theta = np.asarray(theta, dtype=float)
        target = theta if self.median is None else self.median(theta)
        return exact_w_cdf(self.model, y, target, theta)


def cc_from_w(model: Model, that: float, calib) -> ConfidenceCurve:
    """``cc(theta) = F(w(theta); theta)``."""
    that = float(that)
    model.check_theta(that)

    def func(theta):
        return calib.cdf(model.w(theta, that), theta)

    return ConfidenceCurve(func, that, float(model.se(that)), model.domain, model.scale)


def central_grid(cd: ConfidenceDistribution, count: int = 201, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    """Parameter values at evenly spaced probability levels of ``cd``."""
    return cd.quantile(np.linspace(lo, hi, count))


def write_csv(path: str | Path, columns: dict[str, np.ndarray]) -> None:
    """CSV with a header row and every float at 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*arrays):
            writer.writerow(["%.17g" % v for v in row])


def export_curve(path, theta, cc: ConfidenceCurve, cd: ConfidenceDistribution | None = None) -> None:
    """Write ``theta,cc,H,C``; ``C`` is ``nan`` without an exact distribution."""
    theta = np.asarray(theta, dtype=float)
    ccv = cc(theta)
    h = h_from_curve_values(ccv, cc.minimizer, theta)
    c = cd.cdf(theta) if cd is not None else np.full(theta.shape, np.nan)
    write_csv(path, {"theta": theta, "cc": ccv, "H": h, "C": c})
