"""One-parameter exponential families in the mean-value parametrisation.

Per observation the density is ``exp(eta_bar * t(x) - psibar(eta_bar) - d(x))``.
With ``eta = n * eta_bar`` and ``psi(eta) = n * psibar(eta / n)`` the
log-likelihood of the sample mean ``y`` of ``t`` is ``eta * y - psi(eta)``;
the parameter is ``theta = psi'(eta) = E(y)`` and the MLE is ``y`` itself.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .._numeric import safeguarded_newton
from .base import Model, ParamScale, UnavailableError, h


class ExpFamModel(Model):
    """Abstract one-parameter exponential family.

    Subclasses provide ``psibar_deriv(eta_bar, k)`` for ``k = 0..5``, the
    canonical statistic ``t(x)`` and a sampler. ``eta_bar`` is obtained by
    inverting ``psibar'`` with safeguarded Newton unless overridden.
    """

    eta_domain: tuple[float, float] = (-math.inf, math.inf)

    def psibar_deriv(self, eta_bar, k: int):
        raise NotImplementedError

    def t(self, x):
        return np.asarray(x, dtype=float)

    # -- canonical parameter ----------------------------------------------
    def eta_bar(self, theta):
        """Per-observation canonical parameter, inverse of ``psibar'``."""
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.eta_domain
        out = np.empty(theta.shape)
        for idx, th in np.ndenumerate(theta):
            a = lo + 1e-12 if math.isfinite(lo) else -1.0
            b = hi - 1e-12 if math.isfinite(hi) else 1.0
            while not math.isfinite(lo) and self.psibar_deriv(a, 1) > th:
                a = 2 * a - 1.0
            while not math.isfinite(hi) and self.psibar_deriv(b, 1) < th:
                b = 2 * b + 1.0
            out[idx] = safeguarded_newton(
                lambda e: float(self.psibar_deriv(e, 1)) - th,
                lambda e: float(self.psibar_deriv(e, 2)),
                a,
                b,
                tol=1e-13 * max(1.0, abs(th)),
            )
        return out if out.ndim else float(out)

    def eta(self, theta):
        return self.n * np.asarray(self.eta_bar(theta))

    def psi_deriv(self, theta, k: int):
        """``psi^{(k)}(eta(theta)) = n^{1-k} psibar^{(k)}(eta_bar)``."""
        return self.n ** (1 - k) * self.psibar_deriv(self.eta_bar(theta), k)

    def sigma(self, theta):
        return np.sqrt(self.psi_deriv(theta, 2))

    def rho3(self, theta):
        return math.sqrt(self.n) * self.psi_deriv(theta, 3) / self.sigma(theta) ** 3

    def rho4(self, theta):
        return self.n * self.psi_deriv(theta, 4) / self.sigma(theta) ** 4

    def eta_prime(self, theta):
        """``d eta / d theta = 1 / psi''``."""
        return 1.0 / self.psi_deriv(theta, 2)

    def eta_second(self, theta):
        """``d^2 eta / d theta^2 = -psi''' / psi''^3``."""
        return -self.psi_deriv(theta, 3) / self.psi_deriv(theta, 2) ** 3

    def se(self, theta):
        return self.sigma(theta)

    # -- likelihood --------------------------------------------------------
    def loglik(self, theta, data):
        y = np.mean(self.t(data), axis=-1)
        eb = self.eta_bar(theta)
        return self.n * (eb * y - self.psibar_deriv(eb, 0))

    def mle(self, data):
        return np.mean(self.t(data), axis=-1)

    def w(self, theta, that):
        eb, ebh = self.eta_bar(theta), self.eta_bar(that)
        return 2 * self.n * (np.asarray(that) * (ebh - eb) - self.psibar_deriv(ebh, 0) + self.psibar_deriv(eb, 0))


class CustomExpFam(ExpFamModel):
    """Exponential family from user-supplied cumulant derivatives.

    ``psibar_derivs[k]`` is the ``k``-th derivative of the per-observation
    cumulant function; at least ``k = 0..4`` are required, a missing fifth is
    filled by a central difference. ``sampler(theta, rng, shape)`` draws raw
    observations. No exact estimator distribution unless ``estimator_cdf`` is
    passed. Set ``pivotal`` when the law of ``w(theta, mle)`` does not depend
    on ``theta``; Monte Carlo calibration then simulates at ``reference_theta``.
    """

    key = "expfam-custom"

    def __init__(
        self,
        psibar_derivs: Sequence[Callable],
        n: int,
        eta_domain: tuple[float, float],
        domain: tuple[float, float],
        sampler: Callable | None = None,
        t: Callable | None = None,
        estimator_cdf: Callable | None = None,
        scale: ParamScale = ParamScale(),
        pivotal: bool = False,
        reference_theta: float = 0.0,
    ):
        if len(psibar_derivs) < 5:
            raise ValueError("need cumulant derivatives of order 0..4")
        derivs = list(psibar_derivs)
        if len(derivs) < 6:
            d4 = derivs[4]

            def d5(e, _d4=d4):
                e = np.asarray(e, dtype=float)
                step = 1e-4 * np.maximum(1.0, np.abs(e))
                return (_d4(e + step) - _d4(e - step)) / (2 * step)

            derivs.append(d5)
        self._derivs = tuple(derivs)
        self.n = int(n)
        self.eta_domain = eta_domain
        self.domain = domain
        self.scale = scale
        self._sampler = sampler
        self._t = t
        self._cdf = estimator_cdf
        self.pivotal = pivotal
        self.reference_theta = reference_theta

    def psibar_deriv(self, eta_bar, k):
        return self._derivs[k](np.asarray(eta_bar, dtype=float))

    def t(self, x):
        return np.asarray(x, dtype=float) if self._t is None else self._t(np.asarray(x, dtype=float))

    def sample(self, theta, rng, size=None):
        if self._sampler is None:
            raise UnavailableError("custom family has no sampler")
        shape = (self.n,) if size is None else (size, self.n)
        return self._sampler(theta, rng, shape)

    def estimator_cdf(self, y, theta):
        if self._cdf is None:
            return super().estimator_cdf(y, theta)
        return self._cdf(y, theta)

    def with_n(self, n):
        return CustomExpFam(
            self._derivs, n, self.eta_domain, self.domain, self._sampler, self._t, self._cdf, self.scale,
            self.pivotal, self.reference_theta,
        )


class GammaFamily(ExpFamModel):
    """Gamma observations with known shape ``k`` and mean ``theta``.

    ``psibar(eta_bar) = -k log(-eta_bar)`` with ``eta_bar = -k / theta``. The
    sample mean has a Gamma(n k, scale theta / (n k)) law, so ``G`` is exact.
    """

    key = "gamma-mean"
    domain = (0.0, math.inf)
    eta_domain = (-math.inf, 0.0)
    scale = ParamScale("log")
    pivotal = True
    reference_theta = 1.0

    def __init__(self, n: int, shape: float = 1.0):
        if n < 1 or shape <= 0:
            raise ValueError("need n >= 1 and shape > 0")
        self.n = int(n)
        self.shape = float(shape)

    def with_n(self, n):
        return GammaFamily(n, self.shape)

    def eta_bar(self, theta):
        return -self.shape / np.asarray(theta, dtype=float)

    def psibar_deriv(self, eta_bar, k):
        e = np.asarray(eta_bar, dtype=float)
        if k == 0:
            return -self.shape * np.log(-e)
        return (-1) ** k * math.factorial(k - 1) * self.shape / e**k

    def w(self, theta, that):
        # 2 n k h(that / theta)
        return 2 * self.n * self.shape * h(np.asarray(that, dtype=float) / np.asarray(theta, dtype=float))

    def sample(self, theta, rng, size=None):
        shape = (self.n,) if size is None else (size, self.n)
        return rng.gamma(self.shape, float(theta) / self.shape, size=shape)

    def estimator_cdf(self, y, theta):
        nk = self.n * self.shape
        return stats.gamma.cdf(np.asarray(y, dtype=float) * nk / np.asarray(theta, dtype=float), nk)

    def estimator_ppf(self, q, theta):
        nk = self.n * self.shape
        return stats.gamma.ppf(q, nk) * np.asarray(theta, dtype=float) / nk

    def median(self, theta):
        return self.median_slope() * np.asarray(theta, dtype=float)

    def median_inverse(self, y):
        return np.asarray(y, dtype=float) / self.median_slope()

    def median_slope(self) -> float:
        nk = self.n * self.shape
        return float(stats.gamma.ppf(0.5, nk) / nk)


class NormalVariance(GammaFamily):
    """``N(0, theta)`` data; the MLE is the mean of squares, ``n mle / theta ~ chi2_n``."""

    key = "normal-var"

    def __init__(self, n: int):
        super().__init__(n, 0.5)

    def with_n(self, n):
        return NormalVariance(n)

    def t(self, x):
        return np.asarray(x, dtype=float) ** 2

    def loglik(self, theta, data):
        theta = np.asarray(theta, dtype=float)
        s = np.sum(np.asarray(data, dtype=float) ** 2, axis=-1)
        return -0.5 * self.n * np.log(2 * np.pi * theta) - s / (2 * theta)

    def w(self, theta, that):
        # n (that/theta - log(that/theta) - 1)
        return self.n * h(np.asarray(that, dtype=float) / np.asarray(theta, dtype=float))

    def sample(self, theta, rng, size=None):
        shape = (self.n,) if size is None else (size, self.n)
        return math.sqrt(float(theta)) * rng.standard_normal(shape)

    def estimator_cdf(self, y, theta):
        return stats.chi2.cdf(self.n * np.asarray(y, dtype=float) / np.asarray(theta, dtype=float), self.n)

    def estimator_ppf(self, q, theta):
        return stats.chi2.ppf(q, self.n) * np.asarray(theta, dtype=float) / self.n

    def median_slope(self) -> float:
        return float(stats.chi2.ppf(0.5, self.n) / self.n)


class NormalMean(ExpFamModel):
    """``N(theta, sigma^2)`` with known ``sigma``; symmetric, so ``b(theta) = theta``."""

    key = "normal-mean"
    pivotal = True
    reference_theta = 0.0

    def __init__(self, n: int, sigma: float = 1.0):
        self.n = int(n)
        self.sd = float(sigma)

    def with_n(self, n):
        return NormalMean(n, self.sd)

    def eta_bar(self, theta):
        return np.asarray(theta, dtype=float) / self.sd**2

    def psibar_deriv(self, eta_bar, k):
        e = np.asarray(eta_bar, dtype=float)
        if k == 0:
            return 0.5 * self.sd**2 * e**2
        if k == 1:
            return self.sd**2 * e
        if k == 2:
            return np.full_like(e, self.sd**2)
        return np.zeros_like(e)

    def loglik(self, theta, data):
        data = np.asarray(data, dtype=float)
        theta = np.asarray(theta, dtype=float)[..., None]
        return -0.5 * np.sum((data - theta) ** 2, axis=-1) / self.sd**2

    def w(self, theta, that):
        return self.n * (np.asarray(that, dtype=float) - np.asarray(theta, dtype=float)) ** 2 / self.sd**2

    def sample(self, theta, rng, size=None):
        shape = (self.n,) if size is None else (size, self.n)
        return float(theta) + self.sd * rng.standard_normal(shape)

    def estimator_cdf(self, y, theta):
        s = self.sd / math.sqrt(self.n)
        return stats.norm.cdf((np.asarray(y, dtype=float) - np.asarray(theta, dtype=float)) / s)

    def estimator_ppf(self, q, theta):
        return np.asarray(theta, dtype=float) + self.sd / math.sqrt(self.n) * stats.norm.ppf(q)

    def median(self, theta):
        return np.asarray(theta, dtype=float) * 1.0

    def median_inverse(self, y):
        return np.asarray(y, dtype=float) * 1.0
