"""Exponential model in the rate parametrisation, ``f(x; theta) = theta exp(-theta x)``."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .base import Model, ParamScale, h
from .expfam import GammaFamily


class ExponentialRate(Model):
    """Rate of an exponential sample; ``2 n theta / mle ~ chi2_{2n}``."""

    key = "exp-rate"
    domain = (0.0, math.inf)
    scale = ParamScale("log")
    pivotal = True
    reference_theta = 1.0

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = int(n)

    def with_n(self, n):
        return ExponentialRate(n)

    @property
    def expfam(self) -> GammaFamily:
        """The same model as an exponential family in the mean ``1 / theta``."""
        return GammaFamily(self.n, 1.0)

    @staticmethod
    def to_mean(theta):
        return 1.0 / np.asarray(theta, dtype=float)

    def loglik(self, theta, data):
        theta = np.asarray(theta, dtype=float)
        s = np.sum(np.asarray(data, dtype=float), axis=-1)
        return self.n * np.log(theta) - theta * s

    def mle(self, data):
        return 1.0 / np.mean(np.asarray(data, dtype=float), axis=-1)

    def w(self, theta, that):
        # 2 n (theta/that - 1 - log(theta/that))
        return 2 * self.n * h(np.asarray(theta, dtype=float) / np.asarray(that, dtype=float))

    def se(self, theta):
        return np.asarray(theta, dtype=float) / math.sqrt(self.n)

    def sample(self, theta, rng, size=None):
        shape = (self.n,) if size is None else (size, self.n)
        return rng.exponential(1.0 / float(theta), size=shape)

    def estimator_cdf(self, y, theta):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return stats.chi2.sf(2 * self.n * np.asarray(theta, dtype=float) / y, 2 * self.n)

    def estimator_ppf(self, q, theta):
        return 2 * self.n * np.asarray(theta, dtype=float) / stats.chi2.isf(q, 2 * self.n)

    def median_slope(self) -> float:
        return float(2 * self.n / stats.chi2.ppf(0.5, 2 * self.n))

    def median(self, theta):
        return self.median_slope() * np.asarray(theta, dtype=float)

    def median_inverse(self, y):
        return np.asarray(y, dtype=float) / self.median_slope()
