"""Normal transformation family.

On the transformed scale the estimate satisfies
``phihat = phi + (1 + a phi)(Z - z0)`` with ``Z ~ N(0, 1)``. The MLE is
``phihat_c = phihat - c (1 + a phihat)``, which is again of this form with
scale factor ``1 - a c`` and bias constant ``z0_c = z0 + c / (1 - a c)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .base import DomainError, Model, ParamScale, h


def mle_shift(a: float, z0: float) -> float:
    """The constant ``c`` locating the MLE, written without cancellation.

    Algebraically equal to
    ``1/a - (1 - a z0) / (2 a^3) * (sqrt(1 + 4 a^2 / (1 - a z0)^2) - 1)``
    and continuous at ``a = 0`` where it equals ``-z0``.
    """
    s = 1.0 - a * z0
    root = math.sqrt(1.0 + 4.0 * a * a / (s * s))
    return 4.0 * (a - z0) / (s * (1.0 + root) * (s * root + 2.0 - s))


def mle_shift_raw(a: float, z0: float) -> float:
    """Direct evaluation of the textbook closed form for ``c`` (``a != 0``)."""
    s = 1.0 - a * z0
    return 1.0 / a - s / (2 * a**3) * (math.sqrt(1.0 + 4 * a * a / s**2) - 1.0)


class NormalTransform(Model):
    """Normal transformation model with acceleration ``a`` and bias constant ``z0``.

    Data is the single raw estimate ``phihat`` (shape ``(1,)``). ``n`` is
    nominal; the sample size enters only through ``a`` and ``z0``.
    """

    key = "normal-transform"
    pivotal = True
    reference_theta = 0.0

    def __init__(self, a: float, z0: float):
        self.a = float(a)
        self.z0 = float(z0)
        self.n = 1
        if self.a * self.z0 >= 1.0:
            # the closed-form MLE picks the wrong root of the score here
            raise DomainError("need a * z0 < 1")
        self.c = mle_shift(self.a, self.z0)
        self.k = 1.0 - self.a * self.c
        self.z0c = self.z0 + self.c / self.k
        if self.a > 0:
            self.domain = (-1.0 / self.a, math.inf)
            self.scale = ParamScale("log", offset=-1.0 / self.a, sign=1.0)
        elif self.a < 0:
            self.domain = (-math.inf, -1.0 / self.a)
            self.scale = ParamScale("log", offset=-1.0 / self.a, sign=-1.0)
        else:
            self.domain = (-math.inf, math.inf)
            self.scale = ParamScale()
        if self.z0c * self.a * self.k >= 1.0:
            raise DomainError("median function not increasing: need z0_c * a * (1 - a c) < 1")

    def _spread(self, phi):
        return 1.0 + self.a * np.asarray(phi, dtype=float)

    def loglik(self, theta, data):
        ph = np.asarray(data, dtype=float)[..., 0]
        s = self._spread(theta)
        return -0.5 * ((ph - theta) / s + self.z0) ** 2 - np.log(np.abs(s))

    def mle(self, data):
        ph = np.asarray(data, dtype=float)[..., 0]
        return ph - self.c * (1.0 + self.a * ph)

    def w(self, theta, that):
        theta = np.asarray(theta, dtype=float)
        that = np.asarray(that, dtype=float)
        s = self._spread(theta)
        x = (that - theta) / s
        ratio = 1.0 + self.a * x
        # expanded around that = theta so w vanishes there without cancellation;
        # the linear coefficient is zero up to rounding by the choice of c
        lin = self.z0c / self.k - self.a
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (x / self.k) ** 2 + 2.0 * lin * x + 2.0 * h(ratio)
        # an MLE beyond -1/a sits past a point where w diverges
        return np.where(ratio > 0, val, np.inf)

    def se(self, theta):
        return self.k * np.abs(self._spread(theta))

    def sample(self, theta, rng, size=None):
        shape = (1,) if size is None else (size, 1)
        z = rng.standard_normal(shape)
        return float(theta) + (1.0 + self.a * float(theta)) * (z - self.z0)

    def estimator_cdf(self, y, theta):
        y = np.asarray(y, dtype=float)
        return stats.norm.cdf((y - theta) / (self.k * self._spread(theta)) + self.z0c)

    def estimator_ppf(self, q, theta):
        return np.asarray(theta, dtype=float) + self.k * self._spread(theta) * (stats.norm.ppf(q) - self.z0c)

    def median(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta - self.z0c * self.k * self._spread(theta)

    def median_inverse(self, y):
        m = self.z0c * self.k
        return (np.asarray(y, dtype=float) + m) / (1.0 - self.a * m)
