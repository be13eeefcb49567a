"""Scalar-parameter model abstraction.

A :class:`Model` bundles the log-likelihood, a sampler, the maximum
likelihood estimator and, where a closed form exists, the distribution
function ``G(y; theta) = P(mle <= y; theta)`` of the estimator.

Every built-in one-parameter model has the MLE as a sufficient statistic, so
the log-likelihood ratio is exposed as a vectorised function ``w(theta, that)``
of the parameter and the observed MLE.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import special

from .._numeric import OptimizerError, bisect_vec, safeguarded_newton


class DomainError(ValueError):
    """Parameter value outside the model's parameter space."""


class UnavailableError(LookupError):
    """Requested quantity has no closed form for this model."""


@dataclass(frozen=True)
class ParamScale:
    """Monotone increasing map from the parameter space onto the real line.

    ``kind`` is ``"identity"``, ``"log"`` (``u = sign * log(sign * (theta - offset))``)
    or ``"logit"`` (``u = logit((theta - offset) / (upper - offset))``).
    Optimisers and root finders work on ``u``; public APIs never see it.
    """

    kind: str = "identity"
    offset: float = 0.0
    sign: float = 1.0
    upper: float = 1.0

    def to_free(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return theta
        if self.kind == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                return self.sign * np.log(self.sign * (theta - self.offset))
        if self.kind == "logit":
            return special.logit((theta - self.offset) / (self.upper - self.offset))
        raise ValueError(f"unknown scale kind {self.kind!r}")

    def from_free(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            return u
        if self.kind == "log":
            return self.offset + self.sign * np.exp(self.sign * u)
        if self.kind == "logit":
            return self.offset + (self.upper - self.offset) * special.expit(u)
        raise ValueError(f"unknown scale kind {self.kind!r}")

    def derivative(self, theta):
        """``du/dtheta``."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "identity":
            return np.ones_like(theta)
        if self.kind == "log":
            return 1.0 / np.abs(theta - self.offset)
        if self.kind == "logit":
            return (self.upper - self.offset) / ((theta - self.offset) * (self.upper - theta))
        raise ValueError(f"unknown scale kind {self.kind!r}")


def h(x):
    """``x - 1 - log(x)``, accurate near ``x = 1``."""
    x = np.asarray(x, dtype=float)
    d = x - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        return d - np.log1p(d)


class Model(ABC):
    """A regular scalar-parameter model with a sufficient MLE.

    Subclasses set ``key``, ``n``, ``domain`` and ``scale``. Models are
    immutable after construction; samplers take the random generator as an
    argument and keep no state.
    """

    key: str = "model"
    n: int = 1
    domain: tuple[float, float] = (-math.inf, math.inf)
    scale: ParamScale = ParamScale()
    #: sampling distribution of ``w(f(theta), mle)`` does not depend on theta
    #: for any map ``f`` built from the model's own median function.
    pivotal: bool = False
    reference_theta: float = 0.0

    # -- parameter space -------------------------------------------------
    def in_domain(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.domain
        return (theta > lo) & (theta < hi)

    def check_theta(self, theta) -> None:
        if not np.all(self.in_domain(theta)):
            raise DomainError(f"{self.key}: parameter {theta!r} outside domain {self.domain}")

    # -- likelihood ------------------------------------------------------
    @abstractmethod
    def loglik(self, theta, data):
        """Log-likelihood (up to a theta-free constant); data on the last axis."""

    @abstractmethod
    def sample(self, theta: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw data sets; shape ``(size, n)`` or ``(n,)`` when ``size`` is None."""

    @abstractmethod
    def mle(self, data):
        """Maximum likelihood estimate, vectorised over leading axes."""

    @abstractmethod
    def w(self, theta, that):
        """Log-likelihood ratio ``2 (l(that) - l(theta))`` as a function of the MLE."""

    @abstractmethod
    def se(self, theta):
        """First-order standard error of the MLE at ``theta``."""

    def with_n(self, n: int) -> "Model":
        raise NotImplementedError(f"{self.key} has no sample-size family")

    # -- estimator distribution -----------------------------------------
    def estimator_cdf(self, y, theta):
        """``G(y; theta) = P(mle <= y; theta)``."""
        raise UnavailableError(f"{self.key}: no closed-form estimator distribution")

    def estimator_ppf(self, q, theta):
        """Quantile of the MLE distribution by root finding on ``estimator_cdf``."""
        q = np.asarray(q, dtype=float)
        theta = np.asarray(theta, dtype=float)
        q, theta = np.broadcast_arrays(q, theta)
        u0 = self.scale.to_free(theta)
        step = self.se(theta) * self.scale.derivative(theta)

        def g(u):
            return self.estimator_cdf(self.scale.from_free(u), theta) - q

        lo, hi = u0 - step, u0 + step
        for _ in range(60):
            bad = g(lo) > 0
            if not bad.any():
                break
            lo = np.where(bad, u0 - 2 * (u0 - lo), lo)
        for _ in range(60):
            bad = g(hi) < 0
            if not bad.any():
                break
            hi = np.where(bad, u0 + 2 * (hi - u0), hi)
        return self.scale.from_free(bisect_vec(g, lo, hi))

    def median(self, theta):
        """Median ``b(theta)`` of the MLE."""
        return self.estimator_ppf(0.5, theta)

    def median_inverse(self, y):
        """``b^{-1}(y)``; generic version by root finding."""
        y = np.asarray(y, dtype=float)
        u0 = self.scale.to_free(y)
        step = self.se(y) * self.scale.derivative(y)

        def g(u):
            return self.median(self.scale.from_free(u)) - y

        lo, hi = u0 - step, u0 + step
        for _ in range(60):
            bad = g(lo) > 0
            if not bad.any():
                break
            lo = np.where(bad, u0 - 2 * (u0 - lo), lo)
        for _ in range(60):
            bad = g(hi) < 0
            if not bad.any():
                break
            hi = np.where(bad, u0 + 2 * (hi - u0), hi)
        return self.scale.from_free(bisect_vec(g, lo, hi))

    # -- helpers ---------------------------------------------------------
    def working_interval(self, that: float, width: float = 6.0) -> tuple[float, float]:
        """``that`` plus/minus ``width`` first-order standard errors, on the free scale."""
        u0 = float(self.scale.to_free(that))
        su = float(self.se(that) * self.scale.derivative(that))
        lo = float(self.scale.from_free(u0 - width * su))
        hi = float(self.scale.from_free(u0 + width * su))
        dlo, dhi = self.domain
        eps = 1e-12 * max(1.0, abs(that))
        return max(lo, dlo + eps), min(hi, dhi - eps)

    def mle_numeric(self, data, lo: float | None = None, hi: float | None = None) -> float:
        """MLE by safeguarded Newton on a finite-difference score.

        Used to cross-check the closed forms. Works on the free scale so that
        domain endpoints are never touched.
        """
        data = np.asarray(data, dtype=float)
        guess = float(self.mle(data)) if lo is None else 0.5 * (lo + hi)
        u0 = float(self.scale.to_free(guess))
        su = float(self.se(guess) * self.scale.derivative(guess))

        def ell(u):
            return float(self.loglik(self.scale.from_free(u), data))

        def score(u):
            e = 1e-5 * su
            return (ell(u + e) - ell(u - e)) / (2 * e)

        def dscore(u):
            e = 1e-4 * su
            return (ell(u + e) - 2 * ell(u) + ell(u - e)) / (e * e)

        a, b = u0 - 3 * su, u0 + 3 * su
        for _ in range(50):
            if score(a) > 0:
                break
            a -= 3 * su
        for _ in range(50):
            if score(b) < 0:
                break
            b += 3 * su
        try:
            u = safeguarded_newton(score, dscore, a, b, x0=u0, tol=1e-10 * max(1.0, abs(ell(u0))))
        except OptimizerError as exc:
            raise OptimizerError(f"{self.key}: MLE failed: {exc}", exc.best, exc.diagnostics) from exc
        return float(self.scale.from_free(u))


def loglik_ratio(model: Model, theta, data):
    """``w(theta; x) = 2 (l(mle; x) - l(theta; x))`` from the raw log-likelihood."""
    model.check_theta(theta)
    that = model.mle(data)
    return 2.0 * (model.loglik(that, data) - model.loglik(theta, data))


def w_level_roots(model: Model, theta_eval, y, side):
    """Values ``t`` of the MLE with ``w(theta_eval; t) = y`` on one side of ``theta_eval``.

    ``side`` is ``-1`` (``t < theta_eval``) or ``+1``. ``w(theta_eval; .)`` must be
    decreasing then increasing with minimum 0 at ``theta_eval``. Vectorised;
    bracketed bisection on the free scale to machine precision.
    """
    theta_eval, y, side = np.broadcast_arrays(
        np.asarray(theta_eval, dtype=float), np.asarray(y, dtype=float), np.asarray(side, dtype=float)
    )
    shape = theta_eval.shape
    theta_eval, y, side = theta_eval.ravel(), y.ravel(), side.ravel()
    u0 = model.scale.to_free(theta_eval)
    step = model.se(theta_eval) * model.scale.derivative(theta_eval)

    def g(u):
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            val = model.w(theta_eval, model.scale.from_free(u)) - y
        return np.where(np.isnan(val), np.inf, val)

    far = u0 + side * step
    edge = np.zeros(u0.shape, dtype=bool)
    for _ in range(80):
        short = (g(far) < 0) & ~edge
        if not short.any():
            break
        nxt = np.where(short, u0 + 2.0 * (far - u0), far)
        # w can stay bounded up to the domain edge; then the whole side is inside the level set
        edge |= short & (model.scale.from_free(nxt) == model.scale.from_free(far))
        far = nxt
    else:
        raise OptimizerError("w level set not bracketed", diagnostics={"theta": theta_eval[short], "y": y[short]})
    roots = bisect_vec(g, np.array(u0, copy=True), far, xtol=1e-15)
    roots = np.where(edge, far, roots)
    # rounding can leave w slightly positive at its own minimum
    roots = np.where((y <= 0) | (g(u0) >= 0), u0, roots)
    return model.scale.from_free(roots).reshape(shape)


def exact_w_cdf(model: Model, y, theta_eval, theta_gen):
    """Exact ``P(w(theta_eval; mle) <= y)`` when the MLE is drawn under ``theta_gen``.

    The event is ``t_lo <= mle <= t_hi`` for the two roots of
    ``w(theta_eval; t) = y``, so the probability is ``G(t_hi) - G(t_lo)``.
    """
    y = np.asarray(y, dtype=float)
    theta_eval = np.asarray(theta_eval, dtype=float)
    theta_gen = np.asarray(theta_gen, dtype=float)
    y, theta_eval, theta_gen = np.broadcast_arrays(y, theta_eval, theta_gen)
    finite = np.isfinite(y)
    yy = np.where(finite, np.maximum(y, 0.0), 0.0)
    lo = w_level_roots(model, theta_eval, yy, -1.0)
    hi = w_level_roots(model, theta_eval, yy, 1.0)
    p = model.estimator_cdf(hi, theta_gen) - model.estimator_cdf(lo, theta_gen)
    p = np.where(finite, p, np.where(y > 0, 1.0, 0.0))
    return np.clip(p, 0.0, 1.0)
