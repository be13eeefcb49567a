"""Series inversion and the expansions behind the tail-symmetry results.

The central tool is the reflection of a convex function about its minimum:
for ``f(x) = x^2 + b3 x^3 + b4 x^4 + ...`` (any positive multiple) find
``g(x) = -x - a2 x^2 - a3 x^3 - ...`` with ``f(g(x)) = f(x)``. Coefficients
are solved order by order in exact rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .models.base import Model, w_level_roots
from .models.expfam import ExpFamModel

MAX_ORDER = 12


class NotConvexError(ValueError):
    """The series does not describe a function with a quadratic minimum at 0."""


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10**12) if not v.is_integer() else Fraction(int(v))
    return Fraction(v)


@dataclass(frozen=True)
class TruncatedSeries:
    """Power series ``sum c_k x^k`` truncated after ``x^order``, with rational coefficients."""

    coeffs: tuple[Fraction, ...]
    order: int

    def __post_init__(self):
        if not 0 <= self.order <= MAX_ORDER:
            raise ValueError(f"order must be in [0, {MAX_ORDER}]")
        c = [_frac(v) for v in self.coeffs[: self.order + 1]]
        c += [Fraction(0)] * (self.order + 1 - len(c))
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def of(cls, coeffs: Iterable, order: int | None = None) -> "TruncatedSeries":
        coeffs = list(coeffs)
        return cls(tuple(coeffs), len(coeffs) - 1 if order is None else order)

    def __getitem__(self, k: int) -> Fraction:
        return self.coeffs[k] if 0 <= k <= self.order else Fraction(0)

    def _same(self, other) -> tuple["TruncatedSeries", int]:
        if not isinstance(other, TruncatedSeries):
            other = TruncatedSeries((other,), self.order)
        return other, min(self.order, other.order)

    def __add__(self, other):
        other, k = self._same(other)
        return TruncatedSeries(tuple(self[i] + other[i] for i in range(k + 1)), k)

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(tuple(-c for c in self.coeffs), self.order)

    def __sub__(self, other):
        other, _ = self._same(other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            s = _frac(other)
            return TruncatedSeries(tuple(c * s for c in self.coeffs), self.order)
        k = min(self.order, other.order)
        out = [Fraction(0)] * (k + 1)
        for i in range(k + 1):
            if self[i]:
                for j in range(k + 1 - i):
                    out[i + j] += self[i] * other[j]
        return TruncatedSeries(tuple(out), k)

    __rmul__ = __mul__

    def __pow__(self, p: int):
        if p < 0:
            raise ValueError("negative powers are not supported")
        out = TruncatedSeries((Fraction(1),), self.order)
        base = self
        while p:
            if p & 1:
                out = out * base
            base = base * base
            p >>= 1
        return out

    def compose(self, inner: "TruncatedSeries") -> "TruncatedSeries":
        """``self(inner(x))``; ``inner`` must have zero constant term."""
        if inner[0] != 0:
            raise ValueError("inner series must vanish at 0")
        k = min(self.order, inner.order)
        out = TruncatedSeries((self[k],), k)
        for i in range(k - 1, -1, -1):
            out = out * inner + self[i]
        return out

    def __call__(self, x: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * x + float(c)
        return acc

    def is_zero(self, through: int | None = None) -> bool:
        k = self.order if through is None else through
        return all(self[i] == 0 for i in range(k + 1))


def lemma1_invert(b: Sequence) -> list[Fraction]:
    """Reflection coefficients ``[a2, ..., a_{K-1}]`` from ``[b3, ..., bK]``.

    With ``f(x) = x^2 + b3 x^3 + ... + bK x^K`` and ``g(x) = -x - sum a_k x^k``,
    the coefficient of ``x^m`` in ``f(g(x)) - f(x)`` depends on ``a_{m-1}``
    with slope 2 and otherwise only on lower ``a``, so the system is solved
    upward from ``m = 3``. The full residual is checked at the end.
    """
    bs = [_frac(v) for v in b]
    K = len(bs) + 2
    if K - 1 > MAX_ORDER:
        raise ValueError(f"at most {MAX_ORDER - 2} coefficients supported")
    if len(bs) == 0:
        return []
    f = TruncatedSeries.of([0, 0, 1, *bs])
    a: list[Fraction] = []
    for m in range(3, K + 1):
        # a_{m-1} enters the x^m coefficient of f(g) - f only through g^2, with slope 2
        g = TruncatedSeries.of([0, -1, *[-v for v in a], 0], m)
        resid = (f.compose(g) - f)[m]
        a.append(-resid / 2)
    out = a[: K - 2]
    residual = lemma1_residual(bs, out)
    if not residual.is_zero(K):
        raise NotConvexError("inconsistent coefficient system")
    return out


def lemma1_residual(b: Sequence, a: Sequence, order: int | None = None) -> TruncatedSeries:
    """``f(g(x)) - f(x)`` for the normalised ``f`` from ``b`` and ``g`` from ``a``."""
    bs = [_frac(v) for v in b]
    as_ = [_frac(v) for v in a]
    K = order if order is not None else len(bs) + 2
    f = TruncatedSeries.of([0, 0, 1, *bs], K)
    g = TruncatedSeries.of([0, -1, *[-v for v in as_]], K)
    return f.compose(g) - f


def lemma1_from_taylor(derivs: Sequence) -> list[Fraction]:
    """Reflection coefficients from derivatives ``f''(0), f'''(0), ...`` of a convex ``f``.

    Normalises to ``b_k = 2 f^(k)(0) / (k! f''(0))``.
    """
    d = [_frac(v) for v in derivs]
    if not d or d[0] <= 0:
        raise NotConvexError("second derivative at the minimum must be positive")
    b = [2 * d[j] / (math.factorial(j + 2) * d[0]) for j in range(1, len(d))]
    return lemma1_invert(b)


def cornish_fisher_quantile(rho3: float, rho4: float, n: float, alpha):
    """Standardised quantile of the MLE to second order."""
    z = stats.norm.ppf(np.asarray(alpha, dtype=float))
    rn = math.sqrt(n)
    return (
        z
        + rho3 / (6 * rn) * (z**2 - 1)
        + rho4 / (24 * n) * (z**3 - 3 * z)
        - rho3**2 / (36 * n) * (2 * z**3 - 5 * z)
    )


def median_expansion(model: ExpFamModel, theta):
    """``theta - rho3 sigma / (6 sqrt(n))``."""
    theta = np.asarray(theta, dtype=float)
    return theta - model.rho3(theta) * model.sigma(theta) / (6 * math.sqrt(model.n))


def edgeworth_tail(rho3: float, n: float, u):
    """``P(U > u)`` with one Edgeworth term: ``Phi(-u) + phi(u) rho3 (u^2 - 1) / (6 sqrt(n))``."""
    u = np.asarray(u, dtype=float)
    return stats.norm.cdf(-u) + stats.norm.pdf(u) * rho3 * (u**2 - 1) / (6 * math.sqrt(n))


def conjugate_point(model: Model, theta: float, that: float, median=None) -> float:
    """The point across ``b(theta)`` where ``w(b(theta); .)`` matches its value at ``that``."""
    bt = float(model.median(theta) if median is None else median(theta))
    if that == bt:
        raise ValueError("that coincides with b(theta); the conjugate point is itself")
    y = float(model.w(bt, that))
    side = -1.0 if that > bt else 1.0
    return float(w_level_roots(model, bt, y, side))


def conjugate_point_expansion(model: ExpFamModel, theta: float, that: float) -> float:
    """``theta + sigma (-U + k (U^2 - 1) - k^2 (U^3 - U))`` with ``k = rho3 / (3 sqrt(n))``."""
    s = float(model.sigma(theta))
    u = (that - theta) / s
    k = float(model.rho3(theta)) / (3 * math.sqrt(model.n))
    return theta + s * (-u + k * (u * u - 1) - k * k * (u**3 - u))


def conjugate_point_reflection(model: ExpFamModel, theta: float, that: float) -> float:
    """Three-term reflection about ``b(theta)`` built from ``eta'`` and ``eta''`` there."""
    s = float(model.sigma(theta))
    bt = float(model.median(theta))
    x = (that - bt) / s
    k = float(model.eta_second(bt)) * s / (3 * float(model.eta_prime(bt)))
    return bt + s * (-x - k * x * x - k * k * x**3)
