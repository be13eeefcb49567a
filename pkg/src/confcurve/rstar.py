"""Directed likelihood and its higher-order modifications.

For a one-parameter exponential family with canonical parameter ``eta`` and
cumulant ``psi``::

    r(theta)  = sign(that - theta) * sqrt(w(theta))
    r*(theta) = r - log(r / u) / r,   u = (eta_hat - eta) * sqrt(psi''(eta_hat))

and the median-corrected version evaluates ``r`` at ``b(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .confidence import write_csv
from .models.base import Model
from .models.expfam import ExpFamModel
from .models.exponential import ExponentialRate

TAYLOR_ZONE = 0.01


def _family_view(model):
    """``(family, to_family, orientation)`` for models expressible as an exponential family.

    ``orientation`` is -1 when the map to the family's mean parameter is
    decreasing, which flips the sign of every directed quantity.
    """
    if isinstance(model, ExpFamModel):
        return model, (lambda t: np.asarray(t, dtype=float)), 1.0
    if isinstance(model, ExponentialRate):
        return model.expfam, model.to_mean, -1.0
    raise TypeError(f"{getattr(model, 'key', model)!r} is not a one-parameter exponential family")


def directed(model: Model, that: float, theta):
    """``r(theta) = sign(that - theta) sqrt(w(theta))``."""
    model.check_theta(theta)
    theta = np.asarray(theta, dtype=float)
    w = np.maximum(model.w(theta, that), 0.0)
    return np.sign(that - theta) * np.sqrt(w)


def _rstar_limit(fam: ExpFamModel, mu_hat: float, d):
    """Second-order Taylor polynomial of ``r*`` in ``d = eta - eta_hat``."""
    p2, p3, p4, p5 = (float(fam.psi_deriv(mu_hat, k)) for k in (2, 3, 4, 5))
    c0 = p3 / (6.0 * p2**1.5)
    c1 = (-(p2**3) + p2 * p4 / 24.0 - p3**2 / 18.0) / p2**2.5
    c2 = (-1080.0 * p2**3 * p3 + 54.0 * p2**2 * p5 - 180.0 * p2 * p3 * p4 + 115.0 * p3**3) / (6480.0 * p2**3.5)
    return c0 + c1 * d + c2 * d * d


def modified_directed(model: Model, that: float, theta):
    """``r*(theta)``; within ``0.01`` standard errors of ``that`` a Taylor limit replaces the 0/0 form."""
    model.check_theta(theta)
    fam, to_fam, orient = _family_view(model)
    theta = np.asarray(theta, dtype=float)
    mu, mu_hat = to_fam(theta), float(to_fam(that))
    eta, eta_hat = fam.eta(mu), float(fam.eta(mu_hat))
    sd = math.sqrt(float(fam.psi_deriv(mu_hat, 2)))
    r = np.sign(mu_hat - mu) * np.sqrt(np.maximum(fam.w(mu, mu_hat), 0.0))
    u = (eta_hat - eta) * sd
    near = np.abs(mu - mu_hat) < TAYLOR_ZONE * float(fam.sigma(mu_hat))
    with np.errstate(divide="ignore", invalid="ignore"):
        far = r - np.log(r / u) / r
    out = np.where(near, _rstar_limit(fam, mu_hat, eta - eta_hat), far)
    return orient * out


def median_directed(model: Model, that: float, theta, median):
    """``r(b(theta)) = sign(that - b(theta)) sqrt(w(b(theta)))``."""
    model.check_theta(theta)
    bt = np.asarray(median(np.asarray(theta, dtype=float)), dtype=float)
    w = np.maximum(model.w(bt, that), 0.0)
    return np.sign(that - bt) * np.sqrt(w)


def rstar_expansion(model: Model, that: float, theta):
    """First-order expansion ``r - eta''(theta) (that - theta) / (6 r eta'(theta))``."""
    fam, to_fam, orient = _family_view(model)
    theta = np.asarray(theta, dtype=float)
    mu, mu_hat = to_fam(theta), float(to_fam(that))
    r = np.sign(mu_hat - mu) * np.sqrt(np.maximum(fam.w(mu, mu_hat), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r - fam.eta_second(mu) * (mu_hat - mu) / (6.0 * r * fam.eta_prime(mu))
    return orient * out


@dataclass(frozen=True)
class DirectedLikelihood:
    """``r``, ``r*`` and ``r(b(.))`` for one observed estimate."""

    model: Model = field(repr=False)
    that: float
    median: object = field(default=None, repr=False)

    def r(self, theta):
        return directed(self.model, self.that, theta)

    def rstar(self, theta):
        return modified_directed(self.model, self.that, theta)

    def rmedian(self, theta):
        if self.median is None:
            raise ValueError("no median function attached")
        return median_directed(self.model, self.that, theta, self.median)

    def export(self, path: str | Path, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        write_csv(path, {"theta": theta, "r": self.r(theta), "rstar": self.rstar(theta), "rmedian": self.rmedian(theta)})
