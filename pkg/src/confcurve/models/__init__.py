"""Built-in models and a registry keyed by string."""

from __future__ import annotations

from typing import Callable

from .base import DomainError, Model, ParamScale, UnavailableError, exact_w_cdf, h, loglik_ratio, w_level_roots
from .expfam import CustomExpFam, ExpFamModel, GammaFamily, NormalMean, NormalVariance
from .exponential import ExponentialRate
from .gpd import GpdStudy, fit_gpd_batch, gpd_profile_loglik, load_exceedances, p_of, profile_loglik_batch
from .transform import NormalTransform, mle_shift


def gamma_custom(n: int, shape: float = 1.0) -> CustomExpFam:
    """Gamma-mean family assembled through :class:`CustomExpFam` from its cumulants."""
    import math

    import numpy as np
    from scipy import stats

    def deriv(k):
        if k == 0:
            return lambda e: -shape * np.log(-e)
        return lambda e, k=k: (-1) ** k * math.factorial(k - 1) * shape / e**k

    def sampler(theta, rng, size):
        return rng.gamma(shape, float(theta) / shape, size=size)

    def cdf(y, theta):
        with np.errstate(divide="ignore", invalid="ignore"):
            return stats.gamma.cdf(np.asarray(y, dtype=float) * n * shape / np.asarray(theta, dtype=float), n * shape)

    return CustomExpFam(
        [deriv(k) for k in range(6)],
        n,
        eta_domain=(-math.inf, 0.0),
        domain=(0.0, math.inf),
        sampler=sampler,
        estimator_cdf=cdf,
        scale=ParamScale("log"),
        # a scale family in theta, so w(theta, mle) has the same law at every theta
        pivotal=True,
        reference_theta=1.0,
    )


REGISTRY: dict[str, Callable[..., object]] = {
    "normal-var": NormalVariance,
    "exp-rate": ExponentialRate,
    "normal-transform": NormalTransform,
    "expfam-custom": gamma_custom,
    "normal-mean": NormalMean,
    "gpd": GpdStudy,
}


def get_model(key: str, **params):
    """Build a model (or, for ``"gpd"``, a study) from its registry key."""
    try:
        factory = REGISTRY[key]
    except KeyError:
        raise KeyError(f"unknown model {key!r}; choose from {sorted(REGISTRY)}") from None
    return factory(**params)


__all__ = [
    "CustomExpFam",
    "DomainError",
    "ExpFamModel",
    "ExponentialRate",
    "GammaFamily",
    "GpdStudy",
    "Model",
    "NormalMean",
    "NormalTransform",
    "NormalVariance",
    "ParamScale",
    "REGISTRY",
    "UnavailableError",
    "exact_w_cdf",
    "fit_gpd_batch",
    "gamma_custom",
    "get_model",
    "gpd_profile_loglik",
    "h",
    "load_exceedances",
    "loglik_ratio",
    "mle_shift",
    "p_of",
    "profile_loglik_batch",
    "w_level_roots",
]
