"""Reproduction recipes and rate checks built from the library pieces.

Each function returns plain dictionaries so the CLI and the acceptance suite
can print or export them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .asymptotics import cornish_fisher_quantile, edgeworth_tail, median_expansion
from .confidence import (
    ConfidenceDistribution,
    ExactCalibration,
    cc_from_w,
    central_grid,
    exact_cd,
    h_from_curve_values,
)
from .mbc import CorrectedCurve, corrected_curve, median_function
from .mc import McConfig, PivotCalibration, simulate, substream
from .models import ExponentialRate, GammaFamily, Model, NormalTransform, NormalVariance
from .rstar import directed, median_directed, modified_directed

DATA_NODE = 20_000
PIVOT_NODE = 30_000
STAR_NODE = 30_001


def simulated_estimate(model: Model, theta: float, seed: int) -> float:
    """MLE of one data set drawn from its own substream."""
    return float(model.mle(model.sample(theta, substream(seed, DATA_NODE, 0))))


@dataclass(frozen=True)
class CurveBundle:
    """Everything plotted for one data set: ``cc``, ``cc*``, ``C``, ``H``, ``H*``."""

    model: Model
    that: float
    cc: object
    corrected: CorrectedCurve
    exact: ConfidenceDistribution | None

    def table(self, theta) -> dict:
        theta = np.asarray(theta, dtype=float)
        ccv = self.cc(theta)
        return {
            "theta": theta,
            "cc": ccv,
            "ccstar": self.corrected.ccstar(theta),
            "C": self.exact.cdf(theta) if self.exact is not None else np.full(theta.shape, np.nan),
            "H": h_from_curve_values(ccv, self.cc.minimizer, theta),
            "Hstar": self.corrected.hstar(theta),
        }

    def gaps(self, theta) -> dict:
        t = self.table(theta)
        return {
            "max_abs_Hstar_minus_C": float(np.max(np.abs(t["Hstar"] - t["C"]))),
            "max_abs_H_minus_C": float(np.max(np.abs(t["H"] - t["C"]))),
        }


def mc_curves(model: Model, that: float, cfg: McConfig) -> CurveBundle:
    """``cc`` and ``cc*`` calibrated by simulating the pivotal ratios, as in the worked examples."""
    b = median_function(model)
    f = PivotCalibration.build(model, cfg, node=PIVOT_NODE)
    fstar = f if b.identity else PivotCalibration.build(model, cfg, target=b, node=STAR_NODE)
    cc = cc_from_w(model, that, f)
    cs = corrected_curve(model, that, b, fstar)
    try:
        ex = exact_cd(model, that)
    except LookupError:
        ex = None
    return CurveBundle(model, that, cc, cs, ex)


def exact_curves(model: Model, that: float) -> CurveBundle:
    """``cc`` and ``cc*`` with exact calibration from the estimator distribution."""
    b = median_function(model)
    cc = cc_from_w(model, that, ExactCalibration(model))
    cs = corrected_curve(model, that, b, ExactCalibration(model, b))
    return CurveBundle(model, that, cc, cs, exact_cd(model, that))


def normal_variance_example(seed: int = 1, replicates: int = 50_000, n: int = 10, theta_true: float = 4.0, workers: int = 1) -> dict:
    """Normal variance example: H* against C and H on the central grid."""
    model = NormalVariance(n)
    that = simulated_estimate(model, theta_true, seed)
    bundle = mc_curves(model, that, McConfig(seed, replicates, workers=workers))
    grid = central_grid(bundle.exact)
    return {"that": that, "grid": grid, "bundle": bundle, **bundle.gaps(grid)}


def normal_transform_example(seed: int = 1, replicates: int = 100_000, a: float = 0.3, z0: float = 0.3, phihat: float = 10.0,
            workers: int = 1) -> dict:
    """Normal transformation example with the raw estimate ``phihat``."""
    model = NormalTransform(a, z0)
    that = float(model.mle(np.array([phihat])))
    bundle = mc_curves(model, that, McConfig(seed, replicates, workers=workers))
    grid = central_grid(bundle.exact)
    return {"that": that, "grid": grid, "bundle": bundle, **bundle.gaps(grid)}


# -- rate checks ----------------------------------------------------------------


def local_grid(model: Model, that: float, width: float = 2.0, count: int = 81) -> np.ndarray:
    """Points with ``|theta - that| <= width * sigma_theta``, ``sigma`` evaluated at ``theta``."""
    lo, hi = model.working_interval(that, width=1.5 * width)
    u = np.linspace(model.scale.to_free(lo), model.scale.to_free(hi), 4 * count)
    theta = model.scale.from_free(u)
    keep = np.abs(theta - that) <= width * model.se(theta)
    theta = theta[keep]
    idx = np.linspace(0, theta.size - 1, count).round().astype(int)
    return theta[np.unique(idx)]


def _datasets(model: Model, theta: float, count: int, seed: int, node: int) -> np.ndarray:
    cfg = McConfig(seed, count)
    return simulate(cfg, node, lambda rng, k: model.mle(model.sample(theta, rng, k)))


def corrected_curve_gaps(model: Model, theta: float, datasets: int, seed: int, node: int = 0) -> np.ndarray:
    """``max |H* - C|`` on the local grid for each simulated data set (exact calibration)."""
    b = median_function(model)
    calib = ExactCalibration(model, b)
    out = []
    for that in _datasets(model, theta, datasets, seed, node):
        that = float(that)
        grid = local_grid(model, that)
        cs = corrected_curve(model, that, b, calib)
        c = exact_cd(model, that)
        out.append(np.max(np.abs(cs.hstar(grid) - c.cdf(grid))))
    return np.asarray(out)


def median_rstar_gaps(model: Model, theta: float, datasets: int, seed: int, node: int = 0) -> np.ndarray:
    """``max |r(b(theta)) - r*(theta)|`` on the local grid for each data set."""
    b = median_function(model)
    out = []
    for that in _datasets(model, theta, datasets, seed, node):
        that = float(that)
        grid = local_grid(model, that)
        out.append(np.max(np.abs(median_directed(model, that, grid, b) - modified_directed(model, that, grid))))
    return np.asarray(out)


def rate_table(gaps_for: Callable[[Model, float, int, int, int], np.ndarray], model_for_n: Callable[[int], Model],
               theta: float, ns: Sequence[int], datasets: int, seed: int) -> dict:
    """Median gap per ``n`` and successive ratios."""
    med = {}
    for i, n in enumerate(ns):
        med[n] = float(np.median(gaps_for(model_for_n(n), theta, datasets, seed, i)))
    ratios = {ns[i]: med[ns[i + 1]] / med[ns[i]] for i in range(len(ns) - 1)}
    return {"median_gap": med, "ratio": ratios}


MODELS_FOR_N = {
    "normal-var": NormalVariance,
    "exp-rate": ExponentialRate,
}


def ks_directed(model: Model, theta: float, replicates: int, seed: int) -> dict:
    """KS distance from N(0, 1) of ``r(theta)`` and ``r(b(theta))`` at the true value."""
    b = median_function(model)
    thats = _datasets(model, theta, replicates, seed, 0)
    r = np.array([float(directed(model, float(t), theta)) for t in thats])
    rb = np.array([float(median_directed(model, float(t), theta, b)) for t in thats])
    return {"ks_r": float(stats.kstest(r, "norm").statistic), "ks_rmedian": float(stats.kstest(rb, "norm").statistic)}


def uniformity(model: Model, theta: float, replicates: int, seed: int, calib_replicates: int = 50_000) -> dict:
    """KS statistics of ``C(theta; X)`` and ``cc*(theta; X)`` and 90% tail misses of ``H*``.

    ``cc*`` is calibrated by the simulated pivot on streams disjoint from the
    data sets.
    """
    b = median_function(model)
    fstar = PivotCalibration.build(model, McConfig(seed, calib_replicates), target=b, node=STAR_NODE)
    thats = _datasets(model, theta, replicates, seed, 1)
    cvals = 1.0 - model.estimator_cdf(thats, theta)
    wstar = model.w(float(b(theta)), thats)
    ccs = fstar.cdf(wstar)
    minimizers = model.median_inverse(thats)
    hstar = h_from_curve_values(ccs, minimizers, np.full(thats.shape, theta))
    crit = float(stats.kstwo.ppf(0.99, replicates))
    left = int(np.sum(hstar < 0.05))
    right = int(np.sum(hstar > 0.95))
    se = math.sqrt(0.05 * 0.95 / replicates)
    return {
        "ks_C": float(stats.kstest(cvals, "uniform").statistic),
        "ks_ccstar": float(stats.kstest(ccs, "uniform").statistic),
        "ks_critical_99": crit,
        "left_miss": left / replicates,
        "right_miss": right / replicates,
        "se": se,
    }


# -- expansion oracles --------------------------------------------------------


def gamma_standardized(n: int, shape: float):
    """Exact law of ``U = (mle - theta) / sigma`` for a gamma mean (normal variance when ``shape = 1/2``)."""
    nk = n * shape
    dist = stats.gamma(nk, scale=1.0 / nk)
    sd = 1.0 / math.sqrt(nk)
    return dist, sd


def expansion_oracles(ns: Sequence[int] = (20, 80), alphas: Sequence[float] = (0.05, 0.25, 0.5, 0.75, 0.95),
                      shape: float = 0.5) -> list[dict]:
    """Errors of the expansions and of their zeroth-order versions against exact gamma laws."""
    rows = []
    for n in ns:
        model = GammaFamily(n, shape)
        rho3, rho4 = float(model.rho3(1.0)), float(model.rho4(1.0))
        dist, sd = gamma_standardized(n, shape)
        for a in alphas:
            z = float(stats.norm.ppf(a))
            exact_q = (dist.ppf(a) - 1.0) / sd
            exact_tail = dist.sf(1.0 + z * sd)
            rows.append(
                {
                    "n": n,
                    "alpha": a,
                    "cf_err": abs(float(cornish_fisher_quantile(rho3, rho4, n, a)) - exact_q),
                    "cf_zero_err": abs(z - exact_q),
                    "edgeworth_err": abs(float(edgeworth_tail(rho3, n, z)) - exact_tail),
                    "edgeworth_zero_err": abs(float(stats.norm.sf(z)) - exact_tail),
                }
            )
        exact_b = float(model.median(1.0))
        rows.append(
            {
                "n": n,
                "alpha": None,
                "median_err": abs(float(median_expansion(model, 1.0)) - exact_b),
                "median_zero_err": abs(1.0 - exact_b),
            }
        )
    return rows
