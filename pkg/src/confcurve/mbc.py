"""Median bias correction of the log-likelihood ratio.

With ``b`` the median function of the MLE, the corrected ratio is
``w*(theta) = w(b(theta))``. It vanishes at ``b^{-1}(that)``, the
median-unbiased estimate, and is calibrated by its own sampling distribution
``F*`` to give ``cc*(theta) = F*(w*(theta); theta)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._numeric import OptimizerError, bisect_vec
from .confidence import (
    CalibrationError,
    ChiSquareCalibration,
    ConfidenceCurve,
    ConfidenceDistribution,
    h_from_curve_values,
    write_csv,
)
from .mc import BLOCK, EmpiricalCDF, GridCalibration, McConfig, McError, check_finite, simulate
from .models.base import Model, ParamScale, UnavailableError
from .models.expfam import NormalMean
from .models.gpd import (
    GpdStudy,
    fit_gpd_batch,
    p_of,
    profile_loglik_batch,
    sample_gpd,
    sigma_for_p,
)

log = logging.getLogger(__name__)

MEDIAN_NODES = 41
BARTLETT_NODE = 10_000


class MonotonicityError(McError):
    """Estimated medians are not increasing; more replicates are needed."""


def pava(y, w=None) -> np.ndarray:
    """Least-squares non-decreasing fit (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    vals, wts, sizes = [], [], []
    for yi, wi in zip(y, w):
        vals.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2, s2 = vals.pop(), wts.pop(), sizes.pop()
            v1, w1, s1 = vals.pop(), wts.pop(), sizes.pop()
            vals.append((v1 * w1 + v2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
            sizes.append(s1 + s2)
    return np.repeat(vals, sizes)


@dataclass(frozen=True)
class MedianFunction:
    """Strictly increasing ``b`` with its inverse.

    ``source`` is ``"exact"`` or ``"monte-carlo"``; ``identity`` marks
    ``b(theta) = theta``. Monte Carlo versions carry their node table.
    """

    func: Callable = field(repr=False)
    inverse_func: Callable = field(repr=False)
    source: str
    identity: bool = False
    table: dict | None = field(default=None, repr=False)

    def __call__(self, theta):
        return self.func(np.asarray(theta, dtype=float))

    def inverse(self, y):
        return self.inverse_func(np.asarray(y, dtype=float))


def exact_median_function(model: Model) -> MedianFunction:
    """Closed-form or root-found ``b`` from the model's estimator distribution."""
    if isinstance(model, NormalMean):
        same = lambda t: np.asarray(t, dtype=float) * 1.0  # noqa: E731
        return MedianFunction(same, same, "exact", identity=True)
    model.estimator_cdf(model.reference_theta, model.reference_theta)
    return MedianFunction(model.median, model.median_inverse, "exact")


def interpolated_median_function(nodes, medians, ses=None, anchor: tuple[float, float] | None = None) -> MedianFunction:
    """Monotone cubic interpolant through per-node medians.

    The medians are first isotonised; if that moves any of them by more than
    two standard errors the estimate is rejected. ``anchor`` pins an extra
    ``(theta, b)`` point, for example ``b(0) = 0``.
    """
    nodes = np.asarray(nodes, dtype=float)
    medians = np.asarray(medians, dtype=float)
    ses = np.zeros_like(medians) if ses is None else np.asarray(ses, dtype=float)
    fitted = pava(medians)
    moved = np.abs(fitted - medians)
    if np.any(moved > 2.0 * ses + 1e-15):
        worst = int(np.argmax(moved - 2.0 * ses))
        raise MonotonicityError(
            f"median estimates not increasing near theta={nodes[worst]:.6g}; increase replicates"
        )
    # a pooled block becomes one point at its mean node so the interpolant stays strictly increasing
    starts = np.concatenate([[0], np.flatnonzero(np.diff(fitted) != 0) + 1])
    xs = np.add.reduceat(nodes, starts) / np.diff(np.append(starts, nodes.size))
    ys = fitted[starts]
    if anchor is not None:
        keep = xs > anchor[0]
        xs = np.concatenate([[anchor[0]], xs[keep]])
        ys = np.concatenate([[anchor[1]], ys[keep]])
    if np.any(np.diff(ys) <= 0):
        raise MonotonicityError("median estimates tie after isotonisation; increase replicates")
    spline = PchipInterpolator(xs, ys, extrapolate=False)
    lo, hi = xs[0], xs[-1]

    def func(theta):
        theta = np.asarray(theta, dtype=float)
        if np.any((theta < lo) | (theta > hi)):
            raise CalibrationError(f"median function defined on [{lo:.6g}, {hi:.6g}] only")
        return spline(theta)

    def inverse(y):
        y = np.asarray(y, dtype=float)
        if np.any((y < ys[0]) | (y > ys[-1])):
            raise CalibrationError(f"median function inverse defined on [{ys[0]:.6g}, {ys[-1]:.6g}] only")
        flat = y.ravel()
        out = bisect_vec(lambda t: spline(t) - flat, np.full(flat.shape, lo), np.full(flat.shape, hi), xtol=1e-15)
        return out.reshape(y.shape)

    table = {"nodes": xs.tolist(), "medians": ys.tolist(), "raw_medians": medians.tolist(), "se": ses.tolist()}
    return MedianFunction(func, inverse, "monte-carlo", table=table)


def median_function(model: Model, cfg: McConfig | None = None, that: float | None = None) -> MedianFunction:
    """Median function of the MLE, exact when possible, otherwise by simulation.

    The simulated version estimates the median of the MLE at each node of
    ``cfg.grid`` (or at 41 nodes spanning the working interval around
    ``that``) and interpolates monotonically.
    """
    try:
        return exact_median_function(model)
    except UnavailableError:
        if cfg is None:
            raise
    nodes = np.asarray(cfg.grid, dtype=float)
    if nodes.size == 0:
        if that is None:
            raise ValueError("need a grid or an estimate to place the median nodes")
        lo, hi = model.working_interval(that)
        u = np.linspace(model.scale.to_free(lo), model.scale.to_free(hi), MEDIAN_NODES)
        nodes = model.scale.from_free(u)
    meds, ses = [], []
    for k, theta in enumerate(nodes):
        ecdf = EmpiricalCDF(
            check_finite(simulate(cfg, k, lambda rng, c: model.mle(model.sample(theta, rng, c))), "mle")
        )
        meds.append(ecdf.median)
        ses.append(ecdf.median_se)
    return interpolated_median_function(nodes, meds, ses)


@dataclass(frozen=True)
class CorrectedCurve:
    """``w*``, ``cc*`` and ``H*`` for one data set.

    ``ratio`` is the observed log-likelihood ratio as a function of the
    parameter; ``calib.cdf(y, theta)`` is ``F*``.
    """

    ratio: Callable = field(repr=False)
    median: MedianFunction
    calib: object = field(repr=False)
    minimizer: float
    spread: float
    domain: tuple[float, float] = (-math.inf, math.inf)
    scale: ParamScale = ParamScale()

    def wstar(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.ratio(theta if self.median.identity else self.median(theta))

    def ccstar(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.clip(self.calib.cdf(self.wstar(theta), theta), 0.0, 1.0)

    def hstar(self, theta):
        return h_from_curve_values(self.ccstar(theta), self.minimizer, theta)

    def curve(self) -> ConfidenceCurve:
        return ConfidenceCurve(self.ccstar, self.minimizer, self.spread, self.domain, self.scale)

    def distribution(self) -> ConfidenceDistribution:
        return ConfidenceDistribution(self.hstar, self.minimizer, self.spread, self.domain, self.scale)

    cdf = hstar

    def export(self, path: str | Path, theta, meta: dict | None = None) -> None:
        """``theta,wstar,ccstar,Hstar`` plus a JSON sidecar."""
        theta = np.asarray(theta, dtype=float)
        write_csv(
            path,
            {"theta": theta, "wstar": self.wstar(theta), "ccstar": self.ccstar(theta), "Hstar": self.hstar(theta)},
        )
        side = dict(meta or {})
        side.setdefault("median_source", self.median.source)
        if self.median.table is not None:
            side.setdefault("median_table", self.median.table)
        Path(path).with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def corrected_curve(model: Model, that: float, b: MedianFunction, calib) -> CorrectedCurve:
    """Median bias corrected curve for a scalar model with observed MLE ``that``."""
    that = float(that)
    model.check_theta(that)
    minimizer = that if b.identity else float(b.inverse(that))
    return CorrectedCurve(
        lambda t: model.w(t, that), b, calib, minimizer, float(model.se(that)), model.domain, model.scale
    )


# -- generalised Pareto pipeline -------------------------------------------


@dataclass(frozen=True)
class GpdPipelineResult:
    study: GpdStudy = field(repr=False)
    bartlett: float
    nodes: np.ndarray
    node_ok: np.ndarray
    median: MedianFunction
    corrected: CorrectedCurve
    uncorrected: ConfidenceCurve
    config: dict = field(repr=False)

    def export(self, path: str | Path, theta) -> None:
        meta = dict(self.config)
        meta.update(
            {
                "bartlett": self.bartlett,
                "grid_nodes": self.nodes.tolist(),
                "node_ok": self.node_ok.tolist(),
                "shape_hat": self.study.shape,
                "scale_hat": self.study.scale,
                "p_hat": self.study.p_hat,
            }
        )
        self.corrected.export(path, theta, meta)


def _gpd_ratio(study: GpdStudy) -> Callable:
    def ratio(p):
        p = np.asarray(p, dtype=float)
        return study.w(p.ravel()).reshape(p.shape)

    return ratio


def _gpd_upper_point(study: GpdStudy, level: float, bartlett: float) -> float:
    """Right end of the Bartlett-scaled chi-square level set at ``level``."""
    target = float(ChiSquareCalibration(1, bartlett).ppf(level))
    lo = study.p_hat
    cap = -math.expm1(-study.rate)
    hi = min(cap * (1 - 1e-9), max(2 * lo, lo + 0.01))
    while float(study.w(hi)[0]) < target:
        if hi >= cap * (1 - 1e-9):
            return hi
        hi = min(cap * (1 - 1e-9), 2 * hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(study.w(mid)[0]) < target:
            lo = mid
        else:
            hi = mid
    return hi


def gpd_corrected_curve(
    study: GpdStudy,
    cfg: McConfig,
    node_count: int = MEDIAN_NODES,
    min_success: float = 0.9,
) -> GpdPipelineResult:
    """Plug-in median correction for the record probability.

    1. Bartlett factor: mean of the profile ratio at ``p_hat`` over data sets
       simulated from the fitted model.
    2. At each node ``p_k`` simulate from ``(a_hat, sigma(a_hat, p_k))``, refit,
       and take the median of the estimated ``p``; interpolate monotonically
       with ``b(0) = 0``.
    3. Regenerate the same data sets and record ``w(b(p_k))`` from the profile
       likelihood, giving ``F*`` at each node.
    """
    a_hat, n = study.shape, study.n
    rate, margin = study.rate, study.margin

    def fits(a, sigma):
        def draw(rng, count):
            x = sample_gpd(a, sigma, rng, count, n)
            sa, ss, ll = fit_gpd_batch(x)
            return np.stack([p_of(sa, ss, rate, margin), ll], axis=1)

        return draw

    base = simulate(
        cfg, BARTLETT_NODE, lambda rng, c: _profile_ratio_draw(rng, c, a_hat, study.scale, n, study.p_hat, rate, margin)
    )
    base = check_finite(base, "Bartlett replicates")
    bartlett = float(np.mean(base))

    p_hi = 1.25 * _gpd_upper_point(study, 0.999, bartlett)
    p_hi = min(p_hi, -math.expm1(-rate) * 0.999)
    nodes = p_hi * (np.arange(1, node_count) / (node_count - 1)) ** 2

    ok = np.zeros(nodes.size, dtype=bool)
    meds = np.full(nodes.size, np.nan)
    ses = np.full(nodes.size, np.nan)
    llmax = [None] * nodes.size
    for k, pk in enumerate(nodes):
        sigma_k = float(sigma_for_p(a_hat, pk, rate, margin))
        try:
            out = simulate(cfg, k, fits(a_hat, sigma_k))
            finite = np.isfinite(out).all(axis=1)
            if (~finite).sum() > 1e-3 * out.shape[0]:
                raise McError(f"{(~finite).sum()} failed fits")
        except (McError, OptimizerError, FloatingPointError) as exc:
            log.warning("median node p=%.6g skipped: %s", pk, exc)
            continue
        e = EmpiricalCDF(out[finite, 0])
        meds[k], ses[k] = e.median, e.median_se
        llmax[k] = out[:, 1]
        ok[k] = True
    if ok.mean() < min_success:
        raise McError(f"only {int(ok.sum())} of {nodes.size} median nodes succeeded")
    b = interpolated_median_function(nodes[ok], meds[ok], ses[ok], anchor=(0.0, 0.0))

    used, ecdfs = [], []
    for k in np.flatnonzero(ok):
        bk = float(b(nodes[k]))
        sigma_k = float(sigma_for_p(a_hat, nodes[k], rate, margin))

        def prof(rng, count, sigma_k=sigma_k, bk=bk):
            x = sample_gpd(a_hat, sigma_k, rng, count, n)
            return profile_loglik_batch(x, bk, rate, margin)[0]

        try:
            lp = simulate(cfg, int(k), prof)
            w = check_finite(np.maximum(2.0 * (llmax[k] - lp), 0.0), f"w(b(p)) at p={nodes[k]:.6g}")
        except (McError, OptimizerError, ValueError) as exc:
            log.warning("calibration node p=%.6g skipped: %s", nodes[k], exc)
            ok[k] = False
            continue
        used.append(nodes[k])
        ecdfs.append(EmpiricalCDF(w))
    if ok.mean() < min_success:
        raise McError(f"only {int(ok.sum())} of {nodes.size} calibration nodes succeeded")
    calib = _ClampedGrid(GridCalibration(np.array(used), tuple(ecdfs)))

    ratio = _gpd_ratio(study)
    minimizer = float(b.inverse(study.p_hat))
    spread = max(study.p_hat, 1e-3)
    # the corrected curve lives where the median function was simulated
    top = float(b.table["nodes"][-1])
    corrected = CorrectedCurve(ratio, b, calib, minimizer, spread, (0.0, top), ParamScale("logit", upper=top))
    chi = ChiSquareCalibration(1, bartlett)
    domain = (0.0, -math.expm1(-rate))
    scale = ParamScale("logit", upper=domain[1])
    uncorrected = ConfidenceCurve(lambda p: chi.cdf(ratio(p)), study.p_hat, spread, domain, scale)
    config = {
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "block": BLOCK,
        "rate": rate,
        "margin": margin,
        "n": n,
    }
    return GpdPipelineResult(study, bartlett, nodes, ok, b, corrected, uncorrected, config)


def _profile_ratio_draw(rng, count, a, sigma, n, p0, rate, margin):
    x = sample_gpd(a, sigma, rng, count, n)
    _, _, ll = fit_gpd_batch(x)
    lp, _ = profile_loglik_batch(x, p0, rate, margin)
    return np.maximum(2.0 * (ll - lp), 0.0)


@dataclass(frozen=True)
class _ClampedGrid:
    """Grid calibration that reuses the first node below the grid (toward ``p = 0``)."""

    grid: GridCalibration

    def cdf(self, y, theta):
        theta = np.asarray(theta, dtype=float)
        return self.grid.cdf(y, np.maximum(theta, self.grid.nodes[0]))
