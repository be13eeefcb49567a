"""Deterministic Monte Carlo engine.

Every block of ``BLOCK`` replicates at grid node ``node`` draws from its own
Philox generator seeded by ``(seed, node, block)``. Blocks are independent
of one another and of the worker count, so results are bit-identical for any
number of threads, and growing ``replicates`` leaves the earlier replicates
untouched.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .confidence import CalibrationError, IrregularCurveError, write_csv
from .models.base import Model

log = logging.getLogger(__name__)

BLOCK = 1024
MAX_NONFINITE = 1e-3


class McError(RuntimeError):
    """A simulation produced too many unusable replicates."""


@dataclass(frozen=True)
class McConfig:
    seed: int
    replicates: int
    grid: tuple[float, ...] = ()
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))

    def echo(self) -> dict:
        return asdict(self)


def substream(seed: int, node: int, block: int) -> np.random.Generator:
    """Generator for one block of replicates at one grid node."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(node, block))
    return np.random.Generator(np.random.Philox(ss))


def simulate(cfg: McConfig, node: int, draw: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    """Concatenate ``draw(rng, count)`` over the blocks of one node, in block order."""
    nblocks = -(-cfg.replicates // BLOCK)

    def run(b):
        count = min(BLOCK, cfg.replicates - b * BLOCK)
        return np.asarray(draw(substream(cfg.seed, node, b), count))

    if cfg.workers == 1 or nblocks == 1:
        parts = [run(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, range(nblocks)))
    return np.concatenate(parts, axis=0)


def simulate_nodes(cfg: McConfig, nodes: Sequence[int], draw_for: Callable[[int], Callable]) -> list[np.ndarray]:
    """:func:`simulate` for several nodes; parallel across nodes and blocks."""
    jobs = [(k, b) for k in nodes for b in range(-(-cfg.replicates // BLOCK))]

    def run(job):
        k, b = job
        count = min(BLOCK, cfg.replicates - b * BLOCK)
        return np.asarray(draw_for(k)(substream(cfg.seed, k, b), count))

    if cfg.workers == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run, jobs))
    out, i = [], 0
    per = -(-cfg.replicates // BLOCK)
    for _ in nodes:
        out.append(np.concatenate(parts[i : i + per], axis=0))
        i += per
    return out


def check_finite(values: np.ndarray, what: str = "statistic") -> np.ndarray:
    """Reject samples with more than 0.1% NaN or ``-inf``; ``+inf`` is a valid extreme."""
    bad = np.isnan(values) | (values == -np.inf)
    count = int(bad.sum())
    if count > MAX_NONFINITE * values.size:
        raise McError(f"{what}: {count} of {values.size} replicates are not finite")
    if count:
        log.warning("%s: dropping %d non-finite replicates", what, count)
    return values[~bad]


class EmpiricalCDF:
    """Empirical distribution with linear interpolation between order statistics.

    At ``y`` in ``[x_(k), x_(k+1))`` the value is ``(k + frac) / m`` where
    ``frac`` is the fractional position in that gap, so it agrees with the
    right-continuous step function at every order statistic.
    """

    def __init__(self, values):
        x = np.sort(np.asarray(values, dtype=float).ravel())
        if x.size == 0:
            raise ValueError("empty sample")
        self.x = x
        self.m = x.size

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        x, m = self.x, self.m
        k = np.searchsorted(x, y, side="right")
        inner = (k > 0) & (k < m)
        kk = np.clip(k, 1, m - 1) if m > 1 else np.ones_like(k)
        if m > 1:
            left, right = x[kk - 1], x[kk]
            with np.errstate(invalid="ignore", divide="ignore"):
                frac = np.where(np.isfinite(right), (y - left) / (right - left), 0.0)
            frac = np.where(inner, np.clip(np.nan_to_num(frac, nan=0.0), 0.0, 1.0), 0.0)
        else:
            frac = np.zeros(y.shape)
        val = np.where(k == 0, 0.0, np.where(k >= m, 1.0, (k + frac) / m))
        return np.clip(val, 0.0, 1.0)

    cdf = __call__

    def quantile(self, q):
        """Order statistic ``x_(ceil(q m))``."""
        q = np.asarray(q, dtype=float)
        idx = np.clip(np.ceil(q * self.m).astype(int) - 1, 0, self.m - 1)
        return self.x[idx]

    @property
    def median(self) -> float:
        return float(np.median(self.x))

    @property
    def median_se(self) -> float:
        """Half-width of the order-statistic 68% interval for the median."""
        half = 0.5 * math.sqrt(self.m)
        lo = int(max(0, math.floor(self.m / 2 - half)))
        hi = int(min(self.m - 1, math.ceil(self.m / 2 + half)))
        return 0.5 * float(self.x[hi] - self.x[lo])


def empirical_cdf(model: Model, theta: float, statistic: Callable, cfg: McConfig, node: int = 0) -> EmpiricalCDF:
    """Empirical CDF of ``statistic(data)`` over data sets drawn under ``theta``."""
    vals = simulate(cfg, node, lambda rng, k: statistic(model.sample(theta, rng, k)))
    return EmpiricalCDF(check_finite(vals, f"statistic at theta={theta}"))


@dataclass(frozen=True)
class PivotCalibration:
    """``F(y)`` of a pivotal likelihood ratio, simulated once at a reference value.

    ``target`` maps the generating parameter to the point at which the ratio
    is evaluated (identity for ``w``, the median function for ``w*``).
    """

    ecdf: EmpiricalCDF = field(repr=False)

    @classmethod
    def build(cls, model: Model, cfg: McConfig, target: Callable | None = None, node: int = 0):
        if not model.pivotal:
            raise CalibrationError(f"{model.key} has no pivotal likelihood ratio")
        ref = model.reference_theta
        at = ref if target is None else float(target(ref))

        def stat(data):
            return model.w(at, model.mle(data))

        return cls(empirical_cdf(model, ref, stat, cfg, node))

    def cdf(self, y, theta=None):
        return self.ecdf(y)


@dataclass(frozen=True)
class GridCalibration:
    """Per-node empirical CDFs, linear in the parameter between nodes."""

    nodes: np.ndarray
    ecdfs: tuple[EmpiricalCDF, ...] = field(repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size != len(self.ecdfs) or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be increasing and match the CDFs")
        object.__setattr__(self, "nodes", nodes)

    def cdf(self, y, theta):
        y, theta = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(theta, dtype=float))
        nodes = self.nodes
        outside = (theta < nodes[0]) | (theta > nodes[-1])
        if np.any(outside):
            bad = theta[outside].ravel()[0]
            raise CalibrationError(f"no calibration at theta={bad:.6g}; nodes span [{nodes[0]:.6g}, {nodes[-1]:.6g}]")
        j = np.clip(np.searchsorted(nodes, theta, side="right") - 1, 0, nodes.size - 2)
        t = (theta - nodes[j]) / (nodes[j + 1] - nodes[j])
        out = np.empty(y.shape)
        for k in np.unique(j):
            sel = j == k
            lo = self.ecdfs[k](y[sel])
            hi = self.ecdfs[k + 1](y[sel])
            out[sel] = (1 - t[sel]) * lo + t[sel] * hi
        return out


# -- tail symmetry studies ----------------------------------------------------


@dataclass(frozen=True)
class TailCell:
    n: int
    alpha: float
    replicates: int
    left: int
    right: int

    @property
    def covered(self) -> int:
        return self.replicates - self.left - self.right

    @property
    def left_miss(self) -> float:
        return self.left / self.replicates

    @property
    def right_miss(self) -> float:
        return self.right / self.replicates

    @property
    def coverage(self) -> float:
        return self.covered / self.replicates

    @property
    def se(self) -> float:
        """Binomial standard error of one tail's miss rate at its nominal ``alpha / 2``."""
        p = self.alpha / 2
        return math.sqrt(p * (1 - p) / self.replicates)

    def within(self, k: float = 3.0) -> bool:
        target = self.alpha / 2
        return abs(self.left_miss - target) <= k * self.se and abs(self.right_miss - target) <= k * self.se


@dataclass(frozen=True)
class TailStudyResult:
    cells: tuple[TailCell, ...]
    config: dict

    def identity_holds(self) -> bool:
        return all(c.left + c.right + c.covered == c.replicates for c in self.cells)

    def cell(self, n: int, alpha: float) -> TailCell:
        for c in self.cells:
            if c.n == n and math.isclose(c.alpha, alpha):
                return c
        raise KeyError((n, alpha))

    def export(self, path: str | Path) -> None:
        path = Path(path)
        write_csv(
            path,
            {
                "n": [c.n for c in self.cells],
                "alpha": [c.alpha for c in self.cells],
                "left_miss": [c.left_miss for c in self.cells],
                "right_miss": [c.right_miss for c in self.cells],
                "coverage": [c.coverage for c in self.cells],
                "se": [c.se for c in self.cells],
            },
        )
        path.with_suffix(".json").write_text(json.dumps(self.config, indent=2, sort_keys=True) + "\n")


def tail_symmetry_study(
    builder: Callable,
    model_for_n: Callable[[int], Model],
    theta_true: float,
    ns: Sequence[int],
    alphas: Sequence[float],
    cfg: McConfig,
    max_irregular: float = 0.01,
) -> TailStudyResult:
    """Left and right miss rates of equal-tailed intervals.

    ``builder(model, that)`` returns a distribution estimator (``H``, ``H*``
    or ``C``) with a ``cdf`` method. The lower limit ``H^{-1}(alpha/2)``
    exceeds ``theta_true`` exactly when ``H(theta_true) < alpha/2``, and the
    upper limit falls below it when ``H(theta_true) > 1 - alpha/2``, so no
    explicit inversion is needed. Estimators that raise
    :class:`IrregularCurveError` count as irregular; more than
    ``max_irregular`` of them aborts the study.
    """
    cells = []
    for i, n in enumerate(ns):
        model = model_for_n(n)
        thats = simulate(cfg, i, lambda rng, k: model.mle(model.sample(theta_true, rng, k)))
        hv = np.empty(thats.size)
        irregular = 0
        for r, t in enumerate(thats):
            try:
                hv[r] = float(builder(model, float(t)).cdf(theta_true))
            except IrregularCurveError:
                hv[r] = np.nan
                irregular += 1
        if irregular > max_irregular * thats.size:
            raise McError(f"n={n}: {irregular} of {thats.size} curves irregular")
        ok = ~np.isnan(hv)
        for a in alphas:
            left = int(np.sum(hv[ok] < a / 2))
            right = int(np.sum(hv[ok] > 1 - a / 2))
            cells.append(TailCell(int(n), float(a), int(ok.sum()), left, right))
    echo = {"config": cfg.echo(), "theta_true": theta_true, "n": list(ns), "alpha": list(alphas)}
    return TailStudyResult(tuple(cells), echo)
