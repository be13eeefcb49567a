import json
import math

import numpy as np
import pytest
from scipy import stats

from confcurve.confidence import CalibrationError, ChiSquareCalibration, ExactCalibration, cc_from_w, curve_to_distribution
from confcurve.mbc import (
    MonotonicityError,
    corrected_curve,
    exact_median_function,
    gpd_corrected_curve,
    interpolated_median_function,
    median_function,
    pava,
)
from confcurve.mc import McConfig, substream
from confcurve.models import ExponentialRate, GammaFamily, GpdStudy, NormalMean, NormalTransform, NormalVariance
from confcurve.models.base import UnavailableError
from confcurve.models.expfam import CustomExpFam
from confcurve.models.gpd import sample_gpd

NV10_MEDIAN_SLOPE = 0.93418177655919674


def _gamma_without_cdf(n):
    derivs = [lambda e: -np.log(-e)] + [
        (lambda e, k=k: (-1) ** k * math.factorial(k - 1) / np.asarray(e) ** k) for k in range(1, 5)
    ]
    return CustomExpFam(
        derivs, n, (-math.inf, 0.0), (0.0, math.inf), sampler=lambda th, rng, shape: rng.exponential(th, size=shape)
    )


def test_closed_form_medians():
    assert float(median_function(NormalVariance(10))(1.0)) == pytest.approx(NV10_MEDIAN_SLOPE, rel=1e-12)
    n = 6
    assert float(median_function(ExponentialRate(n))(2.0)) == pytest.approx(
        2 * n * 2.0 / stats.chi2.ppf(0.5, 2 * n), rel=1e-12
    )
    m = NormalTransform(0.3, 0.2)
    phi = 3.0
    assert float(median_function(m)(phi)) == pytest.approx(phi - m.z0c * m.k * (1 + m.a * phi), rel=1e-12)


@pytest.mark.parametrize("model", [NormalVariance(10), ExponentialRate(5), NormalTransform(0.3, 0.3), GammaFamily(7, 2.5)])
def test_median_is_half_quantile_and_invertible(model):
    b = median_function(model)
    theta = np.array([0.5, 1.0, 2.0, 5.0])
    assert np.allclose(model.estimator_cdf(b(theta), theta), 0.5, atol=1e-9)
    assert np.allclose(b.inverse(b(theta)), theta, atol=1e-8)
    assert np.all(np.diff(b(theta)) > 0)


def test_symmetric_model_has_identity_median():
    b = exact_median_function(NormalMean(3))
    assert b.identity and float(b(2.5)) == 2.5


def test_symmetric_model_correction_is_identity():
    m = NormalMean(5, 1.5)
    b = median_function(m)
    cal = ChiSquareCalibration()
    cc = cc_from_w(m, 0.4, cal)
    cs = corrected_curve(m, 0.4, b, cal)
    theta = np.linspace(-2, 3, 41)
    assert np.array_equal(cs.ccstar(theta), cc(theta))
    assert np.array_equal(cs.hstar(theta), curve_to_distribution(cc).cdf(theta))


def test_wstar_minimum_at_median_estimate():
    m = NormalVariance(10)
    b = median_function(m)
    cs = corrected_curve(m, 4.0, b, ExactCalibration(m, b))
    star = 4.0 / NV10_MEDIAN_SLOPE
    assert cs.minimizer == pytest.approx(star, rel=1e-12)
    assert float(cs.wstar(star)) == pytest.approx(0.0, abs=1e-12)
    grid = np.linspace(1.0, 20.0, 300)
    assert np.all(cs.wstar(grid) >= 0)
    assert float(cs.hstar(cs.minimizer)) == 0.5


def test_corrected_curve_invariant_under_reparametrization():
    # exponential rate theta versus the gamma mean psi = 1 / theta
    n, rate_hat = 8, 1.7
    rate = ExponentialRate(n)
    mean = GammaFamily(n, 1.0)
    br, bm = median_function(rate), median_function(mean)
    cr = corrected_curve(rate, rate_hat, br, ExactCalibration(rate, br))
    cm = corrected_curve(mean, 1.0 / rate_hat, bm, ExactCalibration(mean, bm))
    psi = np.linspace(0.25, 1.5, 40)
    assert np.allclose(cm.ccstar(psi), cr.ccstar(1.0 / psi), atol=1e-10)


def test_pava():
    assert np.allclose(pava([1.0, 3.0, 2.0, 4.0]), [1.0, 2.5, 2.5, 4.0])
    y = np.array([5.0, 1.0, 2.0, 3.0, 0.5])
    fit = pava(y)
    assert np.all(np.diff(fit) >= 0) and fit.sum() == pytest.approx(y.sum())


def test_interpolated_median_rejects_large_violations():
    with pytest.raises(MonotonicityError):
        interpolated_median_function([1, 2, 3], [1.0, 3.0, 2.0], ses=[0.01, 0.01, 0.01])


def test_interpolated_median_tolerates_noise_within_se():
    b = interpolated_median_function([1, 2, 3, 4], [1.0, 2.05, 2.0, 4.0], ses=[0.1, 0.1, 0.1, 0.1], anchor=(0.0, 0.0))
    assert float(b(0.0)) == 0.0
    assert np.all(np.diff(b(np.linspace(0, 4, 50))) >= 0)
    with pytest.raises(CalibrationError):
        b(4.5)


def test_simulated_median_function_when_distribution_unknown():
    m = _gamma_without_cdf(6)
    with pytest.raises(UnavailableError):
        m.estimator_cdf(1.0, 1.0)
    b = median_function(m, McConfig(4, 20_000), that=1.0)
    assert b.source == "monte-carlo"
    nodes = np.asarray(b.table["nodes"])
    ses = np.asarray(b.table["se"])
    exact = stats.gamma.ppf(0.5, 6, scale=nodes / 6)
    assert np.all(np.abs(np.asarray(b.table["raw_medians"]) - exact) <= 4 * ses)
    mid = nodes[len(nodes) // 2]
    assert float(stats.gamma.cdf(b(mid), 6, scale=mid / 6)) == pytest.approx(0.5, abs=0.01)


def test_corrected_curve_export(tmp_path):
    m = ExponentialRate(5)
    b = median_function(m)
    cs = corrected_curve(m, 1.2, b, ExactCalibration(m, b))
    path = tmp_path / "star.csv"
    cs.export(path, [0.5, 1.0, 1.5])
    assert path.read_text().splitlines()[0] == "theta,wstar,ccstar,Hstar"
    assert json.loads(path.with_suffix(".json").read_text())["median_source"] == "exact"


@pytest.fixture(scope="module")
def gpd_small():
    study = GpdStudy(sample_gpd(0.18, 0.075, substream(7, 20_000, 0), None, 195))
    return gpd_corrected_curve(study, McConfig(3, 400), node_count=17)


def test_gpd_pipeline_small_run(gpd_small):
    res = gpd_small
    assert res.node_ok.mean() >= 0.9
    assert float(res.median(0.0)) == 0.0
    grid = np.linspace(0.0, res.nodes[-1], 200)
    assert np.all(np.diff(res.median(grid)) > 0)
    assert res.corrected.minimizer == pytest.approx(float(res.median.inverse(res.study.p_hat)), rel=1e-12)
    assert float(res.corrected.ccstar(res.corrected.minimizer)) == pytest.approx(0.0, abs=1e-9)
    assert res.bartlett > 0


def test_gpd_pipeline_export(gpd_small, tmp_path):
    path = tmp_path / "gpd.csv"
    res = gpd_small
    res.export(path, np.linspace(res.nodes[1], res.nodes[-1] / 2, 5))
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["p_hat"] == res.study.p_hat and "median_table" in meta
