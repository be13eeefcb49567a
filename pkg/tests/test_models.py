import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from confcurve.models import (
    REGISTRY,
    DomainError,
    ExponentialRate,
    GammaFamily,
    NormalMean,
    NormalTransform,
    NormalVariance,
    gamma_custom,
    get_model,
)
from confcurve.models.base import h, loglik_ratio, w_level_roots
from confcurve.models.transform import mle_shift, mle_shift_raw

W_NV_10_4_2 = 3.0685281944005469  # 10 * (2 - log 2 - 1)
CHI2_10_MEDIAN = 9.3418177655919674


def test_h_is_nonnegative_and_zero_at_one():
    x = np.array([0.1, 0.5, 1.0, 2.0, 10.0])
    assert h(1.0) == 0.0
    assert np.all(h(x) >= 0)


def test_normal_variance_w_closed_form():
    m = NormalVariance(10)
    assert m.w(4.0, 4.0) == 0.0
    assert m.w(2.0, 4.0) == pytest.approx(W_NV_10_4_2, rel=1e-14)


def test_exponential_rate_w_closed_form():
    m = ExponentialRate(5)
    assert m.w(2.0, 1.0) == pytest.approx(W_NV_10_4_2, rel=1e-14)


def test_w_matches_generic_loglik_difference(rng):
    for m, theta in ((NormalVariance(10), 2.0), (ExponentialRate(5), 0.7), (GammaFamily(8, 1.5), 3.0)):
        data = m.sample(1.3, rng)
        that = float(m.mle(data))
        assert m.w(theta, that) == pytest.approx(float(loglik_ratio(m, theta, data)), rel=1e-9)


def test_mle_maximizes_loglik(rng):
    m = NormalVariance(12)
    data = m.sample(2.0, rng)
    that = float(m.mle(data))
    probes = np.linspace(0.2, 8.0, 200)
    assert np.all(m.loglik(that, data) >= m.loglik(probes, data) - 1e-12)


def test_normal_variance_estimator_cdf_at_theta():
    m = NormalVariance(10)
    assert float(m.estimator_cdf(3.0, 3.0)) == pytest.approx(stats.chi2.cdf(10, 10), rel=1e-12)


def test_exponential_rate_cdf_median():
    m = ExponentialRate(1)
    y = 2.0 / stats.chi2.ppf(0.5, 2)
    assert float(m.estimator_cdf(y, 1.0)) == pytest.approx(0.5, abs=1e-12)


def test_estimator_cdf_monotone_in_y_and_theta():
    m = ExponentialRate(7)
    ys = np.linspace(0.1, 5, 50)
    g = m.estimator_cdf(ys, 1.3)
    assert np.all(np.diff(g) >= 0)
    thetas = np.linspace(0.2, 4, 50)
    assert np.all(np.diff(m.estimator_cdf(1.0, thetas)) <= 0)


def test_medians_match_chi_square_oracles():
    assert float(NormalVariance(10).median(1.0)) == pytest.approx(CHI2_10_MEDIAN / 10, rel=1e-12)
    n = 5
    assert float(ExponentialRate(n).median(1.0)) == pytest.approx(2 * n / stats.chi2.ppf(0.5, 2 * n), rel=1e-12)


def test_transform_median_is_half_quantile():
    m = NormalTransform(0.3, 0.3)
    phi = 4.0
    assert float(m.estimator_cdf(m.median(phi), phi)) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("a", [0.01, 0.1, 0.2, 0.3, -0.2])
def test_mle_shift_small_when_bias_matches_acceleration(a):
    assert abs(mle_shift(a, a)) <= 10 * abs(a) ** 3


@given(st.floats(0.05, 0.4), st.floats(-0.4, 0.4))
@settings(max_examples=60, deadline=None)
def test_mle_shift_agrees_with_raw_form(a, z0):
    assert mle_shift(a, z0) == pytest.approx(mle_shift_raw(a, z0), rel=1e-6, abs=1e-9)


def test_transform_w_is_minimal_at_mle():
    m = NormalTransform(0.3, 0.3)
    that = float(m.mle(np.array([10.0])))
    grid = np.linspace(2.0, 30.0, 400)
    assert float(m.w(that, that)) == pytest.approx(0.0, abs=1e-12)
    assert np.all(m.w(grid, that) >= -1e-12)


def test_transform_rejects_large_bias_times_acceleration():
    with pytest.raises(DomainError):
        NormalTransform(0.9, 3.0)


@given(st.floats(-0.6, 0.6), st.floats(-3.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_transform_mle_maximizes_loglik(a, z0):
    if a * z0 >= 0.95 or abs(a) < 1e-3:
        return
    m = NormalTransform(a, z0)
    data = np.array([0.3])
    that = float(m.mle(data))
    lo, hi = m.working_interval(that, 4.0)
    grid = np.linspace(lo, hi, 2001)
    assert np.all(m.loglik(that, data) >= m.loglik(grid, data) - 1e-9)


def test_exponential_family_summaries():
    n = 10
    m = NormalVariance(n)
    theta = 2.0
    assert float(m.sigma(theta)) == pytest.approx(theta * math.sqrt(2.0 / n), rel=1e-12)
    assert float(m.rho3(theta)) == pytest.approx(2 * math.sqrt(2), rel=1e-10)
    assert float(m.rho4(theta)) == pytest.approx(12.0, rel=1e-10)


def test_custom_family_matches_builtin_gamma(rng):
    ref = GammaFamily(9, 1.0)
    custom = gamma_custom(9, 1.0)
    theta = np.array([0.5, 1.0, 2.5])
    for k in (2, 3, 4):
        assert np.allclose(custom.psi_deriv(theta, k), ref.psi_deriv(theta, k), rtol=1e-10)
    assert np.allclose(custom.w(theta, 1.3), ref.w(theta, 1.3), rtol=1e-10)
    assert np.allclose(custom.estimator_cdf(1.1, theta), ref.estimator_cdf(1.1, theta), rtol=1e-10)


def test_custom_gamma_ratio_is_pivotal():
    m = gamma_custom(6, 2.0)
    assert m.pivotal
    draws = []
    for theta in (0.5, 3.0):
        x = m.sample(theta, np.random.default_rng(7), 500)
        draws.append(m.w(theta, m.mle(x)))
    assert np.allclose(draws[0], draws[1], rtol=1e-8, atol=1e-12)


def test_normal_mean_median_is_identity():
    m = NormalMean(4, 2.0)
    assert float(m.median(1.7)) == 1.7


def test_w_level_roots_both_sides():
    m = NormalVariance(10)
    y = np.array([0.5, 2.0, 6.0])
    lo = w_level_roots(m, 2.0, y, -1.0)
    hi = w_level_roots(m, 2.0, y, 1.0)
    assert np.all(lo < 2.0) and np.all(hi > 2.0)
    assert np.allclose(m.w(2.0, lo), y, rtol=1e-9)
    assert np.allclose(m.w(2.0, hi), y, rtol=1e-9)


def test_registry_builds_every_key():
    assert {"normal-var", "exp-rate", "normal-transform", "expfam-custom", "gpd"} <= set(REGISTRY)
    assert isinstance(get_model("normal-var", n=7), NormalVariance)
    with pytest.raises(KeyError):
        get_model("nope")


def test_out_of_domain_theta_rejected():
    with pytest.raises(DomainError):
        NormalVariance(10).check_theta(-1.0)
