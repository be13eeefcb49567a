import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from confcurve.asymptotics import (
    MAX_ORDER,
    NotConvexError,
    TruncatedSeries,
    conjugate_point,
    conjugate_point_expansion,
    conjugate_point_reflection,
    cornish_fisher_quantile,
    edgeworth_tail,
    lemma1_from_taylor,
    lemma1_invert,
    lemma1_residual,
    median_expansion,
)
from confcurve.models import GammaFamily, NormalMean, NormalVariance

rationals = st.fractions(min_value=-3, max_value=3, max_denominator=12)


def test_series_arithmetic():
    s = TruncatedSeries.of([1, 2, 3], 4)
    assert (s * s).coeffs == tuple(Fraction(v) for v in (1, 4, 10, 12, 9))
    assert (s - s).is_zero()
    assert (s**0).coeffs[0] == 1


def test_series_compose_and_evaluate():
    f = TruncatedSeries.of([0, 1, 1], 4)
    g = TruncatedSeries.of([0, 2], 4)
    assert f.compose(g).coeffs[:3] == (0, 2, 4)
    assert f(0.5) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        f.compose(TruncatedSeries.of([1, 1], 4))
    with pytest.raises(ValueError):
        TruncatedSeries.of([1], MAX_ORDER + 1)


@given(st.lists(rationals, min_size=3, max_size=3), st.lists(rationals, min_size=2, max_size=2))
@settings(max_examples=40, deadline=None)
def test_compose_is_associative(fc, gc):
    f = TruncatedSeries.of([0, *fc], 5)
    g = TruncatedSeries.of([0, *gc], 5)
    h = TruncatedSeries.of([0, 1, 1], 5)
    assert f.compose(g.compose(h)) == f.compose(g).compose(h)


def test_symmetric_quadratic_reflects_to_minus_x():
    assert lemma1_invert([0, 0, 0, 0]) == [0, 0, 0, 0]


@given(st.lists(rationals, min_size=5, max_size=5))
@settings(max_examples=100, deadline=None)
def test_closed_forms_and_exact_residual(b):
    b3, b4, b5, b6, b7 = b
    a = lemma1_invert(b)
    assert a[0] == b3
    assert a[1] == b3**2
    assert a[2] == b5 - 2 * b3 * b4 + 2 * b3**3
    assert a[3] == 3 * b3 * b5 - 6 * b3**2 * b4 + 4 * b3**4
    assert a[4] == 9 * b3**5 - 19 * b3**3 * b4 + 11 * b3**2 * b5 + 4 * b3 * b4**2 - 3 * b3 * b6 - 2 * b4 * b5 + b7
    assert lemma1_residual(b, a).is_zero(6)


def test_lemma1_from_taylor_normalises():
    # f(x) = 3 x^2 + x^3 has b3 = 1/3
    assert lemma1_from_taylor([6, 6])[0] == Fraction(1, 3)
    with pytest.raises(NotConvexError):
        lemma1_from_taylor([-1, 2])


def test_reflection_accepts_rational_strings():
    assert lemma1_invert(["1/2", "0"]) == [Fraction(1, 2), Fraction(1, 4)]


def test_cornish_fisher_normal_case_and_median():
    assert float(cornish_fisher_quantile(0.0, 0.0, 30, 0.9)) == pytest.approx(stats.norm.ppf(0.9))
    assert float(cornish_fisher_quantile(1.2, 3.0, 30, 0.5)) == pytest.approx(-1.2 / (6 * math.sqrt(30)))


def _gamma_standard_quantile(n, a):
    dist = stats.gamma(n / 2, scale=2.0 / n)
    return (dist.ppf(a) - 1.0) / math.sqrt(2.0 / n)


def test_cornish_fisher_error_halves_with_fourfold_n():
    errs = []
    for n in (20, 80):
        m = NormalVariance(n)
        q = float(cornish_fisher_quantile(float(m.rho3(1.0)), float(m.rho4(1.0)), n, 0.95))
        errs.append(abs(q - _gamma_standard_quantile(n, 0.95)))
    assert errs[1] <= 0.5 * errs[0]


def test_median_expansion_symmetric_family():
    assert float(median_expansion(NormalMean(10), 2.0)) == 2.0


def test_median_expansion_remainder_is_second_order():
    scaled = []
    for n in (10, 20, 40, 80):
        m = NormalVariance(n)
        scaled.append(abs(float(median_expansion(m, 1.0)) - float(m.median(1.0))) * n * n)
    assert max(scaled) / min(scaled) < 1.1


def test_median_expansion_exponential_rate():
    scaled = []
    for n in (10, 20, 40, 80):
        theta = 2.0
        approx = 1.0 / float(median_expansion(GammaFamily(n, 1.0), 1.0 / theta))
        exact = 2 * n * theta / stats.chi2.ppf(0.5, 2 * n)
        scaled.append(abs(approx - exact) * n * n)
    assert max(scaled) / min(scaled) < 1.1


def test_edgeworth_trivial_cases():
    assert float(edgeworth_tail(0.0, 10, 0.7)) == pytest.approx(stats.norm.sf(0.7))
    assert float(edgeworth_tail(2.0, 10, 1.0)) == pytest.approx(stats.norm.cdf(-1.0), abs=1e-15)
    assert float(edgeworth_tail(2.0, 10, -1.0)) == pytest.approx(stats.norm.cdf(1.0), abs=1e-15)


def test_edgeworth_tail_against_chi_square():
    errs = []
    for n in (40, 160):
        m = NormalVariance(n)
        exact = stats.gamma(n / 2, scale=2.0 / n).sf(1.0 + 1.5 * math.sqrt(2.0 / n))
        errs.append(abs(float(edgeworth_tail(float(m.rho3(1.0)), n, 1.5)) - exact))
    assert errs[0] <= 5e-3 and errs[1] < errs[0]


def test_conjugate_point_for_symmetric_quadratic():
    m = NormalMean(9, 1.0)
    assert conjugate_point(m, 0.3, 0.8) == pytest.approx(2 * 0.3 - 0.8, abs=1e-12)


def test_conjugate_point_matches_level():
    m = NormalVariance(15)
    theta, that = 1.0, 1.4
    bt = float(m.median(theta))
    star = conjugate_point(m, theta, that)
    assert star < bt < that
    assert float(m.w(bt, star)) == pytest.approx(float(m.w(bt, that)), rel=1e-9)


@pytest.mark.parametrize("approx", [conjugate_point_expansion, conjugate_point_reflection])
@pytest.mark.parametrize("u", [1.0, 1.5, -1.0])
def test_conjugate_point_expansions_order(approx, u):
    scaled = []
    for n in (20, 80, 320):
        m = NormalVariance(n)
        that = 1.0 + u * float(m.sigma(1.0))
        scaled.append(abs(approx(m, 1.0, that) - conjugate_point(m, 1.0, that)) * n**1.5)
    # gap <= c n^{-3/2} with c taken from the smallest n
    assert all(s <= scaled[0] * 1.05 for s in scaled)
    assert scaled[0] < 2.0


def test_expansions_beat_zeroth_order():
    for n in (20, 80):
        m = GammaFamily(n, 0.5)
        rho3, rho4 = float(m.rho3(1.0)), float(m.rho4(1.0))
        for a in (0.05, 0.25, 0.75, 0.95):
            z = stats.norm.ppf(a)
            exact = _gamma_standard_quantile(n, a)
            assert abs(float(cornish_fisher_quantile(rho3, rho4, n, a)) - exact) < abs(z - exact)
