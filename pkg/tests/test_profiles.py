import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from narrowfront.profiles import WidthProfile

coef = st.floats(-0.1, 0.1)


def trig(c1, a1, a2, D):
    return WidthProfile("trig", (1.0, c1, a1, a2), D)


def test_constant_measures_closed_form():
    pr = WidthProfile.constant(2.0, 3.0)
    assert pr.p(1.5) == pytest.approx(0.75, rel=1e-14)
    assert pr.m(1.5) == pytest.approx(6.0, rel=1e-14)


def test_tip_scale_function_closed_form():
    # int_0^x dy / (c (1 - y/D)^b) = D / (c (1 - b)) * (1 - (1 - x/D)^(1-b))
    c, D, b = 0.3, 0.7, 0.5
    pr = WidthProfile.tip(c, D, b)
    for x in (0.1, 0.5, 0.7):
        expect = D / (c * (1 - b)) * (1 - (1 - x / D) ** (1 - b))
        assert pr.p(x) == pytest.approx(expect, rel=1e-12)
    assert pr.p_length == pytest.approx(D / (c * (1 - b)), rel=1e-12)
    assert float(pr(D)) == 0.0


@given(coef, coef, coef, st.floats(0.5, 1.5))
def test_trig_measures_match_quadrature(c1, a1, a2, D):
    pr = trig(c1, a1, a2, D)
    for x in (0.3 * D, D):
        p_ref = integrate.quad(lambda y: 1 / float(pr(y)), 0, x, epsabs=0, epsrel=1e-12)[0]
        m_ref = integrate.quad(lambda y: 2 * float(pr(y)), 0, x, epsabs=0, epsrel=1e-12)[0]
        assert float(pr.p(x)) == pytest.approx(p_ref, rel=1e-10)
        assert float(pr.m(x)) == pytest.approx(m_ref, rel=1e-12)


@given(coef, coef, coef, st.floats(0.5, 1.5))
def test_trig_ends_and_flat_slopes(c1, a1, a2, D):
    pr = trig(c1, a1, a2, D)
    assert float(pr(0.0)) == pytest.approx(1.0, abs=1e-14)
    assert float(pr(D)) == pytest.approx(1.0 + c1, abs=1e-14)
    assert abs(float(pr.derivative(0.0))) < 1e-12
    assert abs(float(pr.derivative(D))) < 1e-12


@given(coef, coef, coef, st.floats(0.5, 1.5))
def test_derivative_matches_finite_difference(c1, a1, a2, D):
    pr = trig(c1, a1, a2, D)
    x, h = 0.37 * D, 1e-6
    fd = (float(pr(x + h)) - float(pr(x - h))) / (2 * h)
    assert float(pr.derivative(x)) == pytest.approx(fd, abs=1e-7)


@given(coef, coef, coef, st.floats(0.5, 1.5))
def test_scale_and_speed_are_increasing(c1, a1, a2, D):
    pr = trig(c1, a1, a2, D)
    xs = np.linspace(0, D, 50)
    assert np.all(np.diff(pr.p(xs)) > 0)
    assert np.all(np.diff(pr.m(xs)) > 0)


@given(coef, coef, coef, st.floats(0.5, 1.5))
def test_reversed_reads_the_profile_backwards(c1, a1, a2, D):
    pr = trig(c1, a1, a2, D)
    rv = pr.reversed()
    xs = np.linspace(0, D, 13)
    assert np.allclose(rv(xs), pr(D - xs), atol=1e-13)


def test_invalid_profiles_rejected():
    with pytest.raises(ValueError):
        WidthProfile("spline", (1.0,), 1.0)
    with pytest.raises(ValueError):
        WidthProfile.constant(1.0, 0.0)
