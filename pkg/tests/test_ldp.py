import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from narrowfront import ldp
from narrowfront.channel import GeneratorParams, flat_shape, sample_channel


@pytest.fixture(scope="module")
def random_curve():
    return ldp.mu_curve(sample_channel(GeneratorParams(), 7, 600), direction="+")


def test_flat_curve_is_brownian():
    grid = np.concatenate([-np.geomspace(10, 1e-2, 20), [0.0]])
    curve = ldp.mu_curve(flat_shape(400), grid)
    assert np.allclose(curve.mu, -np.sqrt(-2 * grid), atol=1e-8)


@given(st.floats(0.3, 20.0))
def test_brownian_rate_closed_form(a):
    r = ldp.rate(ldp.brownian_curve(), a)
    assert r.value == pytest.approx(1 / (2 * a), rel=1e-6)
    assert r.lam_star == pytest.approx(-1 / (2 * a * a), rel=1e-3)


@given(st.floats(0.2, 3.0))
def test_brownian_speed_is_sqrt_two_fprime(fp):
    c = ldp.brownian_curve()
    sp = ldp.speeds(c, c, fp)
    assert sp.c_plus == pytest.approx(math.sqrt(2 * fp), rel=1e-7)
    assert sp.c_minus == pytest.approx(-math.sqrt(2 * fp), rel=1e-7)


def test_mu_is_negative_convex_and_zero_at_zero(random_curve):
    lam, mu = random_curve.lam, random_curve.mu
    assert mu[-1] == 0.0 and np.all(mu[:-1] < 0)
    slope = np.diff(mu) / np.diff(lam)
    assert np.all(np.diff(slope) >= -1e-9 * np.abs(slope[1:]))



@given(st.floats(0.3, 50.0))
def test_rate_is_a_supremum(a):
    curve = ldp.brownian_curve()
    r = ldp.rate(curve, a)
    assert np.all(a * curve.lam - curve.mu <= r.value + 1e-12)


def test_rate_positive_decreasing_convex(random_curve):
    a = np.array([0.5, 1.0, 2.0, 5.0, 10.0, 100.0])
    I = np.array([ldp.rate(random_curve, v).value for v in a])
    assert np.all(I > 0) and np.all(np.diff(I) < 0)
    g = np.diff(I) / np.diff(a)
    assert np.all(np.diff(g) >= 0)
    assert I[-1] / I[1] < 0.02


def test_grid_error_when_sup_leaves_the_grid():
    curve = ldp.brownian_curve(ldp.default_grid(20, -1.0, -1e-3))
    with pytest.raises(ldp.GridError):
        ldp.rate(curve, 0.1)
    r = ldp.rate(curve, 0.1, strict=False)
    assert r.off_grid


def test_positive_lambda_rejected():
    with pytest.raises(ldp.DomainError):
        ldp.mu_curve(flat_shape(10), [0.5])


def test_csv_has_header(random_curve):
    text = random_curve.to_csv()
    assert text.splitlines()[0] == "lambda,mu,se"
    assert len(text.splitlines()) == len(random_curve.lam) + 1
