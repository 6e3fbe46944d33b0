import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from narrowfront import sturm
from narrowfront.channel import GeneratorParams, flat_shape, mirror, sample_channel
from narrowfront.profiles import WidthProfile

seeds = st.integers(0, 100_000)
lams = st.floats(-8.0, -0.01)


@pytest.mark.parametrize("method", ["ode", "series"])
def test_fundamental_constant_width_is_cosh(method):
    # (1/2) u'' = lam u with lam = 1/2: u = cosh x, D_p u = sinh x
    sol = sturm.fundamental(WidthProfile.constant(1.0, 1.0), 0.5, method)
    assert sol.u(1.0) == pytest.approx(math.cosh(1.0), rel=1e-12)
    assert sol.dpu(1.0) == pytest.approx(math.sinh(1.0), rel=1e-12)


def test_fundamental_exponential_width():
    # l = e^{2x}: (1/2)(u'' + 2u') = lam u, u(0)=1, u'(0)=0
    D, lam = 1.0, 0.5
    r1, r2 = -1 + math.sqrt(1 + 2 * lam), -1 - math.sqrt(1 + 2 * lam)
    A = -r2 / (r1 - r2)
    expect = A * math.exp(r1 * D) + (1 - A) * math.exp(r2 * D)

    class Exp:
        kind = "exp"
        domain_length = D
        vanishes_at_end = False

        def __call__(self, x):
            return np.exp(2 * np.asarray(x, dtype=float))

    sol = sturm.fundamental(Exp(), lam, "ode")
    assert sol.u(D) == pytest.approx(expect, rel=1e-10)


@given(st.floats(-0.1, 0.1), st.floats(-0.05, 0.05), st.floats(-4.0, 1.0))
def test_series_matches_ode(c1, a1, lam):
    pr = WidthProfile("trig", (1.0, c1, a1), 1.2)
    u1 = sturm.fundamental(pr, lam, "ode")
    u2 = sturm.fundamental(pr, lam, "series")
    assert u2.u(1.2) == pytest.approx(u1.u(1.2), rel=1e-9)
    assert u2.dpu(1.2) == pytest.approx(u1.dpu(1.2), rel=1e-8, abs=1e-12)


def test_basic_pair_boundary_values():
    # (1/2) u'' = u / 2 on [0, 1]: u+ = sinh x / sinh 1, u- = sinh(1 - x) / sinh 1
    bp = sturm.basic_pair(WidthProfile.constant(1.0, 1.0), 0.5)
    assert bp.plus(0.0)[0] == pytest.approx(0.0, abs=1e-14)
    assert bp.plus(1.0)[0] == pytest.approx(1.0, rel=1e-12)
    assert bp.minus(0.0)[0] == pytest.approx(1.0, rel=1e-12)
    assert bp.minus(1.0)[0] == pytest.approx(0.0, abs=1e-12)
    assert bp.plus(0.5)[0] == pytest.approx(math.sinh(0.5) / math.sinh(1.0), rel=1e-10)
    assert bp.minus(0.3)[0] == pytest.approx(math.sinh(0.7) / math.sinh(1.0), rel=1e-10)
    e = bp.ends
    assert e["Dp_plus_a"] == pytest.approx(1 / math.sinh(1.0), rel=1e-10)
    assert e["Dp_minus_b"] == pytest.approx(-1 / math.sinh(1.0), rel=1e-10)


@given(seeds, lams)
def test_transfer_entries_signs_and_routes(seed, lam):
    cells = sample_channel(GeneratorParams(), seed, 12).right
    x, y, _, ex = sturm.transfer_arrays(cells, lam)
    assert np.all(x < 0) and np.all(y >= 1)
    assert np.allclose(x, ex["x_junction"], rtol=1e-9, atol=0)
    assert np.allclose(y, ex["y_junction"], rtol=1e-9, atol=0)
    for end in (0.0, 1.0):
        rho = sturm.ratio_chain(x, y, end)
        assert np.all((rho > 0) & (rho <= 1))


def test_flat_transform_is_exponential():
    res = sturm.hitting_transform(flat_shape(60), -0.5, "+", n_ratios=1)
    assert res.transform == pytest.approx(math.exp(-1.0), rel=1e-9)
    r2 = sturm.hitting_transform(flat_shape(60), -2.0, "+", n_ratios=5)
    assert r2.log_sum == pytest.approx(-5 * 2.0, rel=1e-9)


def test_transform_at_zero_is_one():
    assert sturm.hitting_transform(flat_shape(5), 0.0, n_ratios=3).transform == 1.0


def test_dense_system_reproduces_the_recursion():
    cells = sample_channel(GeneratorParams(), 1, 4).right
    x, y, _, _ = sturm.transfer_arrays(cells, -0.5)
    prod = np.cumprod(sturm.ratio_chain(x[:3], y[:3], 0.0))
    dense = sturm.dense_junction_solve(cells, -0.5, 3)
    assert np.allclose(dense, prod, rtol=1e-9, atol=0)


def test_mirror_swaps_directions():
    shape = sample_channel(GeneratorParams(), 8, 80)
    a = sturm.hitting_transform(shape, -0.3, "-", n_ratios=4).rho
    b = sturm.hitting_transform(mirror(shape), -0.3, "+", n_ratios=4).rho
    assert np.array_equal(a, b)


def test_errors():
    with pytest.raises(sturm.DomainError):
        sturm.hitting_transform(flat_shape(10), 0.2)
    with pytest.raises(sturm.TruncationError):
        sturm.hitting_transform(flat_shape(3), -0.01, n_ratios=2)
    with pytest.raises(ValueError):
        sturm.fundamental(WidthProfile.constant(1.0, 1.0), -1.0, "shooting")
    with pytest.raises(sturm.MethodError):
        sturm.fundamental(WidthProfile.constant(1.0, 10.0), -100.0, "series")


def test_flat_hitting_formulas():
    shape = flat_shape(20)
    assert sturm.hit_probability(shape, 3.0, 10.0) == pytest.approx(0.7, rel=1e-9)
    assert sturm.expected_exit_time(shape, 1.0, 10.0) == pytest.approx(9.0, rel=1e-9)
    with pytest.raises(sturm.DomainError):
        sturm.hit_probability(shape, 11.0, 10.0)


def test_exit_time_grows_without_bound():
    shape = sample_channel(GeneratorParams(), 5, 1100)
    vals = [sturm.expected_exit_time(shape, 1.0, A) for A in (10.0, 100.0, 1000.0)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 50 * vals[0]
