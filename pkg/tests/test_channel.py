import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from narrowfront.channel import (ChannelShape, GeneratorParams, ParameterError, mirror,
                                 sample_channel, validate)

seeds = st.integers(0, 2**31 - 1)


@given(seeds)
def test_junction_conservation_holds_exactly(seed):
    shape = sample_channel(GeneratorParams(), seed, 20)
    for c in shape.right + shape.left:
        assert c.alpha - c.beta == c.wing_sign * c.gamma


@given(seeds)
def test_sampled_shapes_are_valid(seed):
    assert validate(sample_channel(GeneratorParams(), seed, 15)) == []


@given(seeds)
def test_rectangular_shapes_are_valid_and_quantized(seed):
    p = GeneratorParams(L_lo=1.0, L_hi=2.0, A1=0.5, amplitude=0.0, trig_degree=0, rectangular_mode=True)
    shape = sample_channel(p, seed, 15)
    assert validate(shape) == []
    for c in shape.right:
        for v in (c.spine_length, abs(c.wing_r), *c.junction_widths):
            assert abs(v / p.quantum - round(v / p.quantum)) < 1e-9


def test_same_seed_same_bytes():
    a = sample_channel(GeneratorParams(), 3, 30).dumps()
    b = sample_channel(GeneratorParams(), 3, 30).dumps()
    assert a == b
    assert a != sample_channel(GeneratorParams(), 4, 30).dumps()


def test_prefix_does_not_depend_on_length():
    short = sample_channel(GeneratorParams(), 3, 10)
    long = sample_channel(GeneratorParams(), 3, 50)
    assert short.right == long.right[:10]
    assert short.left == long.left[:10]


def test_json_round_trip_is_exact(tmp_path):
    shape = sample_channel(GeneratorParams(), 11, 12)
    path = tmp_path / "s.json"
    shape.save(path)
    back = ChannelShape.load(path)
    assert back == shape
    assert json.loads(path.read_text())["format"] == "channel/1"


def test_mirror_is_an_involution():
    shape = sample_channel(GeneratorParams(), 5, 8)
    assert mirror(mirror(shape)) == shape
    assert mirror(shape).side("+") == shape.side("-")


def test_cells_are_identically_distributed():
    # first and second halves of a long side should not be distinguishable
    shape = sample_channel(GeneratorParams(), 99, 2000)
    L = np.array([c.spine_length for c in shape.right])
    g = np.array([c.gamma for c in shape.right])
    assert stats.ks_2samp(L[:1000], L[1000:]).pvalue > 1e-3
    assert stats.ks_2samp(g[:1000], g[1000:]).pvalue > 1e-3
    assert stats.kstest(L, "uniform", args=(0.5, 1.0)).pvalue > 1e-3


@pytest.mark.parametrize("kw, msg", [
    (dict(L_lo=2.0, L_hi=1.0), "L_lo"),
    (dict(tip_beta=1.0), "tip exponent"),
    (dict(amplitude=0.5), "amplitude"),
    (dict(gamma_hi=0.9, A1=0.8), "gamma"),
])
def test_bad_parameters_are_named(kw, msg):
    with pytest.raises(ParameterError, match=msg):
        GeneratorParams(**kw).check()


def test_validate_reports_broken_conservation():
    shape = sample_channel(GeneratorParams(), 1, 3)
    c = shape.right[0]
    from dataclasses import replace
    bad = replace(c, junction_widths=(c.alpha, c.beta + 0.01, c.gamma))
    out = validate(replace(shape, right=(bad,) + shape.right[1:]))
    assert any("conservation" in s for s in out)
