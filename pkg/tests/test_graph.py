import numpy as np
import pytest
from hypothesis import given, strategies as st

from narrowfront.channel import GeneratorParams, flat_shape, sample_channel
from narrowfront.graph import DomainError, build_graph, identify, measures


def test_edge_labels_and_vertex_counts():
    g = build_graph(sample_channel(GeneratorParams(), 7, 10), sides="+", n_cells=4)
    assert sorted(g.edges) == list(range(1, 10))
    assert len(g.interior) == 4 and len(g.exterior) == 4
    both = build_graph(flat_shape(3), n_cells=1)
    assert sorted(both.edges) == [-3, -2, -1, 1, 2, 3]


@given(st.integers(0, 10_000))
def test_vertex_weights_balance(seed):
    shape = sample_channel(GeneratorParams(), seed, 6)
    g = build_graph(shape, n_cells=5)
    for v in g.interior:
        w = dict(zip(v.edges, v.weights))
        s = dict(zip(v.edges, v.signs))
        spine = [e for e in v.edges if g.edges[e].kind == "spine"]
        wing = [e for e in v.edges if g.edges[e].kind == "wing"][0]
        left = [e for e in spine if s[e] < 0][0]
        right = [e for e in spine if s[e] > 0][0]
        assert w[left] - w[right] == pytest.approx(s[wing] * w[wing], abs=1e-12)
        # widths at the vertex agree with the edge profiles
        for e in v.edges:
            ed = g.edges[e]
            end = ed.b if ed.vertices[1] == v.id else ed.a
            assert float(ed.width(end)) == pytest.approx(w[e], rel=1e-12)


def test_spine_edges_tile_the_line():
    shape = sample_channel(GeneratorParams(), 2, 8)
    g = build_graph(shape, n_cells=6)
    ends = [(g.edges[e].origin, g.edges[e].origin + g.edges[e].b) for e in g.spine_order]
    for (a0, b0), (a1, b1) in zip(ends, ends[1:]):
        assert b0 == pytest.approx(a1, abs=1e-12)
    assert any(abs(a) < 1e-15 for a, _ in ends)


def test_measures_agree_with_profile_tables():
    g = build_graph(sample_channel(GeneratorParams(), 4, 4), sides="+", n_cells=2)
    for e in g.edges.values():
        x = 0.5 * (e.a + e.b)
        p, m, dp, dm = measures(e, x)
        assert p == pytest.approx(float(e.p(x)), rel=1e-9)
        assert m == pytest.approx(float(e.m(x)), rel=1e-9)
        assert dp == pytest.approx(1 / float(e.width(x)))
    with pytest.raises(DomainError):
        measures(g.edges[1], g.edges[1].b + 1.0)


def test_identify_rectangular(rect_params):
    shape = sample_channel(rect_params, 3, 6)
    c = shape.right[0]
    X1 = c.spine_length
    # deep in the first spine piece
    assert identify(shape, (0.5 * X1, 0.1)) == (0.5 * X1, 1)
    # inside the first wing: above the narrower side next to the junction
    xw = X1 + 0.5 * c.wing_r
    zw = 0.5 * (c.alpha + c.beta)
    assert identify(shape, (xw, zw)) == (xw, 2)
    with pytest.raises(DomainError):
        identify(shape, (0.5 * X1, 5.0))
    with pytest.raises(DomainError):
        identify(sample_channel(GeneratorParams(), 1, 3), (0.1, 0.1))


def test_graph_json_lists_every_edge():
    import json
    g = build_graph(flat_shape(4), n_cells=2)
    doc = json.loads(g.dumps())
    assert {e["id"] for e in doc["edges"]} == set(g.edges)
