import math

import numpy as np
import pytest

from narrowfront import walker as W
from narrowfront.channel import GeneratorParams, flat_shape, sample_channel
from narrowfront.graph import build_graph


@pytest.fixture(scope="module")
def flat_walker():
    return W.Walker(build_graph(flat_shape(12), sides="+", n_cells=10), W.WalkerConfig(dt=1e-3))


def test_tilted_transform_matches_exponential(flat_walker):
    q = W.estimate_q(flat_walker, 0.0, 3.0, -0.5, 3000, np.random.default_rng(1))
    assert abs(q.estimate - math.exp(-3.0)) < 4 * q.se
    assert q.log_se < 0.02


def test_same_seed_same_numbers(flat_walker):
    a = W.estimate_q(flat_walker, 0.0, 2.0, -0.5, 200, np.random.default_rng(3))
    b = W.estimate_q(flat_walker, 0.0, 2.0, -0.5, 200, np.random.default_rng(3))
    assert a == b


def test_exit_side_frequency_on_flat_channel(flat_walker):
    n = 4000
    hs = W.sample_hit(flat_walker, 0.6, 0.0, 2.0, n, np.random.default_rng(2))
    freq = np.mean(hs.reason == "lower")
    assert abs(freq - 0.7) < 4 * math.sqrt(0.21 / n)
    # spine-only exit time of (0, A) from x is x (A - x)
    assert abs(hs.T.mean() - 0.84) < 4 * hs.T.std() / math.sqrt(n)


def test_censoring_is_reported(flat_walker):
    with pytest.raises(W.CensoringError):
        W.sample_hit(flat_walker, 5.0, 0.0, None, 200, np.random.default_rng(0), horizon=0.5)


def test_vertex_split_follows_the_widths(rect_params):
    # just after leaving a vertex, a Walsh spider sits on each leg with probability prop. to its weight
    shape = sample_channel(rect_params, 4, 4)
    g = build_graph(shape, sides="+", n_cells=2)
    wk = W.Walker(g, W.WalkerConfig(dt=1e-5))
    v = g.interior[0]
    n = 20000
    st = W.GraphState.at(wk, 1, g.edges[1].b, n)
    rng = np.random.default_rng(7)
    for _ in range(200):
        wk.step(st, rng)
    ids = wk.edge_ids[st.edge]
    w = np.array(v.weights) / sum(v.weights)
    for e, p in zip(v.edges, w):
        freq = np.mean(ids == e)
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / n) + 0.005


def test_long_run_occupation_follows_the_speed_measure():
    shape = sample_channel(GeneratorParams(), 21, 3)
    g = build_graph(shape, sides="+", n_cells=1)
    wk = W.Walker(g, W.WalkerConfig(dt=2e-3))
    n = 8000
    st = W.GraphState.at(wk, 1, 0.3, n)
    rng = np.random.default_rng(11)
    for _ in range(int(12 / 2e-3)):
        wk.step(st, rng)
    mass = {e: float(ed.m(ed.b) - ed.m(ed.a)) for e, ed in g.edges.items()}
    total = sum(mass.values())
    ids = wk.edge_ids[st.edge]
    for e, m in mass.items():
        p = m / total
        assert abs(np.mean(ids == e) - p) < 4 * math.sqrt(p * (1 - p) / n) + 0.01


def test_tip_wing_paths_stay_inside():
    shape = sample_channel(GeneratorParams(), 2, 3)
    g = build_graph(shape, sides="+", n_cells=1)
    wk = W.Walker(g, W.WalkerConfig(dt=1e-3))
    st = W.GraphState.at(wk, 1, g.edges[1].b - 0.01, 2000)
    rng = np.random.default_rng(0)
    for _ in range(500):
        wk.step(st, rng)
        assert np.all(st.x >= wk.a[st.edge] - 1e-12)
        assert np.all(st.x <= wk.b[st.edge] + 1e-12)


def test_feynman_kac_linear_case_is_the_heat_kernel(flat_walker):
    g = lambda x: np.exp(-(np.asarray(x) - 5.0) ** 2 / 2)
    xs = np.array([4.0, 5.0, 6.5])
    fk = W.feynman_kac(flat_walker, g, lambda u: 0.0 * u, 1.0, xs, np.random.default_rng(5),
                       n_paths=2000, replicates=8)
    exact = np.exp(-(xs - 5.0) ** 2 / 4) / math.sqrt(2)
    assert np.all(np.abs(fk.u - exact) < 4 * fk.se + 1e-3)


def test_feynman_kac_keeps_the_constant_state(flat_walker):
    fk = W.feynman_kac(flat_walker, lambda x: np.ones_like(np.asarray(x)), lambda u: u * (1 - u), 0.2,
                       [3.0, 5.0], np.random.default_rng(0), n_paths=4, replicates=2, node_dx=0.2)
    assert np.allclose(fk.u, 1.0, atol=1e-12)


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        W.WalkerConfig(dt=0.0)
