import math

import numpy as np
import pytest

from narrowfront import frontpde as F
from narrowfront.acceptance import indicator, window_graph
from narrowfront.channel import GeneratorParams, flat_shape, mirror, sample_channel
from narrowfront.graph import build_graph


@pytest.fixture(scope="module")
def flat_graph():
    return window_graph(flat_shape(40), 12.0)


def test_grid_invariants():
    g = build_graph(sample_channel(GeneratorParams(), 3, 6), n_cells=4)
    grid = F.build_grid(g, 0.05)
    for eid, nodes in grid.edge_nodes.items():
        assert nodes.size - 2 >= 8
        assert np.all(np.diff(grid.x[nodes]) != 0)
    # a vertex node is shared by all three incident edges and appears once
    for v in g.interior:
        ends = set()
        for e in v.edges:
            nodes = grid.edge_nodes[e]
            ed = g.edges[e]
            ends.add(int(nodes[-1] if ed.vertices[1] == v.id else nodes[0]))
        assert len(ends) == 1
    assert np.unique(grid.x[grid.spine_order]).size == grid.spine_order.size


def test_heat_kernel(flat_graph):
    sol = F.solve(flat_graph, lambda x: np.exp(-np.asarray(x) ** 2 / 2), None, 1.0, dx=0.01, do_track=False)
    xs, us = sol.spine_profile()
    assert np.max(np.abs(us - np.exp(-xs ** 2 / 4) / math.sqrt(2))) < 1e-4


def test_mass_is_conserved():
    g = build_graph(sample_channel(GeneratorParams(), 3, 10), n_cells=8)
    sol = F.solve(g, indicator(), None, 2.0, dx=0.05, do_track=False)
    m = [F.heat_mass(sol, k) for k in range(len(sol.times))]
    assert max(abs(v - m[0]) for v in m) < 1e-10 * 2.0


def test_one_stays_one(flat_graph):
    sol = F.solve(flat_graph, lambda x: np.ones_like(np.asarray(x)), F.kpp, 1.0, do_track=False)
    assert np.max(np.abs(sol.snapshots[-1] - 1.0)) < 1e-12


def test_values_stay_in_unit_interval():
    g = build_graph(sample_channel(GeneratorParams(), 5, 12), n_cells=10)
    sol = F.solve(g, indicator(2.0), F.kpp, 3.0, do_track=False)
    assert sol.snapshots.min() >= 0.0 and sol.snapshots.max() <= 1.0


def test_oversized_step_is_refused(flat_graph):
    with pytest.raises(F.StabilityError):
        F.solve(flat_graph, indicator(), F.kpp, 1.0, dt=0.01, do_track=False)


def test_track_recovers_a_constructed_speed():
    t = np.linspace(0, 20, 41)
    x = np.linspace(-40, 40, 4001)
    u = np.array([0.5 * (1 - np.tanh(np.abs(x) - 1.3 * ti - 2)) for ti in t])
    tr = F.track(t, x, u)
    assert tr.speed_right == pytest.approx(1.3, abs=1e-3)
    assert tr.speed_left == pytest.approx(-1.3, abs=1e-3)
    assert tr.r2_right > 0.999999


def test_track_reports_an_escaped_front():
    t = np.linspace(0, 20, 41)
    x = np.linspace(-10, 10, 201)
    u = np.array([0.5 * (1 - np.tanh(np.abs(x) - 1.3 * ti)) for ti in t])
    with pytest.raises(F.DomainExhaustedError):
        F.track(t, x, u)
    with pytest.raises(ValueError):
        F.track(t[:5], x, u[:5])


def test_mirror_symmetric_channel_gives_symmetric_fronts():
    shape = sample_channel(GeneratorParams(), 6, 40)
    sym = type(shape)(shape.right, shape.right, shape.rng_seed, shape.generator_params)
    sol = F.solve(window_graph(sym, 30.0), indicator(), F.kpp, 12.0, dx=0.05)
    assert sol.trace.speed_right == pytest.approx(-sol.trace.speed_left, rel=1e-9)
    assert mirror(sym) == sym


def test_flat_front_speed_and_refinement():
    shape = flat_shape(60)
    g = window_graph(shape, 45.0)
    s1 = F.solve(g, indicator(), F.kpp, 20.0, dx=0.1).trace.speed_right
    s2 = F.solve(g, indicator(), F.kpp, 20.0, dx=0.05).trace.speed_right
    assert abs(s1 - s2) / s2 < 0.01
    # secant slope of sqrt(2) t - 3/(2 sqrt(2)) log t over the fit window [10, 20]
    bramson = math.sqrt(2) - 3 / (2 * math.sqrt(2)) * math.log(2) / 10
    assert abs(s2 - bramson) < 0.02


def test_csv_layouts(flat_graph):
    sol = F.solve(flat_graph, indicator(), F.kpp, 5.0, snapshot_every=0.5, fit_window=(0.0, 5.0))
    assert sol.trace.to_csv().splitlines()[0] == "t,x_right,x_left"
    assert sol.snapshots_csv().splitlines()[0] == "t,edge,x,u"
