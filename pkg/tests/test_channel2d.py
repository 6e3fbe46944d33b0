import numpy as np
import pytest

from narrowfront import channel2d as C, frontpde as F
from narrowfront.acceptance import indicator
from narrowfront.channel import sample_channel, GeneratorParams
from narrowfront.graph import DomainError, build_graph


@pytest.fixture(scope="module")
def flat_setup():
    g = build_graph(C.flat_rect_shape(6), n_cells=4, check=False)
    return g, C.rect_domain(g, 0.05)


@pytest.fixture(scope="module")
def winged_setup(rect_params):
    g = build_graph(sample_channel(rect_params, 1, 6), n_cells=4, check=False)
    return g, C.rect_domain(g, 0.05)


def test_flat_rectangle_is_z_independent_and_one_dimensional(flat_setup):
    g, dom = flat_setup
    sol = C.solve_2d(dom, 0.3, indicator(), F.kpp, 1.0)
    assert C.cross_section_spread(sol) < 1e-12
    grid = F.build_grid(g, 0.05, min_interior=1)
    ref = F.solve(g, indicator(), F.kpp, 1.0, dt=sol.dt, grid=grid, snapshot_every=0.25, do_track=False)
    # identical schemes; the residue is round-off accumulated over ~1e4 steps
    assert C.compare_graph(sol, ref).max_error < 1e-9


def test_mass_is_conserved(winged_setup):
    _, dom = winged_setup
    sol = C.solve_2d(dom, 0.4, indicator(), None, 1.0)
    m = [dom.mass(u) for u in sol.snapshots]
    assert max(abs(v - m[0]) for v in m) < 1e-8


def test_cross_sections_flatten(winged_setup):
    _, dom = winged_setup
    sol = C.solve_2d(dom, 0.2, indicator(), F.kpp, 1.5, snapshot_every=0.5)
    spread = max(C.cross_section_spread(sol, k) for k in range(2, len(sol.times)))
    assert spread < 0.05


def test_errors_shrink_with_eps_without_reaction(winged_setup):
    g, dom = winged_setup
    grid = F.build_grid(g, 0.05, min_interior=1)
    ref = F.solve(g, indicator(), None, 1.0, grid=grid, snapshot_every=0.25, do_track=False)
    errs = [C.compare_graph(C.solve_2d(dom, e, indicator(), None, 1.0), ref).max_error for e in (0.4, 0.2)]
    assert errs[1] < errs[0]


def test_gradient_bounded_across_eps(winged_setup):
    _, dom = winged_setup
    g = lambda x: np.clip(1 - np.abs(np.asarray(x)) / 2, 0, 1)
    grads = [C.solve_2d(dom, e, g, F.kpp, 0.5).spine_gradient() for e in (0.4, 0.2)]
    assert max(grads) < 1.0


def test_averages_use_the_graph_schema(winged_setup):
    _, dom = winged_setup
    sol = C.solve_2d(dom, 0.4, indicator(), F.kpp, 0.5)
    assert sol.averages_csv().splitlines()[0] == "t,edge,x,u"
    assert set(sol.averages()) <= set(dom.graph.edges)


def test_requires_rectangular_geometry():
    g = build_graph(sample_channel(GeneratorParams(), 1, 4), n_cells=2)
    with pytest.raises(DomainError):
        C.rect_domain(g, 0.05)


def test_step_limit(flat_setup):
    _, dom = flat_setup
    with pytest.raises(F.StabilityError):
        C.solve_2d(dom, 0.1, indicator(), F.kpp, 0.5, dt=0.01)
