"""Explicit solver for the thin-channel problem in two dimensions.

The equation is ``u_t = u_xx / 2 + u_zz / (2 eps^2) + V u_x + f(u)``.  It is solved on
the union of axis-aligned rectangles of a rectangular-mode channel, with
reflecting walls everywhere.

Grid layout
-----------
* ``x`` nodes sit on multiples of ``h`` (vertex centred, like the graph solver).
* ``z`` nodes sit at ``(j + 1/2) h`` (cell centred), so that horizontal walls fall
  on faces between rows.

Each wing rectangle lies on top of the narrower spine piece next to its
junction.  A zero-thickness wall along the bottom of the wing separates the two,
and only the junction column connects them.  As ``eps -> 0`` every connected
vertical column collapses to one value, and the scheme becomes the graph
finite-volume scheme on the same ``x`` grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .channel import ChannelShape, flat_shape
from .frontpde import FrontSolution, StabilityError, snapshot_schedule
from .graph import DomainError, MetricGraph, build_graph, identify
from .io import csv_text

_TOL = 1e-9


def flat_rect_shape(n_cells: int, length: float = 1.0, width: float = 1.0) -> ChannelShape:
    """Constant-width rectangular-mode channel.

    Its wings are 1e-9 wide.  They are far below grid resolution and are left out
    of the 2D domain.
    """
    sh = flat_shape(n_cells, length, width)
    return replace(sh, generator_params=replace(sh.generator_params, rectangular_mode=True))


@dataclass
class RectDomain:
    """Active nodes of the union of rectangles on an ``h`` grid."""
    h: float
    x: np.ndarray          # node x positions (columns)
    z: np.ndarray          # node z positions (rows)
    active: np.ndarray     # (nz, nx) bool
    volume: np.ndarray     # (nz, nx) control-volume areas, 0 when inactive
    kx: sparse.csr_matrix  # x-diffusion stiffness on active nodes (coefficient 1)
    kz: sparse.csr_matrix  # z-diffusion stiffness on active nodes (coefficient 1)
    index: np.ndarray      # (nz, nx) active-node index or -1
    labels: np.ndarray     # edge id of each active node (from the identification map)
    boxes: list = field(default_factory=list)
    graph: MetricGraph | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.active.sum())

    def node_xz(self):
        jj, ii = np.nonzero(self.active)
        return self.x[ii], self.z[jj]

    def mass(self, u) -> float:
        return float(np.sum(u * self.volume[self.active]))


def _aligned(v, h):
    return abs(v / h - round(v / h)) < 1e-7


def _spine_pieces(graph: MetricGraph):
    out = []
    for eid in graph.spine_order:
        e = graph.edges[eid]
        w0, w1 = float(e.width(e.a)), float(e.width(e.b))
        wm = float(e.width(0.5 * (e.a + e.b)))
        if max(abs(w0 - wm), abs(w1 - wm)) > 1e-6:
            raise DomainError(f"spine edge {eid} is not of constant width; use a rectangular-mode shape")
        out.append((e.origin + e.a, e.origin + e.b, wm))
    return out


def _wing_rects(graph: MetricGraph, h: float):
    rects = []
    for e in graph.edges.values():
        if e.kind != "wing":
            continue
        v = next(graph.vertices[i] for i in e.vertices if i is not None and graph.vertices[i].kind == "interior")
        ws = dict(zip(v.edges, v.weights))
        spine_w = [w for eid, w in ws.items() if graph.edges[eid].kind == "spine"]
        lo, hi = min(spine_w), max(spine_w)
        if hi - lo < 0.5 * h:
            continue  # below grid resolution
        rects.append((e.id, e.origin + e.a, e.origin + e.b, lo, hi))
    return rects


def rect_domain(graph: MetricGraph, h: float) -> RectDomain:
    """Discretise the 2D channel underlying ``graph`` with spacing ``h``."""
    pieces = _spine_pieces(graph)
    rects = _wing_rects(graph, h)
    for x0, x1, w in pieces:
        if not (_aligned(x0, h) and _aligned(x1, h) and _aligned(w, h)):
            raise DomainError(f"spine piece [{x0}, {x1}] x width {w} not aligned with h = {h}")
    for _, x0, x1, z0, z1 in rects:
        if not all(_aligned(v, h) for v in (x0, x1, z0, z1)):
            raise DomainError("wing rectangle not aligned with the grid")
    xmin, xmax = pieces[0][0], pieces[-1][1]
    i0, i1 = int(round(xmin / h)), int(round(xmax / h))
    x = np.arange(i0, i1 + 1) * h
    zmax = max([w for *_, w in pieces] + [r[4] for r in rects])
    nz = int(round(zmax / h))
    z = (np.arange(nz) + 0.5) * h
    nx = x.size
    # half columns: a = 0 .. 2(nx-1)-1 between x[0] and x[-1]
    xc = x[0] + (np.arange(2 * (nx - 1)) + 0.5) * h / 2
    starts = np.array([p[0] for p in pieces])
    widths = np.array([p[2] for p in pieces])
    k = np.clip(np.searchsorted(starts, xc, side="right") - 1, 0, len(pieces) - 1)
    inside = z[:, None] < widths[k][None, :]
    wall = np.zeros((nz + 1, xc.size), dtype=bool)  # wall[j] is the line z = j h
    for _, x0, x1, z0, z1 in rects:
        cols = (xc > x0) & (xc < x1)
        rows = (z > z0) & (z < z1)
        inside |= rows[:, None] & cols[None, :]
        wall[int(round(z0 / h)), cols] = True
    # node (j, i) owns half columns 2i-1 and 2i
    halves = np.zeros((nz, nx, 2), dtype=bool)
    halves[:, 1:, 0] = inside[:, 1::2]
    halves[:, :-1, 1] = inside[:, 0::2]
    vol = halves.sum(axis=2) * h * h / 2
    active = vol > 0
    index = -np.ones((nz, nx), dtype=int)
    index[active] = np.arange(active.sum())
    # horizontal faces between (j, i) and (j, i+1): open when both halves inside
    jj, ii = np.nonzero(halves[:, :-1, 1] & halves[:, 1:, 0])
    a, b = index[jj, ii], index[jj, ii + 1]
    kx = _stiffness(a, b, np.full(a.size, 1.0), active.sum())  # length h / spacing h
    # vertical faces between (j, i) and (j+1, i): half-column contributions
    open_lo = halves[:-1, :, 0] & halves[1:, :, 0]
    open_hi = halves[:-1, :, 1] & halves[1:, :, 1]
    wl = np.zeros((nz + 1, nx), dtype=bool)
    wr = np.zeros((nz + 1, nx), dtype=bool)
    wl[:, 1:] = wall[:, 1::2]
    wr[:, :-1] = wall[:, 0::2]
    open_lo &= ~wl[1:nz]
    open_hi &= ~wr[1:nz]
    coef = 0.5 * (open_lo.astype(float) + open_hi.astype(float))
    jj, ii = np.nonzero(coef > 0)
    a, b = index[jj, ii], index[jj + 1, ii]
    kz = _stiffness(a, b, coef[jj, ii], active.sum())
    dom = RectDomain(h, x, z, active, vol, kx, kz, index, np.zeros(0, int), rects, graph)
    dom.labels = _labels(dom, graph)
    return dom


def _stiffness(a, b, c, n):
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([c, c, -c, -c])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _labels(dom: RectDomain, graph: MetricGraph) -> np.ndarray:
    xs, zs = dom.node_xz()
    shape = graph.shape
    out = np.empty(xs.size, dtype=int)
    cache = {}
    for n, (x, z) in enumerate(zip(xs, zs)):
        key = (round(x / dom.h), round(z / dom.h - 0.5))
        if key not in cache:
            _, eid = identify(shape, (x, z))
            if eid not in graph.edges:
                # outside the truncation window of the graph: fall back to the spine
                _, eid = identify(shape, (x, 0.0))
            cache[key] = eid
        out[n] = cache[key]
    return out


@dataclass
class EpsSolution:
    eps: float
    domain: RectDomain
    times: np.ndarray
    snapshots: np.ndarray  # (n_times, n_active)
    dt: float

    def averages(self, k: int = -1) -> dict:
        """Cross-section averages ``{edge id: (x, ubar)}`` for snapshot ``k``."""
        dom = self.domain
        xs, _ = dom.node_xz()
        u = self.snapshots[k]
        vol = dom.volume[dom.active]
        out = {}
        for eid in np.unique(dom.labels):
            sel = dom.labels == eid
            ux, inv = np.unique(np.round(xs[sel] / dom.h).astype(int), return_inverse=True)
            num = np.bincount(inv, u[sel] * vol[sel])
            den = np.bincount(inv, vol[sel])
            out[int(eid)] = (ux * dom.h, num / den)
        return out

    def spine_gradient(self, first: int = 1) -> float:
        """Largest discrete ``|d ubar / dx|`` along the spine from snapshot ``first`` on.

        The default skips the initial data, which is often a step.
        """
        best = 0.0
        for k in range(first, len(self.times)):
            xs, us = [], []
            for eid, (x, ub) in self.averages(k).items():
                if self.domain.graph.edges[eid].kind == "spine":
                    xs.append(x)
                    us.append(ub)
            x = np.concatenate(xs)
            u = np.concatenate(us)
            o = np.argsort(x, kind="stable")
            x, u = x[o], u[o]
            keep = np.concatenate([[True], np.diff(x) > 1e-12])
            g = np.abs(np.diff(u[keep]) / np.diff(x[keep]))
            best = max(best, float(g.max()) if g.size else 0.0)
        return best

    def snapshots_csv(self) -> str:
        xs, zs = self.domain.node_xz()
        rows = []
        for t, u in zip(self.times, self.snapshots):
            rows.extend((float(t), float(x), float(z), float(v)) for x, z, v in zip(xs, zs, u))
        return csv_text(["t", "x", "z", "u"], rows)

    def averages_csv(self) -> str:
        """Cross-section averages in the graph solver's snapshot schema."""
        rows = []
        for k, t in enumerate(self.times):
            for eid, (x, ub) in sorted(self.averages(k).items()):
                e = self.domain.graph.edges[eid]
                rows.extend((float(t), eid, float(xi - e.origin), float(v)) for xi, v in zip(x, ub))
        return csv_text(["t", "edge", "x", "u"], rows)


def _v_operator(dom: RectDomain, V):
    """Central ``V(x, z) u_x`` on open horizontal faces, one-sided at walls."""
    xs, zs = dom.node_xz()
    vals = np.asarray(V(xs, zs), dtype=float)
    n = dom.n
    right = -np.ones(n, dtype=int)
    left = -np.ones(n, dtype=int)
    a, b = dom.kx.nonzero()
    off = a != b
    a, b = a[off], b[off]
    fwd = xs[b] > xs[a]
    right[a[fwd]] = b[fwd]
    left[a[~fwd]] = b[~fwd]
    rows, cols, data = [], [], []
    for i in range(n):
        r, l = right[i], left[i]
        if r >= 0 and l >= 0:
            rows += [i, i]
            cols += [r, l]
            data += [vals[i] / (2 * dom.h), -vals[i] / (2 * dom.h)]
        elif r >= 0:
            rows += [i, i]
            cols += [r, i]
            data += [vals[i] / dom.h, -vals[i] / dom.h]
        elif l >= 0:
            rows += [i, i]
            cols += [i, l]
            data += [vals[i] / dom.h, -vals[i] / dom.h]
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def stable_dt(dom: RectDomain, eps: float, safety: float = 0.4) -> float:
    diag = -(0.5 * dom.kx.diagonal() + 0.5 / eps ** 2 * dom.kz.diagonal())
    vol = dom.volume[dom.active]
    ok = diag > 0
    return float(safety * np.min(vol[ok] / diag[ok]))


def solve_2d(domain: RectDomain, eps: float, g, f, T: float, snapshot_every: float = 0.25,
             V=None, dt: float | None = None) -> EpsSolution:
    """Integrate the ``eps`` problem on ``domain`` to time ``T``.

    ``g`` depends on ``x`` only.  ``V`` is an optional drift ``V(x, z)``.  When given,
    it should have zero mean over every cross-section.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    dmax = stable_dt(domain, eps)
    n_per, dt, n_snap = snapshot_schedule(T, snapshot_every, dt if dt is not None else dmax)
    if dt > dmax / 0.4 * (1 + 1e-12):
        raise StabilityError(f"dt = {dt:g} exceeds the explicit positivity bound {dmax / 0.4:g}")
    h = domain.h
    vol = domain.volume[domain.active]
    A = (0.5 * domain.kx + (0.5 / eps ** 2) * domain.kz).multiply(1.0 / vol[:, None]).tocsr()
    if V is not None:
        A = (A + _v_operator(domain, V)).tocsr()
    xs, _ = domain.node_xz()
    u = np.clip(np.asarray(g(xs), dtype=float), 0.0, 1.0)
    times, snaps = [0.0], [u.copy()]
    for s in range(n_snap):
        for _ in range(n_per):
            du = A @ u
            if f is not None:
                du += f(u)
            u = u + dt * du
        lo, hi = u.min(), u.max()
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise StabilityError(f"solution left [0, 1] near t = {(s + 1) * n_per * dt:g}; reduce dt")
        times.append((s + 1) * n_per * dt)
        snaps.append(u.copy())
    return EpsSolution(eps, domain, np.array(times), np.array(snaps), dt)


def graph_values(sol: FrontSolution, k: int, edges: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Graph solution at global ``xs`` on ``edges`` by linear interpolation along each edge."""
    grid = sol.grid
    out = np.empty(xs.size)
    u = sol.snapshots[k]
    for eid in np.unique(edges):
        nodes = grid.edge_nodes[int(eid)]
        gx = grid.x[nodes]
        sel = edges == eid
        o = np.argsort(gx)
        out[sel] = np.interp(xs[sel], gx[o], u[nodes][o])
    return out


@dataclass
class Comparison:
    eps: float
    times: np.ndarray
    errors: np.ndarray  # sup error per time

    @property
    def max_error(self) -> float:
        return float(self.errors.max())

    def to_csv(self) -> str:
        return csv_text(["eps", "t", "sup_error"],
                        [(float(self.eps), float(t), float(e)) for t, e in zip(self.times, self.errors)])


def compare_graph(eps_sol: EpsSolution, graph_sol: FrontSolution) -> Comparison:
    """Sup over nodes of ``|u_eps(t, x, z) - u(t, identified point)|`` per snapshot time."""
    dom = eps_sol.domain
    xs, _ = dom.node_xz()
    errs = []
    gt = graph_sol.times
    for k, t in enumerate(eps_sol.times):
        j = int(np.argmin(np.abs(gt - t)))
        if abs(gt[j] - t) <= 1e-9 * max(1.0, t):
            ug = graph_values(graph_sol, j, dom.labels, xs)
        else:
            warnings.warn(f"no graph snapshot at t = {t:g}; interpolating in time", RuntimeWarning)
            j = int(np.clip(np.searchsorted(gt, t), 1, gt.size - 1))
            w = (t - gt[j - 1]) / (gt[j] - gt[j - 1])
            ug = ((1 - w) * graph_values(graph_sol, j - 1, dom.labels, xs)
                  + w * graph_values(graph_sol, j, dom.labels, xs))
        errs.append(float(np.max(np.abs(eps_sol.snapshots[k] - ug))))
    return Comparison(eps_sol.eps, eps_sol.times.copy(), np.array(errs))


def cross_section_spread(sol: EpsSolution, k: int = -1) -> float:
    """Largest ``max_z u - min_z u`` within one connected column component."""
    dom = sol.domain
    xs, _ = dom.node_xz()
    u = sol.snapshots[k]
    col = np.round(xs / dom.h).astype(int)
    key = col * 100003 + dom.labels
    _, inv = np.unique(key, return_inverse=True)
    mx = np.full(inv.max() + 1, -np.inf)
    mn = np.full(inv.max() + 1, np.inf)
    np.maximum.at(mx, inv, u)
    np.minimum.at(mn, inv, u)
    return float(np.max(mx - mn))
