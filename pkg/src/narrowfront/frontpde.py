"""Explicit finite-volume solver for ``u_t = (1/(2l)) (l u_x)_x + f(u)`` on the graph.

Each edge carries a uniform grid.  Vertex nodes are shared by their incident
edges, so the width-weighted flux balance at a junction is the ordinary
finite-volume conservation law there.  Wing tips and the two ends of the spine
window have zero flux.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .graph import MetricGraph
from .io import csv_text


class StabilityError(RuntimeError):
    pass


class DomainExhaustedError(RuntimeError):
    pass


@dataclass
class GraphGrid:
    """Node/face description of a graph discretisation."""
    x: np.ndarray          # global projection of every node
    width: np.ndarray      # width at the node (0 allowed at tips)
    edge: np.ndarray       # an incident edge id for each node
    local: np.ndarray      # local coordinate on that edge
    spine: np.ndarray      # node lies on the spine
    face_i: np.ndarray
    face_j: np.ndarray
    face_w: np.ndarray     # width at the face midpoint
    face_h: np.ndarray     # face length
    mass: np.ndarray       # lumped speed measure / 2 = sum of w h / 2 over adjacent half-faces
    spine_order: np.ndarray  # spine node indices sorted by x
    edge_nodes: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.size

    def stiffness(self) -> sparse.csr_matrix:
        """``K`` with ``(K u)_i = sum_faces w (u_j - u_i) / h``."""
        c = self.face_w / self.face_h
        rows = np.concatenate([self.face_i, self.face_j, self.face_i, self.face_j])
        cols = np.concatenate([self.face_j, self.face_i, self.face_i, self.face_j])
        vals = np.concatenate([c, c, -c, -c])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def stable_dt(self, safety: float = 0.4) -> float:
        c = self.face_w / self.face_h
        diag = np.bincount(self.face_i, c, self.n) + np.bincount(self.face_j, c, self.n)
        ok = diag > 0
        return float(safety * np.min(self.mass[ok] / (0.5 * diag[ok])))


def build_grid(graph: MetricGraph, dx: float, min_interior: int = 8) -> GraphGrid:
    """Uniform grid of spacing ``<= dx`` on every edge (at least ``min_interior`` inner nodes)."""
    xs, ws, es, ls, sp = [], [], [], [], []
    vertex_node = {}

    def new_node(xg, w, e, loc, on_spine):
        xs.append(xg)
        ws.append(w)
        es.append(e)
        ls.append(loc)
        sp.append(on_spine)
        return len(xs) - 1

    fi, fj, fw, fh = [], [], [], []
    edge_nodes = {}
    for eid in sorted(graph.edges, key=lambda k: (graph.edges[k].kind != "spine", k)):
        ed = graph.edges[eid]
        L = ed.length
        nseg = max(int(math.ceil(L / dx - 1e-9)), min_interior + 1)
        loc = np.linspace(ed.a, ed.b, nseg + 1)
        ids = []
        for j, xl in enumerate(loc):
            end = 0 if j == 0 else (1 if j == nseg else None)
            vid = ed.vertices[end] if end is not None else None
            key = None
            if vid is not None and graph.vertices[vid].kind == "interior":
                key = ("v", vid)
            elif end == 0 and ed.kind == "spine" and abs(ed.origin) < 1e-12:
                key = ("origin",)
            elif end == 1 and ed.kind == "spine" and abs(ed.origin + ed.b) < 1e-12:
                key = ("origin",)
            if key is not None and key in vertex_node:
                ids.append(vertex_node[key])
                continue
            w = float(ed.width(xl))
            nid = new_node(ed.origin + xl, w, eid, xl, ed.kind == "spine" or key is not None and key[0] == "v")
            if key is not None:
                vertex_node[key] = nid
            ids.append(nid)
        mids = 0.5 * (loc[1:] + loc[:-1])
        wm = ed.width(mids)
        h = np.diff(loc)
        fi.extend(ids[:-1])
        fj.extend(ids[1:])
        fw.extend(wm.tolist())
        fh.extend(h.tolist())
        edge_nodes[eid] = np.array(ids)
    n = len(xs)
    fi, fj = np.array(fi), np.array(fj)
    fw, fh = np.array(fw), np.array(fh)
    mass = np.bincount(fi, fw * fh / 2, n) + np.bincount(fj, fw * fh / 2, n)
    x = np.array(xs)
    spine = np.array(sp)
    order = np.flatnonzero(spine)
    order = order[np.argsort(x[order], kind="stable")]
    return GraphGrid(x, np.array(ws), np.array(es), np.array(ls), spine, fi, fj, fw, fh,
                     mass, order, edge_nodes)


@dataclass
class FrontTrace:
    times: np.ndarray
    x_right: np.ndarray
    x_left: np.ndarray
    speed_right: float = math.nan
    speed_left: float = math.nan
    r2_right: float = math.nan
    r2_left: float = math.nan
    fit_window: tuple = (math.nan, math.nan)

    def to_csv(self) -> str:
        return csv_text(["t", "x_right", "x_left"],
                        [(float(a), float(b), float(c)) for a, b, c in zip(self.times, self.x_right, self.x_left)])


@dataclass
class FrontSolution:
    grid: GraphGrid
    times: np.ndarray
    snapshots: np.ndarray  # (n_times, n_nodes)
    trace: FrontTrace | None
    dt: float

    def spine_profile(self, k: int = -1):
        o = self.grid.spine_order
        return self.grid.x[o], self.snapshots[k][o]

    def value_at(self, x: float, k: int = -1) -> float:
        xs, us = self.spine_profile(k)
        return float(np.interp(x, xs, us))

    def snapshots_csv(self) -> str:
        g = self.grid
        rows = []
        for t, u in zip(self.times, self.snapshots):
            for i in range(g.n):
                rows.append((float(t), int(g.edge[i]), float(g.local[i]), float(u[i])))
        return csv_text(["t", "edge", "x", "u"], rows)


def _crossings(xs, us, level):
    above = us >= level
    if not above.any():
        return math.nan, math.nan
    idx = np.flatnonzero(above)
    r, l = idx[-1], idx[0]
    if r + 1 < xs.size:
        u0, u1 = us[r], us[r + 1]
        xr = xs[r] + (u0 - level) / (u0 - u1) * (xs[r + 1] - xs[r]) if u0 != u1 else xs[r]
    else:
        xr = xs[r]
    if l > 0:
        u0, u1 = us[l], us[l - 1]
        xl = xs[l] - (u0 - level) / (u0 - u1) * (xs[l] - xs[l - 1]) if u0 != u1 else xs[l]
    else:
        xl = xs[l]
    return xr, xl


def _fit(t, x):
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    pred = A @ coef
    ss = np.sum((x - x.mean()) ** 2)
    r2 = 1 - np.sum((x - pred) ** 2) / ss if ss > 0 else 1.0
    return float(coef[0]), float(r2)


def track(times, spine_x, spine_u, level: float = 0.5, fit_window=None,
          boundary_margin: float = 5.0) -> FrontTrace:
    """Extreme ``level`` crossings on the spine and least-squares front speeds.

    ``spine_u`` holds one row per snapshot.  ``fit_window`` defaults to the second
    half of the run.
    """
    times = np.asarray(times, dtype=float)
    spine_x = np.asarray(spine_x, dtype=float)
    xr = np.empty(times.size)
    xl = np.empty(times.size)
    for k, u in enumerate(spine_u):
        xr[k], xl[k] = _crossings(spine_x, np.asarray(u), level)
    if fit_window is None:
        fit_window = (0.5 * times[-1], times[-1])
    sel = (times >= fit_window[0] - 1e-12) & (times <= fit_window[1] + 1e-12)
    if sel.sum() < 10:
        raise ValueError("need at least 10 snapshots in the fit window")
    if np.any(np.isnan(xr[sel])):
        raise DomainExhaustedError("no level crossing in some snapshots; the front left the domain")
    lo, hi = spine_x.min(), spine_x.max()
    if np.any(xr[sel] > hi - boundary_margin) or np.any(xl[sel] < lo + boundary_margin):
        raise DomainExhaustedError("front within the boundary margin; use a longer window")
    sr, r2r = _fit(times[sel], xr[sel])
    sl, r2l = _fit(times[sel], xl[sel])
    return FrontTrace(times, xr, xl, sr, sl, r2r, r2l, tuple(fit_window))


def snapshot_schedule(T: float, every: float, dt_target: float):
    """``(steps per snapshot, dt, number of snapshots)`` with ``dt <= dt_target``."""
    n_snap = int(round(T / every))
    if n_snap < 1 or abs(n_snap * every - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a whole multiple of snapshot_every")
    n_per = int(math.ceil(every / dt_target - 1e-9))
    return n_per, every / n_per, n_snap


def kpp(u):
    return u * (1.0 - u)


def solve(graph: MetricGraph, g, f, T: float, dx: float = 0.05, dt: float | None = None,
          snapshot_every: float = 0.5, level: float = 0.5, fit_window=None,
          do_track: bool = True, grid: GraphGrid | None = None) -> FrontSolution:
    """Integrate to time ``T``; ``g`` is a function of the global x projection."""
    grid = grid or build_grid(graph, dx)
    dt_max = grid.stable_dt()
    n_per, dt, n_snap = snapshot_schedule(T, snapshot_every, dt if dt is not None else dt_max)
    bound = dt_max / 0.4
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt = {dt:g} exceeds the explicit positivity bound {bound:g}")
    K = grid.stiffness()
    invm = np.where(grid.mass > 0, 1.0 / np.where(grid.mass > 0, grid.mass, 1.0), 0.0)
    A = (0.5 * K).multiply(invm[:, None]).tocsr()
    u = np.clip(np.asarray(g(grid.x), dtype=float), 0.0, 1.0)
    times, snaps = [0.0], [u.copy()]
    for s in range(n_snap):
        for _ in range(n_per):
            du = A @ u
            if f is not None:
                du += f(u)
            u = u + dt * du
        lo, hi = u.min(), u.max()
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise StabilityError(f"solution left [0, 1] near t = {(s + 1) * n_per * dt:g}: "
                                 f"range [{lo}, {hi}]; reduce dt")
        times.append((s + 1) * n_per * dt)
        snaps.append(u.copy())
    times = np.array(times)
    snaps = np.array(snaps)
    trace = None
    if do_track:
        o = grid.spine_order
        trace = track(times, grid.x[o], snaps[:, o], level, fit_window)
    return FrontSolution(grid, times, snaps, trace, dt)


def heat_mass(sol: FrontSolution, k: int) -> float:
    """Conserved quantity ``sum u M`` (half the speed-measure integral)."""
    return float(np.sum(sol.snapshots[k] * sol.grid.mass))
