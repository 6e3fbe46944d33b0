"""Metric graph of a channel: spine and wing edges, junction and tip vertices.

Edge ids follow the usual odd/even labelling per side: spine piece of cell ``k``
is ``2k-1`` and its wing ``2k`` on the right half-line; the left half-line uses the
negatives.  Local coordinates run with increasing global ``x`` on every edge.
Wing edges keep the sign of the projection ``r``: their interval is ``[0, r]`` when
``r > 0`` and ``[r, 0]`` when ``r < 0``, with the attachment point at local 0.
Scale and speed functions are anchored at the left end of each interval.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelShape, Cell, require_valid
from .io import csv_text
from .profiles import WidthProfile


class DomainError(ValueError):
    """A point or argument lies outside the admissible domain."""


@dataclass(frozen=True)
class Edge:
    id: int
    kind: str  # "spine" | "wing"
    a: float
    b: float
    profile: WidthProfile
    flipped: bool  # reserved: profile read from its far end
    origin: float  # global x of local coordinate 0
    vertices: tuple[int | None, int | None]  # (left end, right end); None = free end or origin
    cell: int  # signed cell index, +k right, -k left

    @property
    def length(self) -> float:
        return self.b - self.a

    def _arg(self, x):
        # profile argument (distance from profile start) for a local coordinate
        x = np.asarray(x, dtype=float)
        if self.kind == "spine":
            return x
        return np.abs(x)

    def _prof_sign(self) -> float:
        # d(profile argument)/dx
        if self.kind == "spine":
            return 1.0
        return 1.0 if self.b > 0 else -1.0

    def width(self, x):
        return self.profile(self._arg(x))

    def dwidth(self, x):
        return self._prof_sign() * self.profile.derivative(self._arg(x))

    def p(self, x):
        """Scale function, anchored at the left end ``a``."""
        s = self._arg(x)
        if self._prof_sign() > 0:
            return self.profile.p(s)
        return self.profile.p_length - self.profile.p(s)

    def m(self, x):
        s = self._arg(x)
        if self._prof_sign() > 0:
            return self.profile.m(s)
        return self.profile.m_length - self.profile.m(s)

    def contains(self, x) -> bool:
        return self.a - 1e-12 <= x <= self.b + 1e-12

    def to_global(self, x):
        return self.origin + np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: str  # "interior" | "exterior"
    x_position: float
    edges: tuple[int, ...]
    signs: tuple[int, ...]  # +1 if the edge lies at x >= x_position
    weights: tuple[float, ...]


@dataclass
class MetricGraph:
    edges: dict[int, Edge]
    vertices: dict[int, Vertex]
    spine_order: list[int]
    shape: ChannelShape | None = field(default=None, repr=False)

    @property
    def interior(self) -> list[Vertex]:
        return [v for v in self.vertices.values() if v.kind == "interior"]

    @property
    def exterior(self) -> list[Vertex]:
        return [v for v in self.vertices.values() if v.kind == "exterior"]

    def dumps(self) -> str:
        doc = {
            "edges": [{"id": e.id, "kind": e.kind, "interval": [e.a, e.b],
                       "global_origin": e.origin, "vertices": list(e.vertices)}
                      for e in self.edges.values()],
            "vertices": [{"id": v.id, "kind": v.kind, "x": v.x_position,
                          "edges": list(v.edges), "signs": list(v.signs),
                          "weights": list(v.weights)} for v in self.vertices.values()],
            "spine_order": self.spine_order,
        }
        return json.dumps(doc, indent=1)

    def measures_csv(self, n: int = 21) -> str:
        rows = []
        for e in self.edges.values():
            hi = e.b if e.kind == "spine" or e.b > 0 else e.b
            xs = np.linspace(e.a, hi, n)
            for x in xs:
                rows.append((e.id, float(x), float(e.width(x)), float(e.p(x)), float(e.m(x))))
        return csv_text(["edge", "x", "l", "p", "m"], rows)


def _global_cells(shape: ChannelShape, side: str, n: int) -> list[Cell]:
    cells = shape.side(side)[:n]
    return list(cells) if side == "+" else [c.reflected() for c in cells]


def build_graph(shape: ChannelShape, sides: str = "both", n_cells: int | None = None,
                check: bool = True) -> MetricGraph:
    """Graph of the first ``n_cells`` cells on the requested side(s).

    The spine piece of cell ``n+1`` is appended when available so that every
    junction has its three edges.
    """
    if check:
        require_valid(shape)
    n = shape.n_cells if n_cells is None else n_cells
    edges: dict[int, Edge] = {}
    vertices: dict[int, Vertex] = {}
    spine_order: list[int] = []
    todo = ["+", "-"] if sides == "both" else [sides]
    vid = 0
    for side in todo:
        sgn = 1 if side == "+" else -1
        all_cells = shape.side(side)
        n_here = min(n, len(all_cells))
        n_spine = min(n_here + 1, len(all_cells))
        X = np.concatenate([[0.0], np.cumsum([c.spine_length for c in all_cells])])
        gcells = _global_cells(shape, side, n_spine)
        for k in range(1, n_spine + 1):
            c = gcells[k - 1]
            eid = sgn * (2 * k - 1)
            origin = X[k - 1] if side == "+" else -X[k]
            edges[eid] = Edge(eid, "spine", 0.0, c.spine_length, c.spine_profile, False,
                              float(origin), (None, None), sgn * k)
        for k in range(1, n_here + 1):
            c = gcells[k - 1]
            xj = float(sgn * X[k])
            wid = sgn * 2 * k
            R = abs(c.wing_r)
            a, b = (0.0, R) if c.wing_r > 0 else (-R, 0.0)
            interior_id = vid
            tip_id = vid + 1
            vid += 2
            ends = (interior_id, tip_id) if c.wing_r > 0 else (tip_id, interior_id)
            edges[wid] = Edge(wid, "wing", a, b, c.wing_profile, False, xj, ends, sgn * k)
            inner = sgn * (2 * k - 1)
            outer = sgn * (2 * k + 1)
            # global orientation: the edge left of the junction carries alpha
            left_e, right_e = (inner, outer) if side == "+" else (outer, inner)
            ids = [e for e in (left_e, wid, right_e) if e in edges]
            sign_map = {left_e: -1, wid: c.wing_sign, right_e: 1}
            w_map = {left_e: c.alpha, wid: c.gamma, right_e: c.beta}
            vertices[interior_id] = Vertex(interior_id, "interior", xj, tuple(ids),
                                           tuple(sign_map[e] for e in ids),
                                           tuple(w_map[e] for e in ids))
            vertices[tip_id] = Vertex(tip_id, "exterior", xj + c.wing_r, (wid,),
                                      (-c.wing_sign,), (float(c.wing_profile(R)),))
        for v in vertices.values():
            if v.kind != "interior":
                continue
            for e, sg in zip(v.edges, v.signs):
                if edges[e].kind == "spine":
                    left, right = edges[e].vertices
                    ends = (v.id, right) if sg > 0 else (left, v.id)
                    edges[e] = replace(edges[e], vertices=ends)
        ids = [sgn * (2 * k - 1) for k in range(1, n_spine + 1)]
        spine_order = (list(reversed(ids)) + spine_order) if side == "-" else spine_order + ids
    return MetricGraph(edges, vertices, spine_order, shape)


def measures(edge: Edge, x: float) -> tuple[float, float, float, float]:
    """``(p, m, dp/dx, dm/dx)`` at local coordinate ``x`` by adaptive quadrature."""
    if not edge.contains(x):
        raise DomainError(f"x = {x} outside edge {edge.id} interval [{edge.a}, {edge.b}]")
    prof = edge.profile
    s = float(edge._arg(x))
    if edge._prof_sign() > 0:
        p = prof.quad_p(s)
        m = prof.quad_m(s)
    else:
        p = prof.p_length - prof.quad_p(s)
        m = prof.m_length - prof.quad_m(s)
    lx = float(edge.width(x))
    dp = 1.0 / lx if lx > 0 else np.inf
    return float(p), float(m), float(dp), 2.0 * lx


# ---------------------------------------------------------------------------
# identification map, rectangular geometry

def _wing_boxes(shape: ChannelShape):
    """Axis-aligned wing rectangles ``(edge_id, x0, x1, z0, z1)`` in global coordinates."""
    out = []
    for side, sgn in (("+", 1), ("-", -1)):
        cells = shape.side(side)
        X = np.cumsum([c.spine_length for c in cells])
        for k, c in enumerate(_global_cells(shape, side, len(cells)), start=1):
            xj = sgn * X[k - 1]
            R = abs(c.wing_r)
            lo, hi = sorted((c.alpha, c.beta))
            x0, x1 = (xj, xj + R) if c.wing_r > 0 else (xj - R, xj)
            out.append((sgn * 2 * k, float(x0), float(x1), float(lo), float(hi)))
    return out


def spine_edge_at(shape: ChannelShape, x: float) -> int:
    """Spine edge id containing global ``x``; junction points go to the inner piece."""
    sgn = 1 if x >= 0 else -1
    cells = shape.side("+" if sgn > 0 else "-")
    X = np.cumsum([c.spine_length for c in cells])
    k = int(np.searchsorted(X, abs(x) - 1e-12, side="left")) + 1
    if k > len(cells):
        raise DomainError(f"x = {x} beyond the last cell")
    return sgn * (2 * k - 1)


def identify(shape: ChannelShape, point) -> tuple[float, int]:
    """Map a 2D point of a rectangular-mode channel to ``(x, edge id)``.

    The spine occupies ``0 <= z <= width(x)``; wings sit on top of the narrower
    side of their junction.  Points on a shared face map to the spine.
    """
    if not shape.generator_params.rectangular_mode:
        raise DomainError("identify needs a rectangular_mode shape")
    x, z = float(point[0]), float(point[1])
    eps = 1e-12
    try:
        sid = spine_edge_at(shape, x)
    except DomainError:
        raise DomainError(f"point {point} outside the channel") from None
    w = float(shape.spine_width(np.array([x]))[0])
    if -eps <= z <= w + eps:
        return x, sid
    for eid, x0, x1, z0, z1 in _wing_boxes(shape):
        if x0 - eps <= x <= x1 + eps and z0 - eps <= z <= z1 + eps:
            return x, eid
    raise DomainError(f"point {point} outside the channel")
