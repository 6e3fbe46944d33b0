"""Monte Carlo diffusion on the channel graph.

Inside an edge the walker follows ``dX = l'(X)/(2 l(X)) dt + dW`` by Euler-Maruyama.
Tip-vanishing wings have ``l`` proportional to ``(distance to tip)^beta``, which
makes the distance to the tip an exact Bessel process of dimension ``1 + beta``;
those edges are stepped with the exact noncentral chi-square transition, so the
tip needs no special handling.

Vertices use a Walsh-spider construction.  When a step reaches a vertex (its
endpoint lies past the vertex, or the Brownian bridge between the two endpoints
touches it) the walker is reflected to the same radial distance on a leg drawn with
probability proportional to the leg widths.  This is the exact law of a skew
(Walsh) Brownian motion on a star with constant-width legs; within distance ``h`` of
a vertex the width drift is frozen so that the construction applies verbatim.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .graph import MetricGraph
from .io import csv_text


class CensoringError(RuntimeError):
    """Too many paths reached the horizon before the target."""


class ContractionWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class WalkerConfig:
    dt: float = 1e-3
    h: float | None = None  # drift-freeze radius around vertices; defaults to sqrt(dt)
    seed: int = 0
    horizon: float | None = None
    max_censored: float = 0.01

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be > 0")

    @property
    def radius(self) -> float:
        return math.sqrt(self.dt) if self.h is None else self.h


@dataclass
class GraphState:
    """Vectorised walker state: edge index (into ``Walker.edge_ids``), local x, time."""
    edge: np.ndarray
    x: np.ndarray
    t: np.ndarray
    spine_time: np.ndarray

    @classmethod
    def at(cls, walker: "Walker", edge_id: int, x: float, n: int) -> "GraphState":
        e = walker.index[edge_id]
        return cls(np.full(n, e, dtype=np.int64), np.full(n, float(x)), np.zeros(n), np.zeros(n))

    def copy(self) -> "GraphState":
        return GraphState(self.edge.copy(), self.x.copy(), self.t.copy(), self.spine_time.copy())


GAUSS, BESSEL = 0, 1


class Walker:
    """Array form of a metric graph for vectorised stepping."""

    def __init__(self, graph: MetricGraph, config: WalkerConfig):
        self.graph = graph
        self.config = config
        ids = sorted(graph.edges)
        self.edge_ids = np.array(ids)
        self.index = {e: i for i, e in enumerate(ids)}
        n = len(ids)
        E = [graph.edges[e] for e in ids]
        self.a = np.array([e.a for e in E])
        self.b = np.array([e.b for e in E])
        self.origin = np.array([e.origin for e in E])
        self.spine = np.array([e.kind == "spine" for e in E])
        self.mode = np.array([BESSEL if e.profile.kind == "tip" else GAUSS for e in E])
        # Bessel data: tip at local a (r < 0) or b (r > 0); delta = 1 + beta
        self.tip_at_b = np.array([e.kind == "wing" and e.b > 0 for e in E])
        self.delta = np.array([1 + e.profile.coefficients[1] if e.profile.kind == "tip" else 0.0 for e in E])
        # drift tables: l'/(2l) tabulated on a fine grid per Gaussian edge
        self.n_tab = 257
        tab = np.zeros((n, self.n_tab))
        for i, e in enumerate(E):
            if self.mode[i] == GAUSS:
                xs = np.linspace(e.a, e.b, self.n_tab)
                tab[i] = e.dwidth(xs) / (2 * e.width(xs))
        self.drift_tab = tab
        # nodes: every edge end maps to a node; nodes carry up to three legs
        node_of_end = -np.ones((n, 2), dtype=np.int64)
        legs, weights = [], []
        for v in graph.vertices.values():
            if v.kind != "interior":
                continue
            node = len(legs)
            lg = []
            for e, sg in zip(v.edges, v.signs):
                side = 0 if sg > 0 else 1  # vertex sits at the a-end when the edge lies to the right
                node_of_end[self.index[e], side] = node
                lg.append((self.index[e], side))
            legs.append(lg)
            weights.append(list(v.weights))
        # free spine ends: the origin joins edges 1 and -1, other ends reflect
        for i, e in enumerate(E):
            for side in (0, 1):
                if node_of_end[i, side] >= 0 or e.kind != "spine":
                    continue
                if e.id == 1 and side == 0 and -1 in self.index:
                    node = len(legs)
                    j = self.index[-1]
                    legs.append([(i, 0), (j, 1)])
                    w = float(e.width(0.0))
                    weights.append([w, float(graph.edges[-1].width(graph.edges[-1].b))])
                    node_of_end[i, 0] = node
                    node_of_end[j, 1] = node
                elif node_of_end[i, side] < 0:
                    node = len(legs)
                    legs.append([(i, side)])
                    weights.append([1.0])
                    node_of_end[i, side] = node
        # constant-width wing tips reflect
        for i, e in enumerate(E):
            if e.kind == "wing" and self.mode[i] == GAUSS:
                side = 1 if e.b > 0 else 0
                if node_of_end[i, side] < 0:
                    node = len(legs)
                    legs.append([(i, side)])
                    weights.append([1.0])
                    node_of_end[i, side] = node
        m = len(legs)
        self.node_of_end = node_of_end
        self.leg_edge = np.zeros((m, 3), dtype=np.int64)
        self.leg_side = np.zeros((m, 3), dtype=np.int64)
        self.leg_cum = np.ones((m, 3))
        for k, (lg, w) in enumerate(zip(legs, weights)):
            w = np.asarray(w, dtype=float)
            cum = np.cumsum(w / w.sum())
            cum[-1] = 1.0
            for j in range(3):
                jj = min(j, len(lg) - 1)
                self.leg_edge[k, j] = lg[jj][0]
                self.leg_side[k, j] = lg[jj][1]
                self.leg_cum[k, j] = cum[jj] if j < len(lg) else 1.0

    # -- helpers -----------------------------------------------------------
    def global_x(self, state: GraphState) -> np.ndarray:
        return self.origin[state.edge] + state.x

    def locate(self, x_global: float) -> tuple[int, float]:
        """Spine edge id and local coordinate of a global spine position."""
        for e in self.graph.spine_order:
            ed = self.graph.edges[e]
            if ed.origin - 1e-12 <= x_global <= ed.origin + ed.b + 1e-12:
                return e, x_global - ed.origin
        raise ValueError(f"x = {x_global} is not on the spine of this graph")

    def _drift(self, e, x):
        frac = (x - self.a[e]) / (self.b[e] - self.a[e]) * (self.n_tab - 1)
        i = np.clip(frac.astype(np.int64), 0, self.n_tab - 2)
        w = np.clip(frac - i, 0.0, 1.0)
        return (1 - w) * self.drift_tab[e, i] + w * self.drift_tab[e, i + 1]

    def _choose_leg(self, node, r, rng):
        u = rng.random(node.shape)
        j = np.sum(u[:, None] > self.leg_cum[node], axis=1)
        j = np.minimum(j, 2)
        e = self.leg_edge[node, j]
        side = self.leg_side[node, j]
        L = self.b[e] - self.a[e]
        r = np.minimum(r, 0.999 * L)
        x = np.where(side == 0, self.a[e] + r, self.b[e] - r)
        return e, x

    # -- one step ------------------------------------------------------------
    def step(self, state: GraphState, rng: np.random.Generator, active=None, tilt: float = 0.0,
             log_lr=None):
        """Advance the ``active`` paths by one time step in place.

        ``tilt`` adds a constant drift ``-tilt`` on spine edges (importance
        sampling); the Girsanov log-likelihood ratio is accumulated into ``log_lr``.
        Returns the virtual (pre-vertex) global spine positions of spine paths, used
        for target detection, and the start-of-step global positions.
        """
        dt = self.config.dt
        sq = math.sqrt(dt)
        idx = np.arange(state.edge.size) if active is None else np.flatnonzero(active)
        e = state.edge[idx]
        x = state.x[idx]
        g0 = self.origin[e] + x
        on_spine = self.spine[e]
        gauss = self.mode[e] == GAUSS
        xn = x.copy()
        hit_a = np.zeros(idx.size, bool)
        hit_b = np.zeros(idx.size, bool)
        r_a = np.zeros(idx.size)
        r_b = np.zeros(idx.size)

        gi = np.flatnonzero(gauss)
        if gi.size:
            eg, xg = e[gi], x[gi]
            z = rng.standard_normal(gi.size)
            a, b = self.a[eg], self.b[eg]
            near = np.minimum(xg - a, b - xg) < self.config.radius
            drift = np.where(near, 0.0, self._drift(eg, xg))
            if tilt:
                sp = on_spine[gi]
                drift = drift - tilt * sp
                if log_lr is not None:
                    log_lr[idx[gi]] += sp * (tilt * sq * z - 0.5 * tilt * tilt * dt)
            xv = xg + drift * dt + sq * z
            da, dav = xg - a, xv - a
            db, dbv = b - xg, b - xv
            ua = rng.random(gi.size)
            ub = rng.random(gi.size)
            ca = (dav <= 0) | (ua < np.exp(-2 * np.maximum(da, 0) * np.maximum(dav, 0) / dt))
            cb = (dbv <= 0) | (ub < np.exp(-2 * np.maximum(db, 0) * np.maximum(dbv, 0) / dt))
            cb &= ~ca
            hit_a[gi] = ca
            hit_b[gi] = cb
            r_a[gi] = np.abs(dav)
            r_b[gi] = np.abs(dbv)
            xn[gi] = np.clip(xv, a, b)

        bi = np.flatnonzero(~gauss)
        if bi.size:
            eb, xb = e[bi], x[bi]
            a, b = self.a[eb], self.b[eb]
            tip_b = self.tip_at_b[eb]
            D = b - a
            rho = np.where(tip_b, b - xb, xb - a)
            rho = np.clip(rho, 0.0, D)
            nonc = rho * rho / dt
            rho_new = np.sqrt(dt * rng.noncentral_chisquare(self.delta[eb], np.maximum(nonc, 1e-300)))
            dist_base, dist_base_new = D - rho, D - rho_new
            u = rng.random(bi.size)
            cross = (dist_base_new <= 0) | (
                u < np.exp(-2 * np.maximum(dist_base, 0) * np.maximum(dist_base_new, 0) / dt))
            rr = np.abs(dist_base_new)
            # base is at a when the tip is at b
            hit_a[bi] = cross & tip_b
            hit_b[bi] = cross & ~tip_b
            r_a[bi] = rr
            r_b[bi] = rr
            rho_c = np.clip(rho_new, 0.0, D)
            xn[bi] = np.where(tip_b, b - rho_c, a + rho_c)

        gv = self.origin[e] + xn
        if gi.size:
            gv[gi] = self.origin[e[gi]] + xv

        for hit, side, r in ((hit_a, 0, r_a), (hit_b, 1, r_b)):
            k = np.flatnonzero(hit)
            if k.size:
                node = self.node_of_end[e[k], side]
                ne, nx = self._choose_leg(node, r[k], rng)
                e[k] = ne
                xn[k] = nx
        state.edge[idx] = e
        state.x[idx] = xn
        state.t[idx] += dt
        state.spine_time[idx] += dt * on_spine
        return idx, g0, gv, on_spine


def step(state: GraphState, graph_or_walker, config: WalkerConfig | None, rng) -> GraphState:
    """Advance every path of ``state`` by one step (returns the same object)."""
    w = graph_or_walker if isinstance(graph_or_walker, Walker) else Walker(graph_or_walker, config)
    w.step(state, rng)
    return state


# ---------------------------------------------------------------------------
# hitting times

@dataclass
class HitSample:
    T: np.ndarray
    spine_time: np.ndarray
    finite: np.ndarray
    reason: np.ndarray  # "lower" | "upper" | "horizon"
    log_lr: np.ndarray

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(~self.finite))

    def to_csv(self) -> str:
        return csv_text(["T", "spine_time", "censored", "reason"],
                        [(float(t), float(s), int(not f), str(r))
                         for t, s, f, r in zip(self.T, self.spine_time, self.finite, self.reason)])


def sample_hit(walker: Walker, start: float, lower: float | None, upper: float | None,
               n_paths: int, rng: np.random.Generator, tilt: float = 0.0,
               horizon: float | None = None, check_censoring: bool = True) -> HitSample:
    """First time the spine coordinate leaves ``(lower, upper)``.

    Targets are spine positions; the stop test uses the bridge between the two
    endpoints of each step, so a target is detected even when the step jumps it.
    """
    cfg = walker.config
    dt = cfg.dt
    if horizon is None:
        horizon = cfg.horizon
    if horizon is None:
        dist = min(abs(start - v) for v in (lower, upper) if v is not None)
        horizon = 50.0 * dist * dist
    e0, x0 = walker.locate(start)
    st = GraphState.at(walker, e0, x0, n_paths)
    alive = np.ones(n_paths, bool)
    log_lr = np.zeros(n_paths)
    T = np.full(n_paths, np.nan)
    S = np.full(n_paths, np.nan)
    reason = np.full(n_paths, "horizon", dtype=object)
    n_steps = int(math.ceil(horizon / dt))
    for _ in range(n_steps):
        if not alive.any():
            break
        idx, g0, gv, on_spine = walker.step(st, rng, alive, tilt, log_lr)
        done = np.zeros(idx.size, bool)
        for tgt, name, sgn in ((lower, "lower", 1.0), (upper, "upper", -1.0)):
            if tgt is None:
                continue
            d0 = sgn * (g0 - tgt)
            d1 = sgn * (gv - tgt)
            u = rng.random(idx.size)
            hit = on_spine & ~done & ((d1 <= 0) | (u < np.exp(-2 * np.maximum(d0, 0) * np.maximum(d1, 0) / dt)))
            if hit.any():
                k = idx[hit]
                reason[k] = name
                done |= hit
        if done.any():
            k = idx[done]
            T[k] = st.t[k]
            S[k] = st.spine_time[k]
            alive[k] = False
    if alive.any():
        k = np.flatnonzero(alive)
        T[k] = st.t[k]
        S[k] = st.spine_time[k]
    finite = ~alive
    out = HitSample(T, S, finite, reason, log_lr)
    if check_censoring and out.censored_fraction > cfg.max_censored:
        raise CensoringError(
            f"{out.censored_fraction:.3%} of paths censored at horizon {horizon}; raise the horizon")
    return out


@dataclass(frozen=True)
class QEstimate:
    estimate: float
    se: float
    bracket: tuple[float, float]
    lam: float
    n_paths: int
    censored: float
    log_se: float

    def to_csv(self) -> str:
        return csv_text(["lambda", "q_hat", "se", "bracket_lo", "bracket_hi"],
                        [(self.lam, self.estimate, self.se, self.bracket[0], self.bracket[1])])


def estimate_q(walker: Walker, r: float, s: float, lam: float, n_paths: int,
               rng: np.random.Generator, tilt: float | None = None,
               horizon: float | None = None) -> QEstimate:
    """Monte Carlo ``E exp(lam T) 1{T < inf}`` for the first passage from ``s`` down to ``r``.

    By default the spine drift is tilted by ``sqrt(-2 lam)`` toward the target and
    each path is reweighted by its likelihood ratio.  The estimator stays unbiased
    and its variance drops by orders of magnitude for long distances.  Censored
    paths contribute the interval ``[0, exp(lam H) LR_H]``.
    """
    if lam > 0:
        raise ValueError("lam must be <= 0")
    if tilt is None:
        tilt = math.sqrt(-2.0 * lam)
    if horizon is None:
        speed = max(tilt, 1e-9)
        horizon = walker.config.horizon or max(50.0 * (s - r) ** 2 if tilt == 0 else 0.0,
                                               20.0 * (s - r) / speed if tilt else 0.0)
    hs = sample_hit(walker, s, r, None, n_paths, rng, tilt=tilt, horizon=horizon,
                    check_censoring=False)
    w = np.where(hs.finite, np.exp(lam * hs.T + hs.log_lr), 0.0)
    est = float(np.mean(w))
    se = float(np.std(w, ddof=1) / math.sqrt(n_paths))
    cens = np.where(~hs.finite, np.exp(lam * hs.T + hs.log_lr), 0.0)
    hi = est + float(np.mean(cens))
    log_se = se / est if est > 0 else math.inf
    return QEstimate(est, se, (est, hi), float(lam), n_paths, hs.censored_fraction, log_se)


# ---------------------------------------------------------------------------
# Feynman-Kac for u_t = A u + f(u)

@dataclass
class FKResult:
    x: np.ndarray
    u: np.ndarray
    se: np.ndarray
    replicates: np.ndarray
    picard_deltas: list = field(default_factory=list)

    def to_csv(self) -> str:
        return csv_text(["x", "u", "se"], [(float(a), float(b), float(c)) for a, b, c in zip(self.x, self.u, self.se)])


def _graph_nodes(walker: Walker, dx: float):
    """Uniform nodes on every edge, returned as arrays (edge index, local x)."""
    es, xs, offs = [], [], [0]
    for i in range(len(walker.edge_ids)):
        a, b = walker.a[i], walker.b[i]
        n = max(2, int(math.ceil((b - a) / dx)) + 1)
        pts = np.linspace(a, b, n)
        es.append(np.full(n, i))
        xs.append(pts)
        offs.append(offs[-1] + n)
    return np.concatenate(es), np.concatenate(xs), np.array(offs)


def _lerp_weights(offs, walker, e, x):
    """Base node index and weight for piecewise-linear lookup at (edge, x)."""
    a, b = walker.a[e], walker.b[e]
    n = offs[e + 1] - offs[e]
    frac = (x - a) / (b - a) * (n - 1)
    i = np.clip(np.floor(frac).astype(np.int64), 0, n - 2)
    return offs[e] + i, np.clip(frac - i, 0.0, 1.0)


def _interp(values, offs, walker, e, x):
    """Piecewise-linear lookup of node values at (edge, x)."""
    base, w = _lerp_weights(offs, walker, e, x)
    return (1 - w) * values[..., base] + w * values[..., base + 1]


def feynman_kac(walker: Walker, g, f, t: float, eval_x, rng: np.random.Generator,
                n_paths: int = 64, picard_iters: int = 6, window: float = 0.5,
                n_sub: int = 10, node_dx: float = 0.05, replicates: int = 16,
                picard_tol: float = 1e-7) -> FKResult:
    """Generalized solution of ``u_t = A u + f(u)`` with ``u(0) = g(x)``.

    Time is cut into windows of length ``window``.  In each window the solution on
    a node grid solves ``u(s, y) = E_y[u0(X_s) exp(int_0^s c(u(s - r, X_r)) dr)]``
    with ``c(u) = f(u) / u``, by Picard iteration over frozen paths from every node.
    Values between nodes are interpolated linearly along edges.  Independent
    replicates give the standard error.  Picard iteration stops once the update
    falls below ``picard_tol``.
    """
    dt = walker.config.dt
    n_windows = max(1, int(round(t / window)))
    window = t / n_windows
    steps_per_sub = max(1, int(round(window / n_sub / dt)))
    sub_dt = steps_per_sub * dt
    n_sub = int(round(window / sub_dt))
    ne, nx, offs = _graph_nodes(walker, node_dx)
    gx = walker.origin[ne] + nx
    # g depends on x alone, so wing nodes take g at their projected position
    u0 = np.clip(g(gx), 0.0, 1.0)
    eval_x = np.asarray(eval_x, dtype=float)
    ev = [walker.locate(float(v)) for v in eval_x]
    ev_e = np.array([walker.index[e] for e, _ in ev])
    ev_x = np.array([x for _, x in ev])

    def c_of(u):
        u = np.asarray(u)
        out = np.empty_like(u)
        small = u < 1e-12
        out[~small] = f(u[~small]) / u[~small]
        if small.any():
            out[small] = f(np.full(small.sum(), 1e-9)) / 1e-9
        return out

    zero_f = np.all(f(np.linspace(0, 1, 11)) == 0)
    reps = np.empty((replicates, eval_x.size))
    if zero_f:
        # linear case: u(t, x) = E_x g(X_t), straight from the evaluation points
        for rep in range(replicates):
            st = GraphState(np.repeat(ev_e, n_paths), np.repeat(ev_x, n_paths),
                            np.zeros(ev_e.size * n_paths), np.zeros(ev_e.size * n_paths))
            for _ in range(int(round(t / dt))):
                walker.step(st, rng)
            vals = np.clip(g(walker.origin[st.edge] + st.x), 0.0, 1.0)
            reps[rep] = vals.reshape(ev_e.size, n_paths).mean(axis=1)
        mean = reps.mean(axis=0)
        se = reps.std(axis=0, ddof=1) / math.sqrt(replicates) if replicates > 1 else np.zeros_like(mean)
        return FKResult(eval_x, mean, se, reps, [])
    deltas_all = []
    N = ne.size
    for rep in range(replicates):
        u = u0.copy()
        for w in range(n_windows):
            st = GraphState(np.repeat(ne, n_paths), np.repeat(nx, n_paths),
                            np.zeros(N * n_paths), np.zeros(N * n_paths))
            pe = np.empty((n_sub + 1, N * n_paths), dtype=np.int64)
            px = np.empty((n_sub + 1, N * n_paths))
            pe[0], px[0] = st.edge, st.x
            for j in range(1, n_sub + 1):
                for _ in range(steps_per_sub):
                    walker.step(st, rng)
                pe[j], px[j] = st.edge, st.x
            # U[j] = solution at window time j * sub_dt on the nodes
            U = np.tile(u, (n_sub + 1, 1))
            lw = [_lerp_weights(offs, walker, pe[j], px[j]) for j in range(n_sub + 1)]
            start_vals = [(1 - w) * u[b] + w * u[b + 1] for b, w in lw]
            prev = None
            for it in range(picard_iters):
                newU = np.empty_like(U)
                newU[0] = u
                cU = c_of(np.clip(U, 0.0, None))
                # c along the path at r = i * sub_dt uses the solution at time j - i
                for j in range(1, n_sub + 1):
                    integ = np.zeros(N * n_paths)
                    for i in range(j + 1):
                        b, w = lw[i]
                        cv = (1 - w) * cU[j - i][b] + w * cU[j - i][b + 1]
                        integ += (0.5 if i in (0, j) else 1.0) * cv
                    integ *= sub_dt
                    newU[j] = (start_vals[j] * np.exp(integ)).reshape(N, n_paths).mean(axis=1)
                delta = float(np.max(np.abs(newU - U)))
                U = newU
                if prev is not None and delta > prev and delta > 1e-12:
                    warnings.warn(f"Picard delta increased ({prev:.3g} -> {delta:.3g}); "
                                  "shrink the window", ContractionWarning)
                deltas_all.append(delta)
                prev = delta
                if delta < picard_tol:
                    break
            u = U[-1]
        reps[rep] = _interp(u, offs, walker, ev_e, ev_x)
    mean = reps.mean(axis=0)
    se = reps.std(axis=0, ddof=1) / math.sqrt(replicates) if replicates > 1 else np.zeros_like(mean)
    return FKResult(eval_x, mean, se, reps, deltas_all)
