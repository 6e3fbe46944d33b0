"""End-to-end acceptance checks shared by ``narrowfront validate`` and the test suite.

Every check returns a :class:`CriterionResult`.  ``quick=True`` shrinks sample
sizes and channel lengths, but tolerances are never relaxed.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import channel2d, frontpde, ldp, sturm, walker
from .channel import GeneratorParams, ChannelShape, flat_shape, sample_channel
from .graph import build_graph


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.number:2d} {self.title}: {self.summary} ({self.seconds:.1f} s)"


def _timed(number, title):
    def wrap(fn):
        def run(quick: bool = False) -> CriterionResult:
            t0 = time.perf_counter()
            passed, summary, details = fn(quick)
            return CriterionResult(number, title, bool(passed), summary, details,
                                   time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        run.title = title
        return run
    return wrap


def window_graph(shape: ChannelShape, X: float, sides: str = "both"):
    """Graph covering at least ``[-X, X]`` of the spine."""
    n = max(int(np.searchsorted(shape.junctions("+"), X)),
            int(np.searchsorted(shape.junctions("-"), X))) + 1
    if n >= shape.n_cells:
        raise ValueError(f"shape too short for a window of half-width {X}")
    return build_graph(shape, sides=sides, n_cells=n)


def indicator(half_width: float = 1.0):
    return lambda x: (np.abs(np.asarray(x)) <= half_width).astype(float)


def rectangular_params() -> GeneratorParams:
    """Rectangular-mode generator settings used for the 2D comparisons."""
    return GeneratorParams(L_lo=1.0, L_hi=2.0, A1=0.5, wing_len_lo=0.2, amplitude=0.0,
                           trig_degree=0, rectangular_mode=True)


# ---------------------------------------------------------------------------

@_timed(1, "Brownian pipeline oracle")
def criterion_1(quick):
    shape = flat_shape(1500)
    grid = np.concatenate([-np.geomspace(10.0, 1e-3, 50), [0.0]])
    cp = ldp.mu_curve(shape, grid, "+")
    cm = ldp.mu_curve(shape, grid, "-")
    exact = -np.sqrt(-2 * grid)
    mu_err = float(max(np.max(np.abs(cp.mu - exact)), np.max(np.abs(cm.mu - exact))))
    a_vals = np.array([0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0])
    I = np.array([ldp.rate(cp, a).value for a in a_vals])
    I_err = float(np.max(np.abs(I - 1 / (2 * a_vals)) * 2 * a_vals))
    sp = ldp.speeds(cp, cm, 1.0)
    c_err = max(abs(sp.c_plus - math.sqrt(2)), abs(sp.c_minus + math.sqrt(2)))
    ok = mu_err <= 1e-6 and I_err <= 1e-5 and c_err <= 1e-6
    return ok, f"mu err {mu_err:.1e}, I rel err {I_err:.1e}, c err {c_err:.1e}", dict(
        mu_err=mu_err, I_rel_err=I_err, c_plus=sp.c_plus, c_minus=sp.c_minus)


@_timed(2, "Transfer-entry identities")
def criterion_2(quick):
    shape = sample_channel(GeneratorParams(), 2024, 101)
    worst_x = worst_y = 0.0
    sign_ok = True
    for cells in (shape.right, shape.left):
        for lam in (-0.1, -1.0, -5.0):
            x, y, _, ex = sturm.transfer_arrays(cells, lam, check=False)
            worst_x = max(worst_x, float(np.max(np.abs(x - ex["x_junction"]) / np.abs(x))))
            worst_y = max(worst_y, float(np.max(np.abs(y - ex["y_junction"]) / np.abs(y))))
            rho = np.concatenate([sturm.ratio_chain(x, y, 0.0), sturm.ratio_chain(x, y, 1.0)])
            sign_ok &= bool(np.all(x < 0) and np.all(y >= 1) and np.all(rho > 0) and np.all(rho <= 1))
    ok = worst_x <= 1e-9 and worst_y <= 1e-9 and sign_ok
    return ok, f"200 cells: max rel diff x {worst_x:.1e}, y {worst_y:.1e}; signs ok {sign_ok}", dict(
        x_rel=worst_x, y_rel=worst_y, signs=sign_ok)


@_timed(3, "Dense junction system")
def criterion_3(quick):
    worst = 0.0
    for seed in (1, 2):
        cells = sample_channel(GeneratorParams(), seed, 4).right
        for lam in (-0.1, -0.5, -2.0):
            x, y, _, _ = sturm.transfer_arrays(cells, lam)
            prod = np.cumprod(sturm.ratio_chain(x[:3], y[:3], 0.0))
            dense = sturm.dense_junction_solve(cells, lam, 3)
            worst = max(worst, float(np.max(np.abs(dense - prod) / np.abs(prod))))
    return worst <= 1e-9, f"max rel diff {worst:.1e}", dict(rel=worst)


def _quenched_log_sd(shape, lam, n_cells=1500):
    """Per-cell standard deviation of ``ln rho_k - mu L_k`` along a long stretch."""
    cells = shape.side("+")[:n_cells + 1]
    x, y, L, _ = sturm.transfer_arrays(cells, lam)
    logs = np.log(sturm.ratio_chain(x, y, 0.0))[: n_cells // 2]
    mu = logs.sum() / L[: n_cells // 2].sum()
    return float(np.std(logs - mu * L[: n_cells // 2], ddof=1)), float(mu)


@_timed(4, "MC vs analytic transform")
def criterion_4(quick):
    n_paths = 1000 if quick else 4000
    rows = []
    ok = True
    for seed in (11, 12):
        shape = sample_channel(GeneratorParams(), seed, 1600)
        Ls = np.array([c.spine_length for c in shape.right])
        target = 20.0 * float(Ls.mean())
        n = int(np.argmin(np.abs(np.cumsum(Ls) - target))) + 1
        Xn = float(np.cumsum(Ls)[n - 1])
        wk = walker.Walker(build_graph(shape, sides="+", n_cells=n + 12), walker.WalkerConfig(dt=1e-3))
        rng = np.random.default_rng(seed)
        for lam in (-0.25, -0.5, -1.0):
            sd, mu = _quenched_log_sd(shape, lam)
            exact = sturm.hitting_transform(shape, lam, "+", n_ratios=n).log_sum
            q = walker.estimate_q(wk, 0.0, Xn, lam, n_paths, rng)
            log_q = math.log(q.estimate)
            comb = math.sqrt(q.log_se ** 2 + sd ** 2 * n)
            z_ldp = (log_q - Xn * mu) / comb
            z_exact = (log_q - exact) / q.log_se
            ok &= abs(z_ldp) <= 3
            rows.append(dict(seed=seed, lam=lam, x=Xn, log_q=log_q, log_se=q.log_se,
                             ldp=Xn * mu, quenched_sd=sd * math.sqrt(n), z_ldp=z_ldp,
                             exact=exact, z_exact=z_exact))
    zs = ", ".join(f"{r['z_ldp']:+.2f}" for r in rows)
    ze = ", ".join(f"{r['z_exact']:+.2f}" for r in rows)
    return ok, f"z vs exp(x mu): [{zs}]; z vs exact product: [{ze}]", dict(rows=rows)


@_timed(5, "Hitting formulas")
def criterion_5(quick):
    n_paths = 2000 if quick else 6000
    shape = sample_channel(GeneratorParams(), 5, 1200)
    x, A = 1.5, 4.0
    wk = walker.Walker(build_graph(shape, sides="+", n_cells=8), walker.WalkerConfig(dt=1e-3))
    hs = walker.sample_hit(wk, x, 0.0, A, n_paths, np.random.default_rng(5))
    freq = float(np.mean(hs.reason == "lower"))
    p = sturm.hit_probability(shape, x, A)
    se_p = math.sqrt(p * (1 - p) / n_paths)
    z_p = (freq - p) / se_p
    tau = sturm.expected_exit_time(shape, x, A)
    st = hs.spine_time[hs.finite]
    z_t = (float(st.mean()) - tau) / (float(st.std(ddof=1)) / math.sqrt(st.size))
    growth = [sturm.expected_exit_time(shape, 1.0, a) for a in (10.0, 100.0, 1000.0)]
    grows = growth[0] < growth[1] < growth[2] and growth[2] > 50 * growth[0]
    ok = abs(z_p) <= 3 and abs(z_t) <= 3 and grows
    return ok, (f"P(hit 0 first) {freq:.4f} vs {p:.4f} (z {z_p:+.2f}); exit time z {z_t:+.2f}; "
                f"E[1, A] at A=10,100,1000: {growth[0]:.3g}, {growth[1]:.3g}, {growth[2]:.3g}"), dict(
        freq=freq, p=p, z_p=z_p, tau=tau, z_t=z_t, growth=growth)


@_timed(6, "Flat KPP speed")
def criterion_6(quick):
    shape = flat_shape(100)
    T = 40.0
    sol = frontpde.solve(window_graph(shape, math.sqrt(2) * T + 20), indicator(), frontpde.kpp, T, dx=0.05)
    rel = abs(sol.trace.speed_right - math.sqrt(2)) / math.sqrt(2)
    rel_l = abs(-sol.trace.speed_left - math.sqrt(2)) / math.sqrt(2)
    return max(rel, rel_l) <= 0.05, (f"right {sol.trace.speed_right:.4f}, left {sol.trace.speed_left:.4f} "
                                     f"vs sqrt(2): rel {rel:.3f}"), dict(
        speed_right=sol.trace.speed_right, speed_left=sol.trace.speed_left)


def ldp_speeds(shape: ChannelShape, n_cells: int | None = None) -> ldp.FrontSpeeds:
    cp = ldp.mu_curve(shape, direction="+", n_cells=n_cells)
    cm = ldp.mu_curve(shape, direction="-", n_cells=n_cells)
    return ldp.speeds(cp, cm, 1.0)


def dichotomy(shape, c, T=60.0, dx=0.05):
    sol = frontpde.solve(window_graph(shape, 1.2 * c * T + 20), indicator(), frontpde.kpp, T, dx=dx)
    return sol, sol.value_at(1.2 * c * T), sol.value_at(0.8 * c * T)


@_timed(7, "LDP vs PDE speed")
def criterion_7(quick):
    seeds = (1, 2) if quick else (1, 2, 3)
    rows = []
    ok = True
    for seed in seeds:
        shape = sample_channel(GeneratorParams(), seed, 2000)
        sp = ldp_speeds(shape)
        sol, hi, lo = dichotomy(shape, sp.c_plus)
        rel = abs(sol.trace.speed_right - sp.c_plus) / sp.c_plus
        ok &= rel <= 0.10
        rows.append(dict(seed=seed, c_plus=sp.c_plus, pde=sol.trace.speed_right, rel=rel,
                         u_fast=hi, u_slow=lo))
    _, hi, lo = dichotomy(flat_shape(150), math.sqrt(2))
    flat_ok = hi < 0.01 and lo > 0.99
    ok &= flat_ok
    parts = "; ".join(f"seed {r['seed']}: {r['pde']:.3f} vs {r['c_plus']:.3f} "
                      f"(u {r['u_fast']:.1e}/{r['u_slow']:.4f})" for r in rows)
    return ok, f"{parts}; flat u(1.2c*T) {hi:.1e}, u(0.8c*T) {lo:.4f}", dict(
        rows=rows, flat_fast=hi, flat_slow=lo)


def graph_limit_errors(shape: ChannelShape, n_cells: int, eps_values, f, T=2.0, h=0.05):
    """Sup-errors between the 2D solution and the graph solution for each ``eps``."""
    graph = build_graph(shape, n_cells=n_cells, check=False)
    dom = channel2d.rect_domain(graph, h)
    grid = frontpde.build_grid(graph, h, min_interior=1)
    g = indicator()
    ref = frontpde.solve(graph, g, f, T, grid=grid, snapshot_every=0.25, do_track=False)
    out = []
    for eps in eps_values:
        sol = channel2d.solve_2d(dom, eps, g, f, T, snapshot_every=0.25)
        out.append(channel2d.compare_graph(sol, ref).max_error)
    return out


@_timed(8, "Graph-limit convergence")
def criterion_8(quick):
    eps_values = (0.4, 0.2, 0.1)
    params = rectangular_params()
    rows = []
    ok = True
    for seed in (1, 2):
        errs = graph_limit_errors(sample_channel(params, seed, 8), 5, eps_values, frontpde.kpp)
        dec = all(b < a for a, b in zip(errs, errs[1:]))
        ok &= dec
        rows.append(dict(seed=seed, errors=errs, decreasing=dec))
    flat = graph_limit_errors(channel2d.flat_rect_shape(8), 5, eps_values, frontpde.kpp)
    ok &= max(flat) < 1e-3
    parts = "; ".join(f"seed {r['seed']}: " + ", ".join(f"{e:.2e}" for e in r["errors"]) for r in rows)
    return ok, f"{parts}; flat max {max(flat):.1e}", dict(rows=rows, flat=flat)


@_timed(9, "mu and I properties")
def criterion_9(quick):
    shape = sample_channel(GeneratorParams(), 9, 800 if quick else 2000)
    grid = np.concatenate([-np.geomspace(10.0, 1e-5, 70), [0.0]])
    curve = ldp.mu_curve(shape, grid, "+")
    lam, mu = curve.lam, curve.mu
    neg = bool(np.all(mu[:-1] < 0)) and mu[-1] == 0.0
    slope = np.diff(mu) / np.diff(lam)
    convex = bool(np.all(np.diff(slope) >= -1e-9 * np.abs(slope[1:])))
    dd = {d: -float(ldp.mu_curve(shape, [-d, 0.0], "+").mu[0]) / d for d in (1e-1, 1e-5)}
    blow = dd[1e-5] / dd[1e-1]
    a = np.array([0.3, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0])
    I = np.array([ldp.rate(curve, v).value for v in a])
    Ig = np.diff(I) / np.diff(a)
    i_ok = bool(np.all(I > 0) and np.all(np.diff(I) < 0) and np.all(np.diff(Ig) >= -1e-12))
    ratio = I[-1] / I[2]
    ok = neg and convex and blow >= 10 and i_ok and ratio < 0.02
    return ok, (f"mu(0)=0 and mu<0: {neg}; convex: {convex}; divided-difference growth {blow:.0f}x; "
                f"I positive/decreasing/convex: {i_ok}; I(100)/I(1) = {ratio:.4f}"), dict(
        negative=neg, convex=convex, growth=blow, I=I.tolist(), ratio=ratio)


@_timed(10, "Feynman-Kac vs finite volumes")
def criterion_10(quick):
    shape = flat_shape(20)
    graph = build_graph(shape, n_cells=12)
    g = lambda x: np.clip(1 - (np.asarray(x) / 2) ** 2, 0.0, None) ** 2
    xs = np.linspace(-6.0, 6.0, 21)
    wk = walker.Walker(graph, walker.WalkerConfig(dt=1e-2))
    out = {}
    ok = True
    for name, f, n_paths in (("heat", lambda u: 0.0 * u, 512), ("kpp", frontpde.kpp, 32 if quick else 64)):
        pde = frontpde.solve(graph, g, None if name == "heat" else f, 5.0, dx=0.02, do_track=False)
        ref = np.array([pde.value_at(v) for v in xs])
        with warnings.catch_warnings():
            warnings.simplefilter("error", walker.ContractionWarning)
            fk = walker.feynman_kac(wk, g, f, 5.0, xs, np.random.default_rng(10), n_paths=n_paths,
                                    replicates=16)
        z = (fk.u - ref) / fk.se
        ok &= bool(np.all(np.abs(z) <= 3))
        out[name] = dict(max_abs_z=float(np.max(np.abs(z))), max_se=float(fk.se.max()))
    return ok, ", ".join(f"{k}: max |z| {v['max_abs_z']:.2f}" for k, v in out.items()), out


CRITERIA = {c.number: c for c in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                  criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)}


def run(numbers=None, quick: bool = False, echo=None) -> list[CriterionResult]:
    results = []
    for k in numbers or sorted(CRITERIA):
        try:
            res = CRITERIA[k](quick)
        except Exception as exc:  # a crash is a failed criterion, reported as such
            res = CriterionResult(k, CRITERIA[k].title, False, f"error: {type(exc).__name__}: {exc}")
        if echo:
            echo(res.line())
        results.append(res)
    return results


def table(results) -> str:
    return "\n".join(r.line() for r in results)
