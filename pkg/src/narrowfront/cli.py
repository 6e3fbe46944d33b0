"""Command-line entry point: ``narrowfront <subcommand> ...``.

Exit status is 0 on success, 1 on a numerical or input failure, and 2 on a usage
error (argparse's own convention).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from importlib import metadata

import numpy as np

from . import acceptance, channel2d, frontpde, ldp, sturm, walker
from .channel import ChannelShape, GeneratorParams, flat_shape, sample_channel
from .graph import build_graph
from .io import atomic_write_text, csv_text

log = logging.getLogger("narrowfront")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _load_shape(args) -> ChannelShape:
    if getattr(args, "flat", False):
        return flat_shape(args.flat_cells)
    if not args.shape:
        raise SystemExit("error: --shape is required (or --flat)")
    return ChannelShape.load(args.shape)


def _write(args, name: str, text: str) -> None:
    out = getattr(args, "out_dir", None)
    if out is None:
        sys.stdout.write(text)
        return
    atomic_write_text(os.path.join(out, name), text)


def _manifest(args, outputs: list[str], extra: dict | None = None) -> None:
    """Inputs, seeds and tool version next to the artifacts; timestamps go to a sidecar log."""
    out = getattr(args, "out_dir", None)
    if out is None:
        return
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    doc = {"tool": "narrowfront", "version": _version(), "command": args.command,
           "config": cfg, "outputs": sorted(outputs)}
    if extra:
        doc.update(extra)
    atomic_write_text(os.path.join(out, "manifest.json"), json.dumps(doc, indent=1, sort_keys=True) + "\n")
    with open(os.path.join(out, "run.log"), "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {args.command} -> {', '.join(sorted(outputs))}\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    base = GeneratorParams(rectangular_mode=args.rectangular) if not args.rectangular \
        else acceptance.rectangular_params()
    if args.params:
        with open(args.params) as fh:
            base = GeneratorParams(**{**asdict(base), **json.load(fh)})
    shape = sample_channel(base, args.seed, args.cells)
    if args.out:
        shape.save(args.out)
    else:
        sys.stdout.write(shape.dumps() + "\n")
    return 0


def cmd_graph(args) -> int:
    shape = _load_shape(args)
    g = build_graph(shape, n_cells=args.cells)
    _write(args, "graph.json", g.dumps() + "\n")
    _write(args, "measures.csv", g.measures_csv())
    _manifest(args, ["graph.json", "measures.csv"])
    return 0


def _grid(args):
    return ldp.default_grid(args.n_lam, args.lam_lo, args.lam_hi)


def cmd_mu(args) -> int:
    shape = _load_shape(args)
    curve = ldp.mu_curve(shape, _grid(args), args.direction, n_cells=args.cells)
    _write(args, f"mu{args.direction}.csv", curve.to_csv())
    _manifest(args, [f"mu{args.direction}.csv"])
    return 0


def cmd_rate(args) -> int:
    shape = _load_shape(args)
    curve = ldp.mu_curve(shape, _grid(args), args.direction, n_cells=args.cells)
    _write(args, f"rate{args.direction}.csv", ldp.RateFunction(curve).to_csv(_floats(args.a)))
    _manifest(args, [f"rate{args.direction}.csv"])
    return 0


def cmd_speed(args) -> int:
    shape = _load_shape(args)
    cp = ldp.mu_curve(shape, _grid(args), "+", n_cells=args.cells)
    cm = ldp.mu_curve(shape, _grid(args), "-", n_cells=args.cells)
    sp = ldp.speeds(cp, cm, args.fprime)
    print(f"c*+ = {sp.c_plus:.10g}\nc*- = {sp.c_minus:.10g}\nf'(0) = {sp.fprime0:g}")
    if args.out_dir:
        _write(args, "speed.csv", sp.to_csv())
        _manifest(args, ["speed.csv"])
    return 0


def cmd_solve_graph(args) -> int:
    shape = _load_shape(args)
    X = args.window or (1.25 * args.c_guess * args.T + 20.0)
    graph = acceptance.window_graph(shape, X)
    sol = frontpde.solve(graph, acceptance.indicator(args.support), frontpde.kpp, args.T, dx=args.dx,
                         snapshot_every=args.every)
    tr = sol.trace
    print(f"right speed {tr.speed_right:.6g} (R^2 {tr.r2_right:.6f}); "
          f"left speed {tr.speed_left:.6g} (R^2 {tr.r2_left:.6f})")
    summary = {"speed_right": tr.speed_right, "speed_left": tr.speed_left, "r2_right": tr.r2_right,
               "r2_left": tr.r2_left, "fit_window": list(tr.fit_window), "dt": sol.dt, "window": X}
    if args.out_dir:
        _write(args, "front.csv", tr.to_csv())
        _write(args, "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
        names = ["front.csv", "summary.json"]
        if args.snapshots:
            _write(args, "snapshots.csv", sol.snapshots_csv())
            names.append("snapshots.csv")
        _manifest(args, names)
    return 0


def cmd_solve_2d(args) -> int:
    shape = channel2d.flat_rect_shape(args.cells + 2) if args.flat else _load_shape(args)
    graph = build_graph(shape, n_cells=args.cells, check=False)
    dom = channel2d.rect_domain(graph, args.h)
    eps_values = _floats(args.eps)
    for eps in eps_values:
        steps = args.T / channel2d.stable_dt(dom, eps)
        log.warning("eps = %g: about %.3g steps on %d nodes", eps, steps, dom.n)
    f = None if args.no_reaction else frontpde.kpp
    g = acceptance.indicator(args.support)
    grid = frontpde.build_grid(graph, args.h, min_interior=1)
    ref = frontpde.solve(graph, g, f, args.T, grid=grid, snapshot_every=args.every, do_track=False)
    rows = []
    names = []
    for eps in eps_values:
        sol = channel2d.solve_2d(dom, eps, g, f, args.T, snapshot_every=args.every)
        cmp_ = channel2d.compare_graph(sol, ref)
        print(f"eps {eps:g}: sup error {cmp_.max_error:.4e}, spine gradient {sol.spine_gradient():.3f}")
        rows.extend((float(eps), float(t), float(e)) for t, e in zip(cmp_.times, cmp_.errors))
        if args.out_dir:
            _write(args, f"averages_eps{eps:g}.csv", sol.averages_csv())
            names.append(f"averages_eps{eps:g}.csv")
    if args.out_dir:
        _write(args, "comparison.csv", csv_text(["eps", "t", "sup_error"], rows))
        _write(args, "graph_snapshots.csv", ref.snapshots_csv())
        _manifest(args, names + ["comparison.csv", "graph_snapshots.csv"])
    return 0


def cmd_mc(args) -> int:
    shape = _load_shape(args)
    Ls = np.cumsum([c.spine_length for c in shape.right])
    n = int(np.searchsorted(Ls, args.distance)) + 1
    wk = walker.Walker(build_graph(shape, sides="+", n_cells=n + 12), walker.WalkerConfig(dt=args.dt))
    rng = np.random.default_rng(args.seed)
    rows = []
    for lam in _floats(args.lam):
        q = walker.estimate_q(wk, 0.0, args.distance, lam, args.paths, rng)
        print(f"lambda {lam:g}: q = {q.estimate:.6g} +- {q.se:.2g} (censored {q.censored:.2%})")
        rows.append((lam, q.estimate, q.se, q.bracket[0], q.bracket[1]))
    if args.out_dir:
        _write(args, "q.csv", csv_text(["lambda", "q_hat", "se", "bracket_lo", "bracket_hi"], rows))
        _manifest(args, ["q.csv"])
    return 0


def cmd_validate(args) -> int:
    only = _ints(args.only) if args.only else None
    results = acceptance.run(only, quick=args.quick, echo=print)
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    if args.out_dir:
        rows = [(r.number, r.title, "pass" if r.passed else "fail", r.summary, round(r.seconds, 2))
                for r in results]
        _write(args, "validate.csv", csv_text(["criterion", "title", "status", "summary", "seconds"], rows))
        _manifest(args, ["validate.csv"])
    return 0 if n_ok == len(results) else 1


def cmd_report(args) -> int:
    rows = []
    for seed in _ints(args.seeds):
        shape = sample_channel(GeneratorParams(), seed, args.cells)
        sp = acceptance.ldp_speeds(shape)
        sol = frontpde.solve(acceptance.window_graph(shape, 1.25 * sp.c_plus * args.T + 20),
                             acceptance.indicator(), frontpde.kpp, args.T, dx=args.dx)
        tr = sol.trace
        rows.append((seed, sp.c_plus, tr.speed_right, tr.speed_right / sp.c_plus - 1,
                     sp.c_minus, tr.speed_left, tr.speed_left / sp.c_minus - 1))
        print(f"seed {seed}: c*+ {sp.c_plus:.4f} pde {tr.speed_right:.4f}; "
              f"c*- {sp.c_minus:.4f} pde {tr.speed_left:.4f}")
    text = csv_text(["seed", "c_plus_ldp", "c_plus_pde", "rel_plus", "c_minus_ldp", "c_minus_pde",
                     "rel_minus"], rows)
    _write(args, "report.csv", text)
    _manifest(args, ["report.csv"])
    return 0


# ---------------------------------------------------------------------------

def _shape_args(p, flat=True):
    p.add_argument("--shape", help="channel JSON file")
    if flat:
        p.add_argument("--flat", action="store_true", help="use a constant-width channel instead")
        p.add_argument("--flat-cells", type=int, default=2000)


def _lam_args(p):
    p.add_argument("--lam-lo", type=float, default=-10.0)
    p.add_argument("--lam-hi", type=float, default=-1e-4)
    p.add_argument("--n-lam", type=int, default=60)
    p.add_argument("--cells", type=int, default=None, help="cells used per side (default: all)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="narrowfront", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file with default values for the subcommand")
    ap.add_argument("--print-config", action="store_true", help="print the resolved settings and exit")
    ap.add_argument("--threads", type=int, default=os.cpu_count(), help="worker cap (recorded only)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a random channel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cells", type=int, default=500)
    p.add_argument("--rectangular", action="store_true")
    p.add_argument("--params", help="JSON with generator parameter overrides")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("graph", help="metric graph and measures")
    _shape_args(p)
    p.add_argument("--cells", type=int, default=10)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_graph)

    for name, func in (("mu", cmd_mu), ("rate", cmd_rate)):
        p = sub.add_parser(name, help=f"{name} curve on a lambda grid")
        _shape_args(p)
        _lam_args(p)
        p.add_argument("--direction", choices=["+", "-"], default="+")
        if name == "rate":
            p.add_argument("--a", default="0.25,0.5,1,2,5,10,100")
        p.add_argument("--out-dir")
        p.set_defaults(func=func)

    p = sub.add_parser("speed", help="front speeds from the rate functions")
    _shape_args(p)
    _lam_args(p)
    p.add_argument("--fprime", type=float, default=1.0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_speed)

    p = sub.add_parser("solve-graph", help="KPP front on the metric graph")
    _shape_args(p)
    p.add_argument("--T", type=float, default=40.0)
    p.add_argument("--dx", type=float, default=0.05)
    p.add_argument("--every", type=float, default=0.5)
    p.add_argument("--support", type=float, default=1.0)
    p.add_argument("--c-guess", type=float, default=math.sqrt(2))
    p.add_argument("--window", type=float, default=None)
    p.add_argument("--snapshots", action="store_true", help="also write the full snapshot table")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_solve_graph)

    p = sub.add_parser("solve-2d", help="eps-channel solve compared with the graph limit")
    _shape_args(p, flat=False)
    p.add_argument("--flat", action="store_true")
    p.add_argument("--cells", type=int, default=5)
    p.add_argument("--eps", default="0.4,0.2,0.1")
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--every", type=float, default=0.25)
    p.add_argument("--support", type=float, default=1.0)
    p.add_argument("--no-reaction", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_solve_2d)

    p = sub.add_parser("mc", help="Monte Carlo hitting transform")
    _shape_args(p)
    p.add_argument("--lam", default="-0.5")
    p.add_argument("--distance", type=float, default=20.0)
    p.add_argument("--paths", type=int, default=4000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("validate", help="run the acceptance suite")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="LDP-predicted vs PDE-measured speeds for several seeds")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--cells", type=int, default=2000)
    p.add_argument("--T", type=float, default=60.0)
    p.add_argument("--dx", type=float, default=0.05)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        # file values become defaults; explicit flags still win
        for action in ap._subparsers._group_actions[0].choices[args.command]._actions:
            if action.dest in cfg:
                action.default = cfg[action.dest]
        args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(message)s")
    if args.print_config:
        print(json.dumps({k: v for k, v in vars(args).items() if k != "func"}, indent=1, sort_keys=True))
        return 0
    try:
        return args.func(args)
    except (ValueError, RuntimeError, ArithmeticError, OSError, KeyError) as exc:
        print(f"narrowfront {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
