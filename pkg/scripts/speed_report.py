#!/usr/bin/env python3
"""Predicted (rate-function) versus simulated front speeds for a few random channels."""
import argparse

from narrowfront import acceptance, frontpde
from narrowfront.channel import GeneratorParams, sample_channel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--cells", type=int, default=2000)
    ap.add_argument("--T", type=float, default=60.0)
    args = ap.parse_args()
    print("seed  c+_ldp    c-_ldp    c+_pde    c-_pde")
    for seed in args.seeds:
        shape = sample_channel(GeneratorParams(), seed, args.cells)
        sp = acceptance.ldp_speeds(shape)
        graph = acceptance.window_graph(shape, 1.25 * max(sp.c_plus, sp.c_minus) * args.T + 20.0)
        tr = frontpde.solve(graph, acceptance.indicator(), frontpde.kpp, args.T).trace
        print(f"{seed:4d}  {sp.c_plus:.4f}    {sp.c_minus:.4f}    {tr.speed_right:.4f}    {-tr.speed_left:.4f}")


if __name__ == "__main__":
    main()
