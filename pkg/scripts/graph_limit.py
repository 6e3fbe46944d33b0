#!/usr/bin/env python3
"""Sup distance between eps-channel cross-section averages and the graph solution."""
import argparse

from narrowfront import acceptance, frontpde
from narrowfront.channel import sample_channel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--cells", type=int, default=5)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--T", type=float, default=2.0)
    args = ap.parse_args()
    shape = sample_channel(acceptance.rectangular_params(), args.seed, args.cells)
    errs = acceptance.graph_limit_errors(shape, args.cells, args.eps, frontpde.kpp, T=args.T)
    for eps, err in zip(args.eps, errs):
        print(f"eps = {eps:<6g} max error = {err:.3e}")


if __name__ == "__main__":
    main()
