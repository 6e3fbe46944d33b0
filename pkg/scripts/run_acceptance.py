#!/usr/bin/env python3
"""Run the acceptance criteria and print one line per criterion.

    python3 scripts/run_acceptance.py            # all ten
    python3 scripts/run_acceptance.py 6 9 --quick
"""
import argparse
import sys

from narrowfront import acceptance


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("numbers", nargs="*", type=int)
    ap.add_argument("--quick", action="store_true", help="smaller sizes, tolerances unchanged")
    args = ap.parse_args()
    results = acceptance.run(args.numbers or None, quick=args.quick, echo=print)
    print()
    print(acceptance.table(results))
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
