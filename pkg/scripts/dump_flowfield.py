#!/usr/bin/env python3
"""Write the envelope gradient-flow field of a built-in problem as CSV (x_0, x_1, d_0, d_1)."""
import argparse
import sys

from proxescape import dynamics, problems
from proxescape.proxengine import ProxParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="absym")
    ap.add_argument("--mu", type=float, default=0.25)
    ap.add_argument("--lo", type=float, default=-1.0)
    ap.add_argument("--hi", type=float, default=1.0)
    ap.add_argument("--resolution", type=int, default=21)
    ap.add_argument("--out", help="CSV path (default: stdout)")
    args = ap.parse_args()

    f = problems.builtin_problem(args.problem)
    table = dynamics.flowfield(f, ProxParams(args.mu), [args.lo] * f.dim, [args.hi] * f.dim, args.resolution)
    text = dynamics.flowfield_csv(table)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
