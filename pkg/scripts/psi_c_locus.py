#!/usr/bin/env python
"""Locus of ground states that admit a bound mirror-image feeder.

For each interaction strength g the phase defect arg psi(a) - arg psi(-a) - pi/2
is followed along the ground branch until it vanishes.

    python scripts/psi_c_locus.py --g-range 0:2.5:0.5 --workers 2
"""
import argparse

from ptfeeder.cli import parse_range
from ptfeeder.core import WellSystem
from ptfeeder.feeder import trace_psi_c_locus
from ptfeeder.stationary import default_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, default=1.1)
    ap.add_argument("--V", type=float, default=-1.0)
    ap.add_argument("--g-range", default="0:2.5:0.5")
    ap.add_argument("--n-bins", type=int, default=16384)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    grid = default_grid(WellSystem(args.a, args.V, 0.0, 1.0), n_bins=args.n_bins)
    pts = trace_psi_c_locus(args.a, args.V, parse_range(args.g_range), grid,
                            skip_missing=True, workers=args.workers)
    print(f"{'g':>6} {'Gamma':>9} {'Gamma_c':>9} {'rel.dist':>9} {'defect':>9}  region")
    for p in pts:
        rel = abs(p.gamma - p.gamma_c) / p.gamma_c
        print(f"{p.g:6.2f} {p.gamma:9.5f} {p.gamma_c:9.5f} {rel:9.2%} {p.defect:9.1e}  {p.region}")


if __name__ == "__main__":
    main()
