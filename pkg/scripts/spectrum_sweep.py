#!/usr/bin/env python
"""Chemical-potential spectrum of the PT-symmetric double well versus Gamma.

Traces the two real branches and the complex-conjugate broken pair, prints the
critical points and writes one CSV row per converged state.

    python scripts/spectrum_sweep.py --g 1.0 --gamma 0:0.45:0.005 --out spectrum.csv
"""
import argparse
import time

from ptfeeder.cli import parse_range
from ptfeeder.core import WellSystem
from ptfeeder.stationary import BRANCHES, default_grid, locate_critical, spectrum_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, default=1.1)
    ap.add_argument("--V", type=float, default=-1.0)
    ap.add_argument("--g", type=float, default=1.0)
    ap.add_argument("--gamma", default="0:0.45:0.005", help="start:stop:step")
    ap.add_argument("--n-bins", type=int, default=16384)
    ap.add_argument("--out", default="spectrum.csv")
    args = ap.parse_args()

    template = WellSystem(args.a, args.V, 0.0, args.g)
    grid = default_grid(template, n_bins=args.n_bins)
    t0 = time.perf_counter()
    crit = locate_critical(template, grid)
    print(f"Gamma_c  = {crit.gamma_c:.6f}  bracket {crit.gamma_c_bracket}")
    print(f"Gamma_c* = {crit.gamma_c_star:.6f}  bracket {crit.gamma_c_star_bracket}")
    sp = spectrum_sweep(template, parse_range(args.gamma), grid, critical=crit)
    with open(args.out, "w") as fh:
        fh.write("gamma,branch,mu_re,mu_im,residual\n")
        for name in BRANCHES:
            br = sp[name]
            for gm, st in zip(br.gamma_values, br.states):
                fh.write(f"{gm:.17g},{name},{st.mu.real:.17g},{st.mu.imag:.17g},{st.residual:.3e}\n")
    for name in BRANCHES:
        br = sp[name]
        span = f"{br.gamma_values[0]:.3f}..{br.gamma_values[-1]:.3f}" if len(br) else "-"
        print(f"{name:13s} {len(br):4d} points  Gamma {span}")
    print(f"wrote {args.out} in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
