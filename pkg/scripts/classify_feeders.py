#!/usr/bin/env python
"""Dynamic stability classes of single unbound feeders.

Every candidate is propagated until it loses stationarity, then again with
a ten times smaller dt. An unchanged lifetime means "unstable", a longer one
"potentially-stable".

Two kinds of candidate:

* ``coupled`` (default): the system state plus one unbound feeder, for every
  admissible slope root of every psi2(0); the lifetime is that of psi1.
* ``free``: the unbound wave alone, without wells, at the system's mu.
  ``--close`` retunes psi(0) so the wave continues smoothly across the
  periodic wrap.

    python scripts/classify_feeders.py --psi0 0.2 --n-bins 8192
    python scripts/classify_feeders.py --kind free --psi0 1.0,2.0 --n-bins 2048 --boundary none
"""
import argparse
import time

from ptfeeder.core import Grid, WellSystem
from ptfeeder.feeder import (build_single_unbound_feeder, close_unbound_wave, free_unbound_wave,
                             solve_single_feeder_slope)
from ptfeeder.propagator import BOUNDARIES, PropagationConfig, propagate, setup_single
from ptfeeder.stationary import seed_state


def candidates(args, st):
    mu, g = st.mu.real, args.g
    for r in (float(v) for v in args.psi0.split(",")):
        roots = solve_single_feeder_slope(st, r)
        if args.kind == "coupled":
            for i, s in enumerate(roots):
                cs = build_single_unbound_feeder(st, r, slope_root=i, substeps=8)
                yield f"psi2(0)={r:g} root {i} (s={s:.5g})", cs
        elif args.close:
            c = close_unbound_wave(st, r, half_width=args.half_width)
            wave = c.field(mu, g, args.n_bins)
            yield (f"closed psi(0)={c.psi_at_0:.6f} (s={c.slope_imag:.5g}, L={c.half_width:.3f})",
                   setup_single(wave, g=g, absorb=True, mu=mu))
        else:
            grid = Grid.symmetric(args.half_width, args.n_bins, anchor=st.system.a)
            wave = free_unbound_wave(grid, mu, g, r, roots[0], substeps=8)
            yield f"psi(0)={r:g} (s={roots[0]:.5g})", setup_single(wave, g=g, absorb=True, mu=mu)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=("coupled", "free"), default="coupled")
    ap.add_argument("--close", action="store_true", help="free waves only: close on the grid")
    ap.add_argument("--branch", choices=("ground", "excited"), default="excited")
    ap.add_argument("--gamma", type=float, default=0.1)
    ap.add_argument("--g", type=float, default=1.0)
    ap.add_argument("--psi0", default="0.2")
    ap.add_argument("--n-bins", type=int, default=8192)
    ap.add_argument("--half-width", type=float, default=40.0)
    ap.add_argument("--boundary", choices=BOUNDARIES, default="absorbing")
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--t-final", type=float, default=80.0)
    args = ap.parse_args()

    sysw = WellSystem(1.1, -1.0, args.gamma, args.g)
    st = seed_state(sysw, args.branch, Grid.symmetric(args.half_width, args.n_bins, anchor=sysw.a))
    cfg = PropagationConfig(dt=args.dt, t_final=args.t_final, record_stride=int(round(0.05 / args.dt)),
                            boundary=args.boundary, classify=True, stop_on_loss=True)
    for label, system in candidates(args, st):
        t0 = time.perf_counter()
        rec = propagate(system, cfg)
        print(f"{label}: lifetime {rec.lifetime:g}, refined {rec.refined_lifetime}, "
              f"{rec.classification}  ({time.perf_counter() - t0:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
