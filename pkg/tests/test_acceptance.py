"""Acceptance criteria 1-9, each at its stated tolerance.

Every test reports one PASS/FAIL line (printed, and repeated in the pytest
terminal summary) before asserting.
"""
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import ACCEPTANCE_LINES
from ptfeeder import feeder as F
from ptfeeder import propagator as P
from ptfeeder.core import ComplexField, Grid, WellSystem
from ptfeeder.stationary import (default_grid, find_state, locate_critical, seed_state,
                                 spectrum_sweep)

A, V = 1.1, -1.0


def report(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def linear_kappa(parity):
    s = 1.0 if parity == "even" else -1.0
    return brentq(lambda k: 2 * k + V * (1 + s * np.exp(-2 * k * A)), 1e-9, 3.0, xtol=1e-15)


# -- 1 ---------------------------------------------------------------------------

def test_1_linear_oracle():
    system = WellSystem(A, V, 0.0, 0.0)
    grid = default_grid(system)
    # load the compiled kernels once; the criterion times the solve itself
    find_state(WellSystem(1.0, V, 0.0, 0.0), -0.6, "ground", grid=default_grid(WellSystem(1.0, V)))
    t0 = time.perf_counter()
    ground = find_state(system, -0.6, "ground", grid=grid)
    excited = find_state(system, -0.01, "excited", grid=grid)
    elapsed = time.perf_counter() - t0
    err_g = abs(ground.mu + linear_kappa("even") ** 2)
    err_e = abs(excited.mu + linear_kappa("odd") ** 2)
    ok = (ground.branch == "ground" and excited.branch == "excited"
          and max(err_g, err_e) < 1e-8 and elapsed < 1.0)
    assert report("1 linear oracle", ok,
                  f"|dmu| ground {err_g:.1e}, excited {err_e:.1e}; {elapsed:.2f} s")


# -- 2 ---------------------------------------------------------------------------

def test_2_spectrum_topology():
    template = WellSystem(A, V, 0.0, 1.0)
    grid = default_grid(template)
    gammas = np.linspace(0.0, 0.45, 100)
    t0 = time.perf_counter()
    crit = locate_critical(template, grid)
    sp = spectrum_sweep(template, gammas, grid, critical=crit)
    elapsed = time.perf_counter() - t0

    gr, ex = sp["ground"], sp["excited"]
    common = np.intersect1d(gr.gamma_values, ex.gamma_values)
    gap = np.array([abs(ex.mu_values[list(ex.gamma_values).index(gm)]
                        - gr.mu_values[list(gr.gamma_values).index(gm)]) for gm in common])
    below_c = gammas[gammas < crit.gamma_c]
    step = gammas[1] - gammas[0]
    real_ok = (np.all(np.diff(gap) < 0)
               and len(gr) == len(ex) == len(below_c)
               and crit.gamma_c - step < gr.gamma_values[-1] < crit.gamma_c
               and crit.bracket_width <= 1e-5)
    bp, bm = sp["broken_plus"], sp["broken_minus"]
    conj = np.max(np.abs(bp.mu_values - np.conj(bm.mu_values)))
    above_star = gammas[gammas > crit.gamma_c_star]
    broken_ok = (len(bp) == len(bm) > 0 and np.all(bp.gamma_values > crit.gamma_c_star)
                 and len(bp) >= len(above_star) - 1 and np.all(bp.mu_values.imag > 0)
                 and conj < 1e-9)
    crit0 = locate_critical(WellSystem(A, V, 0.0, 0.0), grid)
    lin_gap = abs(crit0.gamma_c - crit0.gamma_c_star)
    ok = (real_ok and broken_ok and crit.gamma_c_star < crit.gamma_c
          and lin_gap <= 2e-5 and elapsed < 120.0)
    assert report("2 spectrum topology", ok,
                  f"g=1 Gamma_c={crit.gamma_c:.6f} Gamma_c*={crit.gamma_c_star:.6f} "
                  f"(bracket {crit.bracket_width:.1e}), real {len(gr)}/{len(ex)} pts, "
                  f"broken {len(bp)} pairs, conj {conj:.1e}; g=0 |Gc-Gc*|={lin_gap:.1e}; "
                  f"100-point sweep {elapsed:.0f} s")


# -- 3 ---------------------------------------------------------------------------

def test_3_psi_c_locus():
    pts = F.trace_psi_c_locus(A, V, [0.0, 0.5, 1.0, 2.0], default_grid(WellSystem(A, V)))
    ok = len(pts) == 4
    parts = []
    for p in pts:
        rel = abs(p.gamma - p.gamma_c) / p.gamma_c
        ok &= abs(p.gamma - 0.39) <= 0.02 and rel < 0.05 and p.branch == "ground" and abs(p.defect) < 1e-6
        parts.append(f"g={p.g:g}: Gamma={p.gamma:.4f} ({rel:.1%} from Gamma_c)")
    assert report("3 psi_c locus", ok, "; ".join(parts))


# -- 4 ---------------------------------------------------------------------------

def test_4_random_constructions():
    rng = np.random.default_rng(2024)
    grid = Grid.symmetric(30.0, 4096, anchor=A)
    cache = {}
    worst_res = worst_phase = 0.0
    drain_ok = True
    n = 0
    for _ in range(100):
        gamma = float(rng.choice([0.05, 0.1, 0.2, 0.3]))
        g = float(rng.choice([0.5, 1.0, 2.0]))
        branch = str(rng.choice(["ground", "excited"]))
        key = (gamma, g, branch)
        if key not in cache:
            cache[key] = seed_state(WellSystem(A, V, gamma, g), branch, grid)
        s = cache[key]
        peak = np.sqrt(2 * -s.mu.real / g)
        if rng.random() < 0.6:
            amp = rng.uniform(0.05, 0.95) * peak
            cs = F.build_two_feeder_system(s, amp, amp)
        else:
            cs = F.build_single_unbound_feeder(s, rng.uniform(0.1, 0.6))
        worst_res = max(worst_res, max(cs.coupling_residuals()))
        worst_phase = max(worst_phase, max(cs.phase_errors()))
        for c in cs.couplings:
            sys_val, env_val = cs.values_at(c.partner_indices[0], c.x0), cs.values_at(c.partner_indices[1], c.x0)
            w = F.effective_env_potential(sys_val, env_val, V, abs(c.gamma_target))
            drain_ok &= w.imag < 0
        n += 1
    ok = n == 100 and worst_res < 1e-8 and worst_phase < 1e-6 and drain_ok
    assert report("4 coupling residuals", ok,
                  f"{n} systems, max residual {worst_res:.1e}, max phase error {worst_phase:.1e}, "
                  f"drain sign {'ok' if drain_ok else 'violated'}")


# -- 5 ---------------------------------------------------------------------------

def test_5_soliton_slope_identity():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        kappa, g, u = rng.uniform(0.1, 2.0), rng.uniform(0.2, 3.0), rng.uniform(0.3, 8.0)
        left = rng.random() < 0.5
        p = F.SolitonParams(kappa, 0.0, g)
        x = -u / kappa if left else u / kappa
        h = 1e-5 / kappa
        fd = (F.soliton_value(p, x + h) - F.soliton_value(p, x - h)) / (2 * h)
        d = F.soliton_derivative_from_value(float(F.soliton_value(p, x)), p, "left" if left else "right")
        worst = max(worst, abs(d - fd) / abs(fd))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-7 and elapsed < 1.0
    assert report("5 soliton slope identity", ok, f"max rel. error {worst:.1e} over 1000 triples; {elapsed:.2f} s")


# -- 6 ---------------------------------------------------------------------------

def _soliton(grid, kappa, g=1.0, x0=0.0):
    return ComplexField(grid, np.sqrt(2 * kappa**2 / g) / np.cosh(kappa * (grid.x - x0)))


def test_6a_free_gaussian():
    grid = Grid.symmetric(40.0, 4096)
    w0 = 1.0
    f = ComplexField(grid, np.exp(-grid.x**2 / (2 * w0**2)))
    d = np.abs(P.evolve_fields(P.setup_single(f), 1e-4, 1.0)[0]) ** 2
    w2 = 2 * np.sum(grid.x**2 * d) / np.sum(d)
    exact = w0**2 + (2.0 / w0) ** 2
    err = abs(w2 - exact) / exact
    assert report("6a free Gaussian dispersion", err < 1e-6, f"rel. width^2 error {err:.1e} at t=1")


def test_6b_soliton_shape():
    grid = Grid.symmetric(20.0, 2048)
    kappa = 1.0
    f = _soliton(grid, kappa)
    psi = P.evolve_fields(P.setup_single(f, g=1.0), 1e-4, 10.0)[0]
    # mu = -kappa^2, so the stationary phase is exp(+i kappa^2 t)
    err = np.max(np.abs(psi * np.exp(-1j * kappa**2 * 10.0) - f.values))
    assert report("6b soliton shape", err < 1e-4, f"max deviation {err:.1e} at t=10")


def test_6c_second_order():
    grid = Grid.symmetric(20.0, 2048)
    s = P.setup_single(_soliton(grid, 0.7, 1.0, 0.5), g=1.0)
    dt, t = 1e-2, 0.5
    ref = P.evolve_fields(s, dt / 100, t)
    e1 = np.max(np.abs(P.evolve_fields(s, dt, t) - ref))
    e2 = np.max(np.abs(P.evolve_fields(s, dt / 2, t) - ref))
    ratio = e1 / e2
    assert report("6c dt convergence", abs(ratio - 4) <= 0.5, f"error ratio {ratio:.3f} on halving dt")


def test_6d_closed_system_norm():
    sysw = WellSystem(A, V, 0.1, 1.0)
    st = seed_state(sysw, "ground", default_grid(sysw))
    cs = F.build_two_feeder_system(st, 0.7, 0.7)
    cfg = P.PropagationConfig(dt=1e-4, t_final=1.0, record_stride=1000, boundary="none",
                              coupling_mode="exact-kick", classify=False)
    rec = P.propagate(cs, cfg)
    tot = rec.total_norm
    drift = np.max(np.abs(tot - tot[0])) / tot[0] / rec.times[-1]
    assert report("6d closed-system norm", drift < 1e-6, f"relative drift {drift:.1e} per unit time")


# -- 7 ---------------------------------------------------------------------------

LIFETIME_CFG = dict(dt=1e-4, record_stride=500, boundary="absorbing", classify=False)


@pytest.mark.slow
def test_7a_single_feeder_lifetime():
    sysw = WellSystem(A, V, 0.1, 1.0)
    st = seed_state(sysw, "excited", default_grid(sysw))
    cs = F.build_single_unbound_feeder(st, 0.2)
    t0 = time.perf_counter()
    rec = P.propagate(cs, P.PropagationConfig(t_final=20.0, **LIFETIME_CFG))
    elapsed = time.perf_counter() - t0
    ok = rec.lifetime >= 20.0 and elapsed <= 600
    assert report("7a single-feeder lifetime", ok,
                  f"excited state, psi2(0)=0.2: lifetime {rec.lifetime:g} (>= 20), {elapsed:.0f} s")


@pytest.mark.slow
def test_7b_two_feeder_lifetime():
    sysw = WellSystem(A, V, 0.1, 1.0)
    st = seed_state(sysw, "ground", default_grid(sysw))
    cs = F.build_two_feeder_system(st, 0.3, 0.3)
    t0 = time.perf_counter()
    rec = P.propagate(cs, P.PropagationConfig(t_final=10.0, **LIFETIME_CFG))
    elapsed = time.perf_counter() - t0
    ok = rec.lifetime >= 5.0 and elapsed <= 600
    assert report("7b two-feeder lifetime", ok,
                  f"ground state, psi2(a)=psi3(-a)=0.3: lifetime {rec.lifetime:g} (>= 5), {elapsed:.0f} s")


# -- 8 ---------------------------------------------------------------------------

def test_8_time_conversion():
    a = P.reduced_to_si_time(45.0)
    b = P.reduced_to_si_time(10.0, 2.7)
    ok = a == pytest.approx(123.0, abs=1e-12) and b == pytest.approx(27.0, abs=1e-12)
    assert report("8 time conversion", ok, f"45 -> {a:.6g} ms, 10 -> {b:.6g} ms (scale 2.7)")


# -- 9 ---------------------------------------------------------------------------

# Single unbound feeders on the excited state at Gamma=0.38, picked with
# scripts/classify_feeders.py: (psi2(0), slope root). The fast large-slope
# feeder breaks up by itself; with the slow one psi1 is limited by the
# nearest-bin delta error at dt=1e-4 on 16384 bins.
UNSTABLE_FEEDER = (0.3, 1)
STABLE_FEEDER = (0.2, 0)
CLASSIFY_CFG = dict(dt=1e-4, t_final=60.0, record_stride=500, classify=True, stop_on_loss=True,
                    boundary="reservoir")


@pytest.mark.slow
def test_9_stability_classes():
    sysw = WellSystem(A, V, 0.38, 1.0)
    st = seed_state(sysw, "excited", Grid.symmetric(40.0, 16384, anchor=A))
    cfg = P.PropagationConfig(**CLASSIFY_CFG)
    out = {}
    for label, (r, root) in (("unstable", UNSTABLE_FEEDER), ("potentially-stable", STABLE_FEEDER)):
        cs = F.build_single_unbound_feeder(st, r, slope_root=root, substeps=8)
        out[label] = (cs.info["psi2_slope_imag"], P.propagate(cs, cfg))
    ok = all(rec.classification == label for label, (_, rec) in out.items())
    detail = "; ".join(f"psi2(0)={r}, s={s:.4g}: L={rec.lifetime:g}, L(dt/10)={rec.refined_lifetime} "
                       f"-> {rec.classification}"
                       for (r, _), (s, rec) in zip((UNSTABLE_FEEDER, STABLE_FEEDER), out.values()))
    assert report("9 stability classes", ok, detail)
