import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from ptfeeder.core import Grid, WellSystem, pt_reflect
from ptfeeder.stationary import (NoConvergenceError, PTFeederError, ShootingProblem,
                                 check_invariants, default_grid, find_state,
                                 integrate_with_jumps, linear_double_delta_kappa,
                                 phase_difference, seed_state, shoot_residual,
                                 trace_branch)

A, V = 1.1, -1.0

# kappa of the Hermitian linear double delta at a=1.1, V=-1 from an
# independent root finder on 2k = -V(1 +- exp(-2ka))
KAPPA_EVEN = 0.6261111408655937
KAPPA_ODD = 0.08806707181590


@pytest.fixture(scope="module")
def grid():
    return default_grid(WellSystem(A, V))


@pytest.fixture(scope="module")
def small_grid():
    return Grid.symmetric(30.0, 4096, anchor=A)


def test_frozen_oracle_agrees_with_brentq():
    for s, ref in ((1.0, KAPPA_EVEN), (-1.0, KAPPA_ODD)):
        k = brentq(lambda k: 2 * k + V * (1 + s * np.exp(-2 * k * A)), 1e-9, 3.0, xtol=1e-15)
        assert k == pytest.approx(ref, abs=1e-13)


@pytest.mark.parametrize("parity,ref", [("even", KAPPA_EVEN), ("odd", KAPPA_ODD)])
def test_internal_bisection_matches_oracle(parity, ref):
    assert linear_double_delta_kappa(A, V, parity) == pytest.approx(ref, abs=1e-13)


@pytest.mark.parametrize("branch,kappa", [("ground", KAPPA_EVEN), ("excited", KAPPA_ODD)])
def test_linear_states_match_oracle(grid, branch, kappa):
    st_ = find_state(WellSystem(A, V, 0.0, 0.0), -kappa**2 * 1.05, branch, grid=grid)
    assert st_.branch == branch
    assert abs(st_.mu - (-kappa**2)) < 1e-8


def test_jump_condition_at_delta():
    W = complex(-1.0, 0.3)
    tr = integrate_with_jumps(-0.4, (1.0, 0.2), [(0.5, W)], 0.0, 1.0, 1.0, h_max=1e-2)
    k = tr.jump_nodes[0]
    assert tr.x[k] == pytest.approx(0.5)
    assert tr.dpsi[k] - tr.dpsi_before[k] == pytest.approx(W * tr.psi[k], abs=1e-14)


def test_backward_jump_has_reversed_sign():
    W = complex(-1.0, 0.3)
    fwd = integrate_with_jumps(-0.4, (1.0, 0.2), [(0.5, W)], 0.0, 1.0, 1.0, h_max=1e-3)
    back = integrate_with_jumps(-0.4, (fwd.psi[-1], fwd.dpsi[-1]), [(0.5, W)], 1.0, 0.0, 1.0,
                                h_max=1e-3)
    assert back.psi[-1] == pytest.approx(1.0, abs=1e-10)
    assert back.dpsi[-1] == pytest.approx(0.2, abs=1e-10)


@given(st.floats(0.2, 1.2), st.floats(0.5, 2.0), st.floats(-3.0, 3.0))
@settings(max_examples=25)
def test_rk4_follows_soliton(kappa, g, x0):
    peak = np.sqrt(2 * kappa**2 / g)
    sol = lambda x: peak / np.cosh(kappa * (x - x0))
    dsol = lambda x: -kappa * sol(x) * np.tanh(kappa * (x - x0))
    tr = integrate_with_jumps(-kappa**2, (sol(-4.0), dsol(-4.0)), [], -4.0, 4.0, g, h_max=2e-3)
    assert np.max(np.abs(tr.psi - sol(tr.x))) < 1e-9 * max(1.0, peak)


def test_residual_layout_and_penalty(small_grid):
    w = WellSystem(A, V, 0.1, 1.0)
    r = shoot_residual([-0.5, 0.0, -10.0, -10.0, 0.0], w, small_grid)
    assert r.shape == (5,)
    bad = shoot_residual([0.5, 0.0, -10.0, -10.0, 0.0], w, small_grid)
    assert np.all(bad == 1e6)


def test_bad_guess_raises(small_grid):
    with pytest.raises(PTFeederError):
        find_state(WellSystem(A, V, 0.1, 1.0), mu_guess=0.3, grid=small_grid)
    with pytest.raises(NoConvergenceError):
        find_state(WellSystem(A, V, 0.1, 1.0), mu_guess=-40.0, grid=small_grid, max_iter=5)


@given(st.floats(0.0, 0.3))
@settings(max_examples=6)
def test_real_branch_states_are_pt_symmetric(gamma):
    grid = Grid.symmetric(30.0, 4096, anchor=A)
    for branch in ("ground", "excited"):
        s = seed_state(WellSystem(A, V, gamma, 1.0), branch, grid)
        rep = check_invariants(s)
        assert abs(s.mu.imag) < 1e-9
        assert rep["density_asymmetry"] < 1e-6
        # node 0 has no mirror partner on the periodic grid
        ref = pt_reflect(s.field).values[1:]
        assert np.max(np.abs(ref - s.field.values[1:])) < 1e-6 * np.max(np.abs(ref))


def test_ground_phase_difference_sign(small_grid):
    s = seed_state(WellSystem(A, V, 0.2, 1.0), "ground", small_grid)
    # the source sits at +a, so the phase lags there
    assert -0.5 * np.pi < phase_difference(s.field, A) < 0


def test_gap_closes_monotonically(small_grid):
    gam = np.arange(0.0, 0.381, 0.02)
    t = WellSystem(A, V, 0.0, 1.0)
    gr = trace_branch(t, gam, "ground", grid=small_grid)
    ex = trace_branch(t, gam, "excited", grid=small_grid)
    assert len(gr) == len(ex) == len(gam)
    gap = ex.mu_values.real - gr.mu_values.real
    assert np.all(gap > 0) and np.all(np.diff(gap) < 0)


def test_broken_pair_is_conjugate(small_grid):
    w = WellSystem(A, V, 0.42, 1.0)
    sp = find_state(w, complex(-0.35, 0.12), "broken_plus", grid=small_grid)
    assert sp.branch == "broken_plus"
    mirror = pt_reflect(sp.field)
    # the PT image seeds the partner state
    prob = ShootingProblem(w, small_grid)
    q = sp.params.copy()
    q[1] = -q[1]
    sm = find_state(w, grid=small_grid, guess_params=q, problem=prob)
    assert sm.branch == "broken_minus"
    assert abs(sm.mu - np.conj(sp.mu)) < 1e-9
    overlap = abs(np.vdot(mirror.values, sm.field.values)) / (
        np.linalg.norm(mirror.values) * np.linalg.norm(sm.field.values))
    assert overlap > 1 - 1e-8
