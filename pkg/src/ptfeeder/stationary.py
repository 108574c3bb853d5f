"""Stationary states of the GPE with the complex double-delta potential.

Away from the deltas ``psi'' = -(mu + g|psi|^2) psi``; across a delta of
strength ``W`` at ``x0`` psi is continuous and ``psi'`` jumps by
``W * psi(x0)``.

Bound states are found by two-sided shooting: both tails start at the grid
edges on the decaying soliton asymptotics and are integrated inwards (the
numerically stable direction) to the node at ``x = 0`` where value and
slope are matched. A unit-norm condition fixes the overall amplitude, which
the nonlinear problem otherwise leaves free.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np

from .core import ComplexField, Grid, PTFeederError, WellSystem, pt_deviation, wrap_phase

log = logging.getLogger(__name__)

BRANCHES = ("ground", "excited", "broken_plus", "broken_minus")
REAL_BRANCHES = ("ground", "excited")

DIVERGENCE_LIMIT = 1e12
PENALTY = 1e6
RESIDUAL_TOL = 1e-9
PAIR_TOL = 1e-12
# |Im mu| above this marks a PT-broken state
BROKEN_IM_THRESHOLD = 1e-7


class DivergenceError(PTFeederError):
    """Integration blew up (|psi| > 1e12): bad mu or initial condition."""

    def __init__(self, msg, x=None):
        super().__init__(msg)
        self.x = x


class NoConvergenceError(PTFeederError):
    pass


class InvariantError(PTFeederError):
    pass


class BracketError(PTFeederError):
    pass


# -- integrator --------------------------------------------------------------

@numba.njit(cache=True)
def _rk4_kernel(xs, jump_w, has_jump, psi0, dpsi0, mu, g, substeps,
                psi_out, dpsi_out, dpsi_pre):
    n = xs.shape[0]
    psi = psi0
    d = dpsi0
    psi_out[0] = psi
    dpsi_out[0] = d
    dpsi_pre[0] = d
    sgn = 1.0 if xs[n - 1] >= xs[0] else -1.0
    for i in range(1, n):
        h = (xs[i] - xs[i - 1]) / substeps
        for _ in range(substeps):
            a1 = psi
            b1 = -(mu + g * (a1.real * a1.real + a1.imag * a1.imag)) * a1
            k1p = d
            a2 = psi + 0.5 * h * k1p
            k2p = d + 0.5 * h * b1
            b2 = -(mu + g * (a2.real * a2.real + a2.imag * a2.imag)) * a2
            a3 = psi + 0.5 * h * k2p
            k3p = d + 0.5 * h * b2
            b3 = -(mu + g * (a3.real * a3.real + a3.imag * a3.imag)) * a3
            a4 = psi + h * k3p
            k4p = d + h * b3
            b4 = -(mu + g * (a4.real * a4.real + a4.imag * a4.imag)) * a4
            psi = psi + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            d = d + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        dpsi_pre[i] = d
        if has_jump[i]:
            d = d + sgn * jump_w[i] * psi
        psi_out[i] = psi
        dpsi_out[i] = d
        if not (abs(psi) < 1e12 and abs(d) < 1e12):
            return i
    return -1


@dataclass(frozen=True)
class Trajectory:
    """Solution at the integration nodes. ``dpsi`` holds the slope after
    any jump at a node, ``dpsi_before`` the slope on arrival."""

    x: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    dpsi_before: np.ndarray
    jump_nodes: np.ndarray


def nodes_with_deltas(base: np.ndarray, deltas: Sequence[tuple[float, complex]]):
    """Insert delta positions into a monotone node array.

    Returns ``(nodes, jump_w, has_jump, is_base)``. A delta closer than
    ``1e-9`` of the local spacing to an existing node is put on that node.
    Deltas at the first node are ignored (the caller sets the start slope).
    """
    base = np.asarray(base, dtype=float)
    n = len(base)
    forward = base[-1] >= base[0]
    nodes = list(base)
    is_base = [True] * n
    w = [0j] * n
    jump = [False] * n
    spacing = abs(base[1] - base[0]) if n > 1 else 1.0
    lo, hi = (base[0], base[-1]) if forward else (base[-1], base[0])
    for x0, strength in deltas:
        if not lo - 1e-9 * spacing <= x0 <= hi + 1e-9 * spacing:
            continue
        arr = np.asarray(nodes)
        j = int(np.argmin(np.abs(arr - x0)))
        if abs(arr[j] - x0) <= 1e-9 * spacing:
            if j == 0:
                continue
            w[j] += complex(strength)
            jump[j] = True
            continue
        # insertion index keeping monotone order
        if forward:
            k = int(np.searchsorted(arr, x0))
        else:
            k = int(np.searchsorted(-arr, -x0))
        nodes.insert(k, float(x0))
        is_base.insert(k, False)
        w.insert(k, complex(strength))
        jump.insert(k, True)
    return (np.asarray(nodes), np.asarray(w, dtype=complex),
            np.asarray(jump, dtype=bool), np.asarray(is_base, dtype=bool))


def _uniform_nodes(x_start: float, x_end: float, deltas, h_max: float) -> np.ndarray:
    forward = x_end >= x_start
    inner = sorted((x0 for x0, _ in deltas
                    if min(x_start, x_end) < x0 < max(x_start, x_end)),
                   reverse=not forward)
    cuts = [x_start, *inner, x_end]
    pieces = []
    for u, v in zip(cuts[:-1], cuts[1:]):
        m = max(1, int(np.ceil(abs(v - u) / h_max)))
        pieces.append(np.linspace(u, v, m + 1)[:-1])
    pieces.append(np.array([x_end]))
    return np.concatenate(pieces)


def integrate_with_jumps(mu: complex, y0: tuple[complex, complex],
                         deltas: Sequence[tuple[float, complex]],
                         x_start: float, x_end: float, g: float,
                         h_max: float = 5e-3, nodes: np.ndarray | None = None,
                         substeps: int = 1) -> Trajectory:
    """Fixed-step RK4 from ``x_start`` to ``x_end`` with delta jumps.

    Either ``h_max`` (uniform steps, deltas placed on nodes) or explicit
    ``nodes`` (deltas inserted where missing) define the mesh.
    """
    if nodes is None:
        base = _uniform_nodes(x_start, x_end, deltas, h_max)
    else:
        base = np.asarray(nodes, dtype=float)
    xs, w, has_jump, _ = nodes_with_deltas(base, deltas)
    n = len(xs)
    psi = np.empty(n, dtype=complex)
    dpsi = np.empty(n, dtype=complex)
    pre = np.empty(n, dtype=complex)
    bad = _rk4_kernel(xs, w, has_jump, complex(y0[0]), complex(y0[1]), complex(mu),
                      float(g), int(substeps), psi, dpsi, pre)
    if bad >= 0:
        raise DivergenceError(f"|psi| exceeded {DIVERGENCE_LIMIT:g} at x={xs[bad]:.6g}",
                              x=float(xs[bad]))
    return Trajectory(xs, psi, dpsi, pre, np.flatnonzero(has_jump))


def tail_log_derivative(mu: complex, amp2: float, g: float) -> complex:
    """Decay rate ``lambda`` with ``psi'/psi = +lambda`` on a left tail.

    Exact for the bright soliton at real mu:
    ``lambda = kappa sqrt(1 - g|psi|^2 / (2 kappa^2))``, ``kappa^2 = -mu``.
    """
    return complex(np.sqrt(complex(-mu - 0.5 * g * amp2)))


# -- shooting problem ----------------------------------------------------------

@dataclass
class ShootingProblem:
    """Two-sided shooting formulation on a grid.

    Unknowns (5 reals), in order::

        mu_re, mu_im             chemical potential
        rho_left                 ln|psi(x_min)|, psi(x_min) real > 0 (gauge)
        rho_right, theta_right   psi(x_last) = exp(rho_right + i theta_right)

    Residual components::

        Re, Im of psi_left(0)  - psi_right(0)
        Re, Im of psi'_left(0) - psi'_right(0)
        sum |psi|^2 dx - norm
    """

    system: WellSystem
    grid: Grid
    norm: float = 1.0
    substeps: int = 1

    def __post_init__(self):
        grid = self.grid
        x = grid.x
        mid = int(np.argmin(np.abs(x)))
        if not (self.system.a < -x[0] and self.system.a < x[-1]):
            raise PTFeederError("grid does not contain both wells")
        self.mid = mid
        deltas = self.system.deltas()
        self._left = nodes_with_deltas(x[: mid + 1], deltas)
        self._right = nodes_with_deltas(x[mid:][::-1], deltas)
        self._bufs = {}

    @property
    def n_params(self) -> int:
        return 5

    def _sweep(self, which, psi0, dpsi0, mu):
        xs, w, has_jump, is_base = self._left if which == "L" else self._right
        n = len(xs)
        if which not in self._bufs:
            self._bufs[which] = tuple(np.empty(n, dtype=complex) for _ in range(3))
        psi, dpsi, pre = self._bufs[which]
        bad = _rk4_kernel(xs, w, has_jump, psi0, dpsi0, mu, float(self.system.g),
                          self.substeps, psi, dpsi, pre)
        return bad, psi, dpsi, is_base

    def _endpoints(self, q):
        mu = complex(q[0], q[1])
        g = self.system.g
        aL = np.exp(q[2])
        aR = np.exp(q[3])
        lamL = tail_log_derivative(mu, aL * aL, g)
        lamR = tail_log_derivative(mu, aR * aR, g)
        psiL = complex(aL)
        psiR = aR * np.exp(1j * q[4])
        return mu, psiL, lamL * psiL, psiR, -lamR * psiR, lamL, lamR

    def residual(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if not np.all(np.isfinite(q)) or q[2] > 30 or q[3] > 30:
            return np.full(5, PENALTY)
        mu, psiL, dL, psiR, dR, lamL, lamR = self._endpoints(q)
        if lamL.real <= 0 or lamR.real <= 0:
            return np.full(5, PENALTY)
        badL, pL, dpL, baseL = self._sweep("L", psiL, dL, mu)
        if badL >= 0:
            return np.full(5, PENALTY)
        badR, pR, dpR, baseR = self._sweep("R", psiR, dR, mu)
        if badR >= 0:
            return np.full(5, PENALTY)
        dv = pL[-1] - pR[-1]
        dd = dpL[-1] - dpR[-1]
        nrm = (np.sum(np.abs(pL[baseL]) ** 2) + np.sum(np.abs(pR[baseR][:-1]) ** 2)) * self.grid.dx
        return np.array([dv.real, dv.imag, dd.real, dd.imag, nrm - self.norm])

    def field(self, q) -> ComplexField:
        mu, psiL, dL, psiR, dR, _, _ = self._endpoints(q)
        badL, pL, _, baseL = self._sweep("L", psiL, dL, mu)
        valsL = pL[baseL].copy()
        badR, pR, _, baseR = self._sweep("R", psiR, dR, mu)
        valsR = pR[baseR][::-1].copy()
        if badL >= 0 or badR >= 0:
            raise DivergenceError("integration diverged while sampling the field")
        vals = np.concatenate([valsL, valsR[1:]])
        return ComplexField(self.grid, vals)

    def initial_params(self, mu_guess: complex, branch: str, amplitude: float = 0.5):
        kappa = np.sqrt(complex(-mu_guess)).real
        kappa = max(kappa, 1e-3)
        x = self.grid.x
        a = self.system.a
        rhoL = np.log(amplitude) - kappa * (-x[0] - a)
        rhoR = np.log(amplitude) - kappa * (x[-1] - a)
        theta = np.pi if branch == "excited" else 0.0
        return np.array([complex(mu_guess).real, complex(mu_guess).imag, rhoL, rhoR, theta])


def shoot_residual(params, system: WellSystem, grid: Grid | None = None) -> np.ndarray:
    """Matching residual of :class:`ShootingProblem` (layout documented there).

    Divergent shots give a finite penalty vector instead of raising.
    """
    return ShootingProblem(system, grid or default_grid(system)).residual(params)


def default_grid(system: WellSystem | None = None, half_width: float = 40.0,
                 n_bins: int = 16384) -> Grid:
    """Symmetric grid with the wells on nodes."""
    a = system.a if system is not None else None
    return Grid.symmetric(half_width, n_bins, anchor=a)


# -- Newton --------------------------------------------------------------------

@dataclass
class NewtonResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool


def damped_newton(fun: Callable[[np.ndarray], np.ndarray], x0, tol: float = RESIDUAL_TOL,
                  max_iter: int = 100, fd_rel: float = 1e-7,
                  max_step: np.ndarray | None = None) -> NewtonResult:
    """Newton with a forward-difference Jacobian and backtracking."""
    x = np.array(x0, dtype=float)
    r = fun(x)
    nr = np.linalg.norm(r)
    for it in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return NewtonResult(x, r, it, True)
        J = np.empty((len(r), len(x)))
        for j in range(len(x)):
            h = fd_rel * (1.0 + abs(x[j]))
            xp = x.copy()
            xp[j] += h
            J[:, j] = (fun(xp) - r) / h
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -r, rcond=None)[0]
        if max_step is not None:
            s = np.max(np.abs(dx) / max_step)
            if s > 1.0:
                dx /= s
        t = 1.0
        while True:
            xn = x + t * dx
            rn = fun(xn)
            nrn = np.linalg.norm(rn)
            if nrn < (1.0 - 1e-4 * t) * nr or np.max(np.abs(rn)) < tol:
                break
            t *= 0.5
            if t < 1e-6:
                return NewtonResult(x, r, it, False)
        x, r, nr = xn, rn, nrn
    return NewtonResult(x, r, max_iter, bool(np.max(np.abs(r)) < tol))


# -- states ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StationaryState:
    system: WellSystem
    mu: complex
    field: ComplexField
    branch: str
    residual: float
    params: np.ndarray = field(repr=False)

    @property
    def is_pt_symmetric(self) -> bool:
        return self.branch in REAL_BRANCHES

    @property
    def kappa(self) -> float:
        return float(np.sqrt(-self.mu.real))


def phase_difference(field: ComplexField, a: float) -> float:
    """``arg psi(a) - arg psi(-a)`` wrapped to ``(-pi, pi]``."""
    return wrap_phase(np.angle(field(a)) - np.angle(field(-a)))


def classify_branch(mu: complex, field: ComplexField, a: float) -> str:
    if abs(mu.imag) > BROKEN_IM_THRESHOLD:
        return "broken_plus" if mu.imag > 0 else "broken_minus"
    return "ground" if abs(phase_difference(field, a)) < 0.5 * np.pi else "excited"


def _pt_gauge(field: ComplexField) -> ComplexField:
    """Rotate so that ``conj(psi(-x)) = psi(x)`` and psi(0) has Re >= 0."""
    from .core import pt_reflect

    z = np.vdot(field.values, pt_reflect(field).values)
    rot = np.exp(0.5j * np.angle(z))
    f = field.scaled(rot)
    c = f.values[int(np.argmin(np.abs(f.x)))]
    ref = c if abs(c) > 1e-3 * np.max(np.abs(f.values)) else f.values[np.argmax(np.abs(f.values))]
    if (ref * 1).real < 0 or (abs(ref.real) < 1e-14 and ref.imag < 0):
        f = f.scaled(-1.0)
    return f


def check_invariants(state: StationaryState, strict: bool = True) -> dict:
    """Evaluate the state invariants; raise :class:`InvariantError` if
    ``strict`` and one fails."""
    f = state.field
    v = f.values
    amax = np.max(np.abs(v))
    dens = np.abs(v) ** 2
    from .core import pt_reflect

    asym = float(np.max(np.abs(dens - np.abs(pt_reflect(f).values) ** 2)) / amax**2)
    kappa_re = np.sqrt(complex(-state.mu)).real
    edge = max(abs(v[0]), abs(v[-1])) / amax
    x = f.x
    # expected tail ratio from the exponential envelope, generous prefactor
    envelope = 10.0 * np.exp(-kappa_re * (min(-x[0], x[-1]) - state.system.a))
    report = {
        "residual": state.residual,
        "im_mu": abs(state.mu.imag),
        "density_asymmetry": asym,
        "edge_ratio": float(edge),
        "edge_envelope": float(envelope),
    }
    problems = []
    if state.residual >= RESIDUAL_TOL:
        problems.append(f"residual {state.residual:.3e}")
    if state.is_pt_symmetric:
        if abs(state.mu.imag) >= 1e-9:
            problems.append(f"|Im mu| = {abs(state.mu.imag):.3e} on a real branch")
        if asym >= 1e-6:
            problems.append(f"|psi|^2 asymmetry {asym:.3e}")
    if not (edge < 1e-8 or edge < envelope):
        problems.append(f"field does not decay at the grid edge (ratio {edge:.3e})")
    if strict and problems:
        raise InvariantError("; ".join(problems))
    report["problems"] = problems
    return report


def _solve(problem: ShootingProblem, q0, max_iter=100, tol=RESIDUAL_TOL) -> NewtonResult:
    max_step = np.array([0.2, 0.2, 2.0, 2.0, 1.0])
    return damped_newton(problem.residual, q0, tol=tol, max_iter=max_iter, max_step=max_step)


def find_state(system: WellSystem, mu_guess: complex = -0.5, branch_hint: str = "ground",
               grid: Grid | None = None, guess_params=None, check: bool = True,
               max_iter: int = 100, problem: ShootingProblem | None = None,
               tol: float = RESIDUAL_TOL) -> StationaryState:
    """Converge a stationary state from ``mu_guess`` (or explicit shooting
    parameters from a neighbouring solution)."""
    if branch_hint not in BRANCHES:
        raise ValueError(f"unknown branch {branch_hint!r}")
    if problem is None:
        problem = ShootingProblem(system, grid or default_grid(system))
    if guess_params is None:
        if complex(mu_guess).real >= 0:
            raise PTFeederError("mu_guess must have Re mu < 0 for a bound state")
        q0 = problem.initial_params(mu_guess, branch_hint)
        if branch_hint in ("broken_plus", "broken_minus") and abs(complex(mu_guess).imag) < 1e-6:
            q0[1] = 1e-2 if branch_hint == "broken_plus" else -1e-2
    else:
        q0 = np.asarray(guess_params, dtype=float)
    res = _solve(problem, q0, max_iter=max_iter, tol=tol)
    if not res.converged:
        raise NoConvergenceError(
            f"no convergence from mu={complex(q0[0], q0[1]):.6g} "
            f"(|r|={np.max(np.abs(res.residual)):.3e} after {res.iterations} iterations)")
    q = res.x
    mu = complex(q[0], q[1])
    fld = problem.field(q)
    label = classify_branch(mu, fld, system.a)
    if label in REAL_BRANCHES and abs(mu.imag) > 1e-10 and tol > PAIR_TOL:
        # a 1e-9 residual leaves Im mu of the same order; polish once more
        fine = _solve(problem, q, max_iter=20, tol=PAIR_TOL)
        if fine.converged:
            res, q = fine, fine.x
            mu = complex(q[0], q[1])
            fld = problem.field(q)
    if label in REAL_BRANCHES:
        fld = _pt_gauge(fld)
    state = StationaryState(system, mu, fld, label, float(np.max(np.abs(res.residual))), q)
    if check:
        check_invariants(state)
    return state


def relabel(state: StationaryState, branch: str) -> StationaryState:
    return StationaryState(state.system, state.mu, state.field, branch,
                           state.residual, state.params)


# -- linear oracle -------------------------------------------------------------

def linear_double_delta_kappa(a: float, V: float, parity: str) -> float:
    """Decay constant of the Hermitian (Gamma = 0, g = 0) double-delta bound
    state by bisection on ``2 kappa = -V (1 +- exp(-2 kappa a))``."""
    s = 1.0 if parity == "even" else -1.0

    def f(k):
        return 2.0 * k + V * (1.0 + s * np.exp(-2.0 * k * a))

    lo, hi = 1e-12, -V * 2.0 + 1.0
    if f(lo) * f(hi) > 0:
        raise BracketError(f"no {parity} bound state for a={a}, V={V}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# -- continuation ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectrumBranch:
    branch: str
    gamma_values: np.ndarray
    mu_values: np.ndarray
    states: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.gamma_values)


@dataclass(frozen=True)
class CriticalPoints:
    gamma_c: float
    gamma_c_star: float
    bracket_width: float
    gamma_c_bracket: tuple[float, float] = (np.nan, np.nan)
    gamma_c_star_bracket: tuple[float, float] = (np.nan, np.nan)
    # converged broken_plus state at the upper end of the Gamma_c* bracket
    broken_state: "StationaryState | None" = field(default=None, repr=False, compare=False)


def seed_state(system: WellSystem, branch: str = "ground", grid: Grid | None = None,
               g_steps: int = 8, gamma_step: float = 0.02) -> StationaryState:
    """Converged real-branch state at ``system`` reached by continuation from
    the analytic Hermitian linear state (g = 0, Gamma = 0)."""
    if branch not in REAL_BRANCHES:
        raise ValueError("seeds are built for the real branches only")
    grid = grid or default_grid(system)
    parity = "even" if branch == "ground" else "odd"
    kappa = linear_double_delta_kappa(system.a, system.V, parity)
    base = WellSystem(system.a, system.V, 0.0, 0.0)
    state = find_state(base, -kappa**2, branch, grid=grid, check=False)
    for g in np.linspace(0.0, system.g, g_steps + 1)[1:]:
        state = find_state(base.with_g(g), branch_hint=branch, grid=grid,
                           guess_params=state.params, check=False)
    if system.gamma != 0.0:
        n = max(1, int(np.ceil(abs(system.gamma) / gamma_step)))
        out = trace_branch(base.with_g(system.g), np.linspace(0.0, system.gamma, n + 1),
                           branch, grid=grid, seed=relabel(state, branch))
        if len(out) != n + 1:
            raise NoConvergenceError(f"{branch} branch ends before Gamma={system.gamma}")
        state = out.states[-1]
    return find_state(system, branch_hint=branch, grid=grid, guess_params=state.params)


def _continue_to(template: WellSystem, grid: Grid, prev, target: float, branch: str,
                 min_step: float, history):
    """Advance from ``prev = (gamma, params, mu)`` to ``target`` with step
    halving. Returns the state at ``target`` or None."""
    gp, qp, mup = prev
    cur_g, cur_q, cur_mu = gp, qp, mup
    step = target - gp
    hist = list(history)
    while True:
        trial = min(cur_g + step, target) if step > 0 else max(cur_g + step, target)
        guess = cur_q
        pred_mu = None
        if hist:
            g0, q0, mu0 = hist[-1]
            if g0 != cur_g:
                slope = (trial - cur_g) / (cur_g - g0)
                guess = cur_q + slope * (cur_q - q0)
                pred_mu = cur_mu + slope * (cur_mu - mu0)
        ok = None
        try:
            st = find_state(template.with_gamma(trial), branch_hint=branch, grid=grid,
                            guess_params=guess, check=False)
            if branch in REAL_BRANCHES and st.branch not in REAL_BRANCHES:
                raise NoConvergenceError("left the real branch")
            if branch not in REAL_BRANCHES and st.branch in REAL_BRANCHES:
                raise NoConvergenceError("collapsed onto a real branch")
            if pred_mu is not None:
                dev = abs(st.mu - pred_mu)
                if dev > 2.0 * abs(pred_mu - cur_mu) + 1e-7:
                    raise NoConvergenceError("jumped branch")
            ok = st
        except (NoConvergenceError, DivergenceError, InvariantError):
            ok = None
        if ok is not None:
            hist.append((cur_g, cur_q, cur_mu))
            cur_g, cur_q, cur_mu = trial, ok.params, ok.mu
            if trial == target:
                return ok, hist
            step *= 1.5
        else:
            step *= 0.5
            if abs(step) < min_step:
                return None, hist


def trace_branch(template: WellSystem, gamma_range, branch: str, grid: Grid | None = None,
                 seed: StationaryState | None = None, min_step: float = 1e-6) -> SpectrumBranch:
    """Natural-parameter continuation in Gamma along one branch.

    Stops at the first requested Gamma that cannot be reached even with
    steps down to ``min_step``.
    """
    gammas = np.asarray(list(gamma_range), dtype=float)
    if len(gammas) == 0:
        return SpectrumBranch(branch, np.array([]), np.array([], dtype=complex))
    if np.any(np.diff(gammas) <= 0):
        raise ValueError("gamma_range must be strictly increasing")
    grid = grid or default_grid(template)
    if seed is None:
        seed = seed_state(template.with_gamma(gammas[0]), branch, grid)
    if seed.residual >= RESIDUAL_TOL or not np.isclose(seed.system.gamma, gammas[0], atol=1e-12):
        raise NoConvergenceError("seed state is not converged at the start of gamma_range")
    states = [relabel(seed, branch)]
    hist = []
    prev = (gammas[0], seed.params, seed.mu)
    for gt in gammas[1:]:
        st, hist = _continue_to(template, grid, prev, gt, branch, min_step, hist[-2:])
        if st is None:
            break
        states.append(relabel(st, branch))
        prev = (gt, st.params, st.mu)
    gs = np.array([s.system.gamma for s in states])
    return SpectrumBranch(branch, gs, np.array([s.mu for s in states]), tuple(states))


def _real_exists(template, grid, gamma, seeds) -> StationaryState | None:
    for q in seeds:
        try:
            st = find_state(template.with_gamma(gamma), grid=grid, guess_params=q, check=False)
        except (NoConvergenceError, DivergenceError):
            continue
        if st.branch in REAL_BRANCHES:
            return st
    return None


def _broken_exists(template, grid, gamma, seeds) -> StationaryState | None:
    for q in seeds:
        try:
            st = find_state(template.with_gamma(gamma), branch_hint="broken_plus", grid=grid,
                            guess_params=q, check=False)
        except (NoConvergenceError, DivergenceError):
            continue
        if st.branch == "broken_plus":
            return st
    return None


def _broken_search(template, grid, gamma, bases) -> StationaryState | None:
    """Try a small fan of perturbed guesses around ``bases``."""
    for base in bases:
        for im in (1e-1, 3e-2, 1e-2, 3e-1, 1e-3):
            for dr in (0.0, 0.5, -0.5, 1.0, -1.0):
                q = np.array(base, dtype=float)
                q[1] = im
                q[2] += dr
                q[3] -= dr
                st = _broken_exists(template, grid, gamma, [q])
                if st is not None:
                    return st
    return None


def locate_critical(template: WellSystem, grid: Grid | None = None, gamma_max: float = 2.0,
                    coarse_step: float = 0.01, tol: float = 1e-5,
                    initial_bracket: tuple[float, float] | None = None) -> CriticalPoints:
    """Gamma_c (end of the real branches) and Gamma_c* (onset of the
    PT-broken pair), each by bisection on existence to width ``tol``."""
    grid = grid or default_grid(template)
    base = template.with_gamma(0.0)
    gr = seed_state(base, "ground", grid)
    ex = seed_state(base, "excited", grid)

    # march both real branches with coarse steps; the last common success and
    # the first failure bracket Gamma_c
    lo, hi = 0.0, None
    q_gr, q_ex = gr.params, ex.params
    last = {"ground": gr, "excited": ex}
    if initial_bracket is not None:
        lo_b, hi_b = initial_bracket
        br = trace_branch(template, np.linspace(0.0, lo_b, max(2, int(np.ceil(lo_b / 0.02)) + 1)),
                          "ground", grid, seed=gr)
        bx = trace_branch(template, br.gamma_values, "excited", grid, seed=ex)
        if len(br) != len(bx) or br.gamma_values[-1] != lo_b:
            raise BracketError("real branches do not reach the lower end of the bracket")
        last = {"ground": br.states[-1], "excited": bx.states[-1]}
        lo, hi = lo_b, hi_b
    else:
        gamma = 0.0
        while gamma < gamma_max:
            nxt = min(gamma + coarse_step, gamma_max)
            sg, _ = _continue_to(template, grid, (gamma, last["ground"].params, last["ground"].mu),
                                 nxt, "ground", coarse_step / 64, [])
            se, _ = _continue_to(template, grid, (gamma, last["excited"].params, last["excited"].mu),
                                 nxt, "excited", coarse_step / 64, [])
            if sg is None or se is None:
                hi = nxt
                break
            last = {"ground": sg, "excited": se}
            gamma = lo = nxt
        if hi is None:
            raise BracketError(f"real branches do not merge below Gamma={gamma_max}")

    def seeds():
        return [last["ground"].params, last["excited"].params,
                0.5 * (last["ground"].params + last["excited"].params)]

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        st = _real_exists(template, grid, mid, seeds())
        if st is None:
            hi = mid
        else:
            # keep one seed per branch: replace the closer one
            dg = abs(st.mu - last["ground"].mu)
            de = abs(st.mu - last["excited"].mu)
            last["ground" if dg <= de else "excited"] = st
            other = "excited" if dg <= de else "ground"
            st2 = _real_exists(template, grid, mid, [last[other].params])
            if st2 is not None and abs(st2.mu - st.mu) > 0:
                last[other] = st2
            lo = mid
    gamma_c_lo, gamma_c_hi = lo, hi
    gamma_c = 0.5 * (lo + hi)

    # broken pair: for g = 0 it appears at Gamma_c, for g > 0 it branches off
    # the ground state below Gamma_c; try the highest real states as seeds
    broken, g_start = None, None
    for gamma_try in (gamma_c_lo, gamma_c_hi + 10 * tol, gamma_c_hi + 1e-3, gamma_c_hi + 5e-3,
                      gamma_c_hi + 2e-2):
        broken = _broken_search(template, grid, gamma_try,
                                [last["ground"].params, last["excited"].params])
        if broken is not None:
            g_start = gamma_try
            break
    if broken is None:
        raise BracketError("no PT-broken state found near Gamma_c")
    b_hi = g_start
    b_lo = None
    step = coarse_step
    cur = broken
    history = []
    while b_lo is None:
        trial = b_hi - step
        if trial <= 0.0:
            b_lo = 0.0
            break
        st, history = _continue_to(template, grid, (b_hi, cur.params, cur.mu), trial,
                                   "broken_plus", step / 64, history[-2:])
        if st is None:
            b_lo = trial
        else:
            cur, b_hi = st, trial
    while b_hi - b_lo > tol:
        mid = 0.5 * (b_lo + b_hi)
        st = _broken_exists(template, grid, mid, [cur.params])
        if st is None:
            b_lo = mid
        else:
            cur, b_hi = st, mid
    gamma_c_star = 0.5 * (b_lo + b_hi)
    width = max(gamma_c_hi - gamma_c_lo, b_hi - b_lo)
    cp = CriticalPoints(gamma_c, gamma_c_star, width, (gamma_c_lo, gamma_c_hi), (b_lo, b_hi),
                        relabel(cur, "broken_plus"))
    if template.g > 0 and not cp.gamma_c_star < cp.gamma_c:
        raise InvariantError(f"expected Gamma_c* < Gamma_c for g > 0, got {cp}")
    return cp


def mirror_broken(state: StationaryState, problem: ShootingProblem | None = None,
                  tol: float = RESIDUAL_TOL) -> StationaryState:
    """Partner of a PT-broken state, converged from the conjugated guess."""
    mu_re, mu_im, rho_l, rho_r, theta_r = np.array(state.params, dtype=float)
    # conj(psi(-x)) swaps the tails; re-gauge so the left tail stays real
    q = np.array([mu_re, -mu_im, rho_r, rho_l, theta_r])
    st = find_state(state.system, grid=state.field.grid, guess_params=q, check=False,
                    problem=problem, tol=tol)
    if st.branch not in ("broken_plus", "broken_minus") or np.sign(st.mu.imag) == np.sign(state.mu.imag):
        raise NoConvergenceError("mirrored guess did not converge to the partner state")
    return st


def spectrum_sweep(template: WellSystem, gammas, grid: Grid | None = None,
                   critical: CriticalPoints | None = None) -> dict[str, SpectrumBranch]:
    """All four branches over a Gamma grid; each branch covers the part of
    the grid where it exists."""
    gammas = np.asarray(list(gammas), dtype=float)
    grid = grid or default_grid(template)
    out = {b: trace_branch(template, gammas, b, grid) for b in REAL_BRANCHES}
    if critical is None:
        critical = locate_critical(template, grid)
    seed = critical.broken_state
    above = gammas[gammas > seed.system.gamma]
    plus = trace_branch(template, np.concatenate([[seed.system.gamma], above]), "broken_plus",
                        grid, seed=seed)
    keep = slice(1, None)
    # polish the pairs beyond the default tolerance so that conj(mu+) = mu-
    # holds well below it
    plus_states = tuple(relabel(find_state(s_.system, grid=grid, guess_params=s_.params,
                                           check=False, tol=PAIR_TOL), "broken_plus")
                        for s_ in plus.states[keep])
    minus_states = tuple(relabel(mirror_broken(s_, tol=PAIR_TOL), "broken_minus")
                         for s_ in plus_states)
    for name, states in (("broken_plus", plus_states), ("broken_minus", minus_states)):
        out[name] = SpectrumBranch(name, np.array([s_.system.gamma for s_ in states]),
                                   np.array([s_.mu for s_ in states], dtype=complex), states)
    return out
