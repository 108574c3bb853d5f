"""Hermitian environments ("feeders") that stand in for the imaginary parts
of the double-delta potential.

A feeder ``psi_e`` coupled to the system ``psi_s`` at ``x0`` with real
strength ``gamma`` reproduces a potential ``i*G*delta(x - x0)`` for the
system when ``i*G = gamma * psi_e(x0) / psi_s(x0)``. The feeder then sees
``V - i*G*|psi_s(x0)/psi_e(x0)|^2`` at the same point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import (ComplexField, Grid, PTFeederError, WellSystem, current_profile,
                   wrap_phase)
from .stationary import (REAL_BRANCHES, RESIDUAL_TOL, BracketError, NoConvergenceError,
                         StationaryState, find_state, integrate_with_jumps, locate_critical,
                         seed_state, trace_branch, _continue_to)

log = logging.getLogger(__name__)

COUPLING_TOL = 1e-8
PHASE_TOL = 1e-6


class AmplitudeRangeError(PTFeederError):
    pass


class RootNotBracketedError(PTFeederError):
    pass


class LocusError(PTFeederError):
    pass


# -- soliton -------------------------------------------------------------------

@dataclass(frozen=True)
class SolitonParams:
    """Bright soliton ``sqrt(2 kappa^2 / g) sech(kappa (x - x_tilde))``."""

    kappa: float
    x_tilde: float = 0.0
    g: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise PTFeederError(f"kappa must be positive, got {self.kappa}")
        if not self.g > 0:
            raise PTFeederError("bright solitons need an attractive interaction (g > 0)")

    @classmethod
    def from_mu(cls, mu: complex, g: float, x_tilde: float = 0.0) -> "SolitonParams":
        return cls(float(np.sqrt(-complex(mu).real)), x_tilde, g)

    @property
    def peak(self) -> float:
        return float(np.sqrt(2.0 * self.kappa**2 / self.g))

    @property
    def mu(self) -> float:
        return -self.kappa**2


def soliton_value(p: SolitonParams, x):
    return p.peak / np.cosh(p.kappa * (np.asarray(x) - p.x_tilde))


def _check_value(value: float, p: SolitonParams) -> float:
    peak = p.peak
    if not 0.0 < value <= peak * (1.0 + 1e-12):
        raise AmplitudeRangeError(f"value {value} outside (0, {peak}]")
    return min(value, peak)


def soliton_derivative_from_value(value: float, p: SolitonParams, side: str = "left") -> float:
    """Slope of the soliton from its value alone.

    ``side='left'`` is the rising flank (x < x_tilde, positive slope),
    ``'right'`` the falling one.
    """
    value = _check_value(value, p)
    slope = p.kappa * value * np.sqrt(max(0.0, 1.0 - p.g * value**2 / (2.0 * p.kappa**2)))
    if side == "left":
        return float(slope)
    if side == "right":
        return -float(slope)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def soliton_center_for_value(value: float, kappa: float, g: float, x0: float,
                             side: str = "left") -> float:
    """Peak position putting ``value`` at ``x0`` on the requested flank."""
    p = SolitonParams(kappa, 0.0, g)
    value = _check_value(value, p)
    shift = np.arccosh(p.peak / value) / kappa
    return float(x0 + shift if side == "left" else x0 - shift)


# -- coupling conditions -----------------------------------------------------------

def _ratio(psi_sys: complex, psi_env: complex) -> float:
    if abs(psi_env) <= 1e-12:
        raise PTFeederError(f"environment amplitude {abs(psi_env):.3e} vanishes at the coupling point")
    return abs(psi_sys) / abs(psi_env)


def coupling_gamma(psi_sys_at_x0: complex, psi_env_at_x0: complex, Gamma: float) -> float:
    """Positive coupling strength ``|Gamma| |psi_sys| / |psi_env|``.

    The sign of ``Gamma`` (source or drain) is absorbed into the phase
    relation, see :func:`required_phase_offset`.
    """
    return abs(Gamma) * _ratio(psi_sys_at_x0, psi_env_at_x0)


def required_phase_offset(Gamma: float) -> float:
    """``arg psi_env - arg psi_sys`` at the coupling point for gamma > 0."""
    return (0.5 if Gamma >= 0 else -0.5) * np.pi


def effective_env_potential(psi_sys_at_x0: complex, psi_env_at_x0: complex, V: float,
                            Gamma: float) -> complex:
    """Delta strength felt by the environment: ``V - i Gamma |psi_s/psi_e|^2``."""
    return complex(V, -Gamma * _ratio(psi_sys_at_x0, psi_env_at_x0) ** 2)


def coupling_residual(Gamma: float, gamma: float, psi_sys_at_x0: complex,
                      psi_env_at_x0: complex) -> float:
    """``|i Gamma - gamma psi_env / psi_sys|``."""
    return float(abs(1j * Gamma - gamma * psi_env_at_x0 / psi_sys_at_x0))


# -- coupled systems -----------------------------------------------------------------

@dataclass(frozen=True)
class CouplingPoint:
    """Linear coupling ``gamma`` between waves ``partner_indices = (system,
    environment)`` at ``x0``, replacing ``i*gamma_target`` on the system."""

    x0: float
    gamma: float
    partner_indices: tuple[int, int]
    gamma_target: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise PTFeederError("coupling strengths are kept non-negative")
        if self.gamma_target != 0.0 and not self.gamma > 0:
            raise PTFeederError("a non-zero imaginary target needs gamma > 0")


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    """Closed Hermitian system of ``waves`` sharing ``mu``.

    ``wells[i]`` lists the real ``(x0, V)`` deltas felt by wave ``i``.
    """

    waves: tuple[ComplexField, ...]
    mu: complex
    couplings: tuple[CouplingPoint, ...]
    wells: tuple[tuple[tuple[float, float], ...], ...]
    g: float
    names: tuple[str, ...] = ()
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        grids = {w.grid for w in self.waves}
        if len(grids) != 1:
            raise PTFeederError("all waves must share one grid")
        if len(self.wells) != len(self.waves):
            raise PTFeederError("one well list per wave")

    @property
    def grid(self) -> Grid:
        return self.waves[0].grid

    def values_at(self, i: int, x0: float) -> complex:
        return self.waves[i](x0)

    def coupling_residuals(self) -> list[float]:
        out = []
        for c in self.couplings:
            s, e = c.partner_indices
            out.append(coupling_residual(c.gamma_target, c.gamma, self.values_at(s, c.x0),
                                         self.values_at(e, c.x0)))
        return out

    def phase_errors(self) -> list[float]:
        out = []
        for c in self.couplings:
            s, e = c.partner_indices
            if c.gamma_target == 0.0:
                out.append(0.0)
                continue
            d = wrap_phase(np.angle(self.values_at(e, c.x0)) - np.angle(self.values_at(s, c.x0)))
            out.append(abs(abs(d) - 0.5 * np.pi))
        return out

    def effective_strengths(self) -> list[tuple[complex, complex]]:
        """Imaginary delta strength each partner experiences through the coupling,
        ``(system, environment)`` per coupling point."""
        out = []
        for c in self.couplings:
            s, e = c.partner_indices
            ps, pe = self.values_at(s, c.x0), self.values_at(e, c.x0)
            out.append((c.gamma * pe / ps, c.gamma * ps / pe))
        return out

    def flux_exchange(self) -> list[tuple[float, float]]:
        """Particle flux gained by (system, environment) at each coupling point,
        ``2 |psi|^2 Im W``; the pair sums to zero in a closed system."""
        out = []
        for c, (ws, we) in zip(self.couplings, self.effective_strengths()):
            s, e = c.partner_indices
            ps, pe = self.values_at(s, c.x0), self.values_at(e, c.x0)
            out.append((2.0 * abs(ps) ** 2 * ws.imag, 2.0 * abs(pe) ** 2 * we.imag))
        return out

    def check(self, coupling_tol: float = COUPLING_TOL, phase_tol: float = PHASE_TOL) -> None:
        res = self.coupling_residuals()
        ph = self.phase_errors()
        bad = [f"coupling residual {r:.3e} at x0={c.x0}" for r, c in zip(res, self.couplings)
               if r >= coupling_tol]
        bad += [f"phase error {p:.3e} at x0={c.x0}" for p, c in zip(ph, self.couplings)
                if p >= phase_tol]
        if bad:
            raise PTFeederError("; ".join(bad))

    def manifest(self) -> dict:
        return {
            "mu": [self.mu.real, self.mu.imag],
            "g": self.g,
            "couplings": [{"x0": c.x0, "gamma": c.gamma, "waves": list(c.partner_indices),
                           "gamma_target": c.gamma_target} for c in self.couplings],
            "coupling_residuals": self.coupling_residuals(),
            "phase_errors": self.phase_errors(),
            **self.info,
        }


def _require_converged(state: StationaryState):
    if state.residual >= RESIDUAL_TOL:
        raise NoConvergenceError(f"state residual {state.residual:.3e} is not converged")
    if state.branch not in REAL_BRANCHES:
        raise PTFeederError("feeders are built for PT-symmetric states with real mu")


def _integrate_on_grid(grid: Grid, i0: int, direction: int, mu: float, g: float,
                       psi0: complex, dpsi0: complex, deltas, substeps: int = 1):
    """RK4 over grid nodes starting at node ``i0`` towards the grid edge."""
    x = grid.x
    nodes = x[i0:] if direction > 0 else x[: i0 + 1][::-1]
    tr = integrate_with_jumps(mu, (psi0, dpsi0), deltas, nodes[0], nodes[-1], g, nodes=nodes,
                              substeps=substeps)
    keep = np.isin(tr.x, nodes)
    psi, dpsi = tr.psi[keep], tr.dpsi[keep]
    if direction < 0:
        psi, dpsi = psi[::-1], dpsi[::-1]
    return psi, dpsi


def _node_index(grid: Grid, x0: float) -> int:
    i = grid.nearest_index(x0)
    if abs(grid.x[i] - x0) > 1e-9 * grid.dx:
        raise PTFeederError(f"coupling point {x0} is not a grid node; use a grid anchored at the wells")
    return i


def _soliton_feeder(grid: Grid, mu: float, g: float, x0: float, amplitude: float,
                    W: complex):
    """Soliton for x <= x0 (rising flank), jump by ``W``, numerical
    continuation for x > x0. Returns values and slopes on the grid."""
    kappa = float(np.sqrt(-mu))
    i0 = _node_index(grid, x0)
    xt = soliton_center_for_value(amplitude, kappa, g, x0, "left")
    p = SolitonParams(kappa, xt, g)
    x = grid.x
    vals = np.empty(grid.n_bins, dtype=complex)
    slope = np.empty(grid.n_bins, dtype=complex)
    vals[: i0 + 1] = soliton_value(p, x[: i0 + 1])
    slope[: i0 + 1] = -p.kappa * vals[: i0 + 1].real * np.tanh(p.kappa * (x[: i0 + 1] - xt))
    vals[i0] = amplitude
    d_left = soliton_derivative_from_value(amplitude, p, "left")
    psi, dpsi = _integrate_on_grid(grid, i0, +1, mu, g, amplitude, d_left + W * amplitude, [])
    vals[i0:] = psi
    slope[i0:] = dpsi
    return vals, slope, d_left, p


def build_two_feeder_system(state: StationaryState, psi2_at_a: float,
                            psi3_at_minus_a: float) -> CoupledSystem:
    """System plus incoming feeder at ``+a`` and outgoing feeder at ``-a``.

    Each feeder is a soliton flank on its left (vanishing for x -> -inf),
    jumps by the effective strength at its coupling point and continues
    numerically to the right edge.
    """
    _require_converged(state)
    sysw = state.system
    if not sysw.g > 0:
        raise PTFeederError("soliton feeders need g > 0")
    grid = state.field.grid
    mu = float(state.mu.real)
    kappa = np.sqrt(-mu)
    peak = np.sqrt(2.0 * kappa**2 / sysw.g)
    for amp in (psi2_at_a, psi3_at_minus_a):
        if not 0.0 < amp <= peak * (1 + 1e-12):
            raise AmplitudeRangeError(f"feeder amplitude {amp} outside (0, {peak:.6g}]")
    psi1 = state.field
    waves = [psi1]
    couplings = []
    info = {"kind": "two-feeder", "soliton_centers": [], "injected_current": []}
    for idx, (x0, amp, gt) in enumerate(((sysw.a, psi2_at_a, sysw.gamma),
                                         (-sysw.a, psi3_at_minus_a, -sysw.gamma)), start=1):
        ps = psi1(x0)
        W = effective_env_potential(ps, amp, sysw.V, gt)
        vals, slope, _, p = _soliton_feeder(grid, mu, sysw.g, x0, amp, W)
        gamma = coupling_gamma(ps, amp, gt)
        rot = np.exp(1j * (np.angle(ps) + required_phase_offset(gt)))
        waves.append(ComplexField(grid, rot * vals))
        couplings.append(CouplingPoint(x0, gamma, (0, idx), gt))
        i0 = _node_index(grid, x0)
        info["soliton_centers"].append(p.x_tilde)
        info["injected_current"].append(float(2.0 * np.imag(np.conj(vals[i0]) * slope[i0])))
    wells = (((-sysw.a, sysw.V), (sysw.a, sysw.V)), ((sysw.a, sysw.V),), ((-sysw.a, sysw.V),))
    cs = CoupledSystem(tuple(waves), complex(mu), tuple(couplings), wells, sysw.g,
                       names=("psi1", "psi2", "psi3"), info=info)
    cs.check()
    j_in, j_out = info["injected_current"]
    if abs(j_in + j_out) >= 1e-6:
        raise PTFeederError(f"feeder currents unbalanced: in {j_in:.6g}, out {j_out:.6g}")
    return cs


def _single_feeder_defect(mu, g, a, r, s, target):
    """Wrapped ``2 arg psi2(a) - target`` for psi2(0) = r, psi2'(0) = i s."""
    tr = integrate_with_jumps(mu, (complex(r), 1j * s), [], 0.0, a, g, h_max=a / 400)
    return wrap_phase(2.0 * np.angle(tr.psi[-1]) - target), tr.psi[-1]


def solve_single_feeder_slope(state: StationaryState, psi2_at_0: float,
                              slope_range=(1e-3, 1e2), n_scan: int = 200,
                              xtol: float = 1e-10) -> list[float]:
    """All imaginary slopes ``s`` (``psi2'(0) = i s``) in the scan range that
    satisfy the two-point phase relation, refined by bisection."""
    sysw = state.system
    mu = float(state.mu.real)
    a = sysw.a
    psi1 = state.field
    target = np.angle(psi1(a)) - np.angle(psi1(-a)) + np.pi
    scale = abs(psi2_at_0)
    ss = np.geomspace(slope_range[0] * scale, slope_range[1] * scale, n_scan)
    d = np.array([_single_feeder_defect(mu, sysw.g, a, psi2_at_0, s, target)[0] for s in ss])
    roots = []
    for i in range(n_scan - 1):
        d0, d1 = d[i], d[i + 1]
        if d0 == 0.0:
            roots.append(float(ss[i]))
            continue
        # sign changes across the +-pi branch cut are not roots
        if d0 * d1 < 0 and abs(d0) < 0.5 * np.pi and abs(d1) < 0.5 * np.pi:
            lo, hi, flo = ss[i], ss[i + 1], d0
            while hi - lo > xtol * max(1.0, lo):
                mid = 0.5 * (lo + hi)
                fm = _single_feeder_defect(mu, sysw.g, a, psi2_at_0, mid, target)[0]
                if fm == 0.0:
                    lo = hi = mid
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(float(0.5 * (lo + hi)))
    return roots


def build_single_unbound_feeder(state: StationaryState, psi2_at_0: float,
                                slope_range=(1e-3, 1e2), n_scan: int = 200,
                                slope_root: int = 0, substeps: int = 1) -> CoupledSystem:
    """System plus one unbound feeder coupled at both wells with one gamma.

    ``slope_root`` picks among the admissible slopes in increasing order.
    Fast-oscillating feeders from the larger roots need ``substeps`` > 1.
    """
    _require_converged(state)
    if not psi2_at_0 > 0:
        raise PTFeederError("psi2(0) must be positive")
    sysw = state.system
    grid = state.field.grid
    mu = float(state.mu.real)
    a, V, G, g = sysw.a, sysw.V, sysw.gamma, sysw.g
    roots = solve_single_feeder_slope(state, psi2_at_0, slope_range, n_scan)
    if not roots:
        raise RootNotBracketedError(
            f"no admissible psi2'(0) in i*[{slope_range[0]*psi2_at_0:.3g}, "
            f"{slope_range[1]*psi2_at_0:.3g}] for psi2(0)={psi2_at_0}")
    if slope_root >= len(roots):
        raise RootNotBracketedError(f"only {len(roots)} admissible slopes, root {slope_root} requested")
    if len(roots) > 1 and slope_root == 0:
        log.warning("several admissible slopes %s; using the smallest", roots)
    s = roots[slope_root]
    psi1 = state.field
    p1a, p1m = psi1(a), psi1(-a)
    i_mid = _node_index(grid, 0.0)
    # psi2(a) is needed before the jump strengths are known
    _, p2a = _single_feeder_defect(mu, g, a, psi2_at_0, s, 0.0)
    W_plus = effective_env_potential(p1a, p2a, V, G)
    W_minus = effective_env_potential(p1m, np.conj(p2a), V, -G)
    right, _ = _integrate_on_grid(grid, i_mid, +1, mu, g, psi2_at_0, 1j * s, [(a, W_plus)],
                                  substeps)
    left, _ = _integrate_on_grid(grid, i_mid, -1, mu, g, psi2_at_0, 1j * s, [(-a, W_minus)],
                                 substeps)
    vals = np.concatenate([left[:-1], right])
    f = ComplexField(grid, vals)
    rot = np.exp(1j * (np.angle(p1a) + 0.5 * np.pi - np.angle(f(a))))
    f = f.scaled(rot)
    gamma = coupling_gamma(p1a, f(a), G)
    couplings = (CouplingPoint(a, gamma, (0, 1), G), CouplingPoint(-a, gamma, (0, 1), -G))
    V_wells = ((-a, V), (a, V))
    info = {"kind": "single-unbound", "psi2_at_0": psi2_at_0, "psi2_slope_imag": s,
            "admissible_slopes": roots}
    cs = CoupledSystem((psi1, f), complex(mu), couplings, (V_wells, V_wells), g,
                       names=("psi1", "psi2"), info=info)
    if abs(abs(f(-a)) - abs(f(a))) >= 1e-6:
        raise PTFeederError("feeder modulus differs at the two wells")
    cs.check()
    return cs


def free_unbound_wave(grid: Grid, mu: float, g: float, psi_at_0: float,
                      slope_imag: float, substeps: int = 1) -> ComplexField:
    """Stationary solution of the potential-free GPE with ``psi(0)`` real and
    ``psi'(0) = i * slope_imag``: the unbound part of a feeder on its own.

    ``substeps`` RK4 steps per grid cell shrink the construction error by
    ``substeps**4``.
    """
    i_mid = _node_index(grid, 0.0)
    right, _ = _integrate_on_grid(grid, i_mid, +1, mu, g, psi_at_0, 1j * slope_imag, [], substeps)
    left, _ = _integrate_on_grid(grid, i_mid, -1, mu, g, psi_at_0, 1j * slope_imag, [], substeps)
    return ComplexField(grid, np.concatenate([left[:-1], right]))


def envelope_extrema(mu: float, g: float, psi_at_0: float, slope_imag: float,
                     x_end: float) -> tuple[np.ndarray, np.ndarray]:
    """Positions ``x > 0`` where ``|psi|`` of :func:`free_unbound_wave` is
    extremal, and ``arg psi`` there."""
    def rhs(x, y):
        p = y[0] + 1j * y[1]
        d2 = -(mu + g * (y[0] ** 2 + y[1] ** 2)) * p
        return [y[2], y[3], d2.real, d2.imag]

    def turn(x, y):
        return y[0] * y[2] + y[1] * y[3]

    sol = solve_ivp(rhs, (0.0, x_end), [psi_at_0, 0.0, 0.0, slope_imag], events=turn,
                    method="DOP853", rtol=1e-12, atol=1e-14)
    xe, ye = sol.t_events[0], sol.y_events[0]
    keep = xe > 0
    return xe[keep], np.angle(ye[keep, 0] + 1j * ye[keep, 1])


@dataclass(frozen=True)
class ClosedWave:
    """Feeder-compatible free wave that closes smoothly on a periodic grid of
    half-width ``half_width``."""
    psi_at_0: float
    slope_imag: float
    half_width: float

    def grid(self, n_bins: int) -> Grid:
        return Grid.symmetric(self.half_width, n_bins)

    def field(self, mu: float, g: float, n_bins: int, substeps: int = 8) -> ComplexField:
        return free_unbound_wave(self.grid(n_bins), mu, g, self.psi_at_0, self.slope_imag,
                                 substeps)


def close_unbound_wave(state: StationaryState, psi_guess: float, half_width: float = 40.0,
                       window: float = 0.03, n_scan: int = 31) -> ClosedWave:
    """Tune ``psi2(0)`` near ``psi_guess`` so that the single-feeder wave has an
    envelope extremum with ``arg psi`` a multiple of pi close to ``half_width``.

    The wave obeys ``psi(-x) = conj(psi(x))``, so at such a point it continues
    smoothly across the periodic wrap. A truncated wave otherwise carries a
    jump there which seeds deviations independent of the time step. The slope
    is the smallest root of :func:`solve_single_feeder_slope`.
    """
    mu, g = float(state.mu.real), state.system.g

    def slope(r):
        roots = solve_single_feeder_slope(state, r)
        if not roots:
            raise RootNotBracketedError(f"no feeder slope for psi2(0)={r}")
        return roots[0]

    x0, _ = envelope_extrema(mu, g, psi_guess, slope(psi_guess), 1.5 * half_width)
    if len(x0) == 0:
        raise RootNotBracketedError("wave has no envelope extrema")
    # the nearest extremum may sit near phase pi/2; try its neighbours too
    order = np.argsort(np.abs(x0 - half_width))[:3]

    def reduced(ph):
        return (ph + 0.5 * np.pi) % np.pi - 0.5 * np.pi

    best = None
    for w in (window, 3 * window, 9 * window):
        rs = np.linspace(max(psi_guess - w, 0.5 * psi_guess), psi_guess + w, n_scan)
        ext = [envelope_extrema(mu, g, r, slope(r), 1.5 * half_width) for r in rs]
        for n in order:
            d = np.array([reduced(e[1][n]) if len(e[1]) > n else np.nan for e in ext])
            for i in range(n_scan - 1):
                # skip the jump of the mod-pi reduction
                if d[i] * d[i + 1] <= 0 and abs(d[i] - d[i + 1]) < 0.5 * np.pi:
                    mid = 0.5 * (rs[i] + rs[i + 1])
                    if best is None or abs(mid - psi_guess) < abs(best[0] - psi_guess):
                        best = (mid, rs[i], rs[i + 1])
            if best is not None:
                break
        if best is not None:
            break
    else:
        raise RootNotBracketedError(f"no closing amplitude within {9 * window} of {psi_guess}")

    def defect(r):
        x, ph = envelope_extrema(mu, g, r, slope(r), 1.5 * half_width)
        return float(reduced(ph[n])), float(x[n])

    r = brentq(lambda v: defect(v)[0], best[1], best[2], xtol=1e-14)
    return ClosedWave(float(r), float(slope(r)), defect(r)[1])


def bound_feeder_phase_defect(state: StationaryState) -> float:
    """``arg psi1(a) - arg psi1(-a) - pi/2`` reduced modulo pi into
    ``[-pi/2, pi/2)``.

    The two-point relation for a mirrored feeder constrains twice the phase
    difference, so it only fixes the difference modulo pi.
    """
    a = state.system.a
    d = np.angle(state.field(a)) - np.angle(state.field(-a)) - 0.5 * np.pi
    return float((d + 0.5 * np.pi) % np.pi - 0.5 * np.pi)


def build_bound_feeder(state: StationaryState) -> CoupledSystem:
    """Mirror-image feeder ``psi2(x) = psi1(-x)``; the coupling conditions
    hold only where :func:`bound_feeder_phase_defect` vanishes."""
    _require_converged(state)
    sysw = state.system
    f1 = state.field
    grid = f1.grid
    n = grid.n_bins
    mirror = ComplexField(grid, f1.values[(n - np.arange(n)) % n])
    a, G = sysw.a, sysw.gamma
    rot = np.exp(1j * (np.angle(f1(a)) + 0.5 * np.pi - np.angle(mirror(a))))
    f2 = mirror.scaled(rot)
    gamma = coupling_gamma(f1(a), f2(a), G)
    couplings = (CouplingPoint(a, gamma, (0, 1), G), CouplingPoint(-a, gamma, (0, 1), -G))
    V_wells = ((-a, sysw.V), (a, sysw.V))
    return CoupledSystem((f1, f2), state.mu, couplings, (V_wells, V_wells), sysw.g,
                         names=("psi1", "psi2"),
                         info={"kind": "bound", "phase_defect": bound_feeder_phase_defect(state)})


# -- psi_c locus -------------------------------------------------------------------

@dataclass(frozen=True)
class LocusPoint:
    g: float
    gamma: float
    mu: complex
    defect: float
    branch: str
    gamma_c: float = np.nan
    gamma_c_star: float = np.nan

    @property
    def region(self) -> str:
        if np.isnan(self.gamma_c_star):
            return "unknown"
        return "stable" if self.gamma < self.gamma_c_star else "unstable"


def locate_phase_root(template: WellSystem, grid: Grid | None = None, step: float = 0.01,
                      tol: float = 1e-6) -> tuple[StationaryState, float]:
    """Ground-branch state where the bound-feeder phase defect vanishes."""
    from .stationary import default_grid

    grid = grid or default_grid(template)
    state = seed_state(template.with_gamma(0.0), "ground", grid)
    hist = []
    d_prev = None
    gamma = 0.0
    while True:
        nxt = gamma + step
        st, hist = _continue_to(template, grid, (gamma, state.params, state.mu), nxt,
                                "ground", step / 64, hist[-2:])
        if st is None:
            # approaching the fold: shrink the stride instead of giving up
            step *= 0.25
            if step < 1e-7:
                raise LocusError(f"ground branch ends near Gamma={gamma:.6f} without a "
                                 f"defect root (g={template.g})")
            continue
        d = bound_feeder_phase_defect(st)
        if d_prev is not None and d <= 0.0 < d_prev:
            break
        state, gamma, d_prev = st, nxt, d
    lo_state, hi_gamma = state, nxt
    lo_gamma = gamma
    # bisection with continuation from the lower bracket end
    while True:
        mid = 0.5 * (lo_gamma + hi_gamma)
        st = find_state(template.with_gamma(mid), branch_hint="ground", grid=grid,
                        guess_params=lo_state.params, check=False)
        d = bound_feeder_phase_defect(st)
        if abs(d) < tol or hi_gamma - lo_gamma < 1e-12:
            return st, d
        if d > 0:
            lo_gamma, lo_state = mid, st
        else:
            hi_gamma = mid


def trace_psi_c_locus(a: float, V: float, g_range, grid: Grid | None = None,
                      with_critical: bool = True, skip_missing: bool = False,
                      workers: int = 1) -> list[LocusPoint]:
    """Bound-feeder locus in the (g, Gamma) plane along the ground branch."""
    gs = [float(g) for g in g_range]
    if not gs:
        return []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_locus_point, [(a, V, g, grid, with_critical) for g in gs]))
    else:
        parts = [_locus_point((a, V, g, grid, with_critical)) for g in gs]
    out = []
    for g, p in zip(gs, parts):
        if isinstance(p, Exception):
            if skip_missing:
                log.info("no locus point at g=%s: %s", g, p)
                continue
            raise p
        out.append(p)
    return out


def _locus_point(args):
    a, V, g, grid, with_critical = args
    template = WellSystem(a, V, 0.0, g)
    try:
        st, d = locate_phase_root(template, grid)
    except (LocusError, NoConvergenceError) as exc:
        return exc if isinstance(exc, LocusError) else LocusError(str(exc))
    gc = gcs = np.nan
    if with_critical:
        try:
            cp = locate_critical(template, grid)
            gc, gcs = cp.gamma_c, cp.gamma_c_star
        except (BracketError, NoConvergenceError) as exc:
            log.warning("critical points unavailable at g=%s: %s", g, exc)
    return LocusPoint(g, st.system.gamma, st.mu, d, "ground", gc, gcs)
