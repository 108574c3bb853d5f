"""Split-operator (Strang) time evolution of one or several coupled waves.

One step is ``K(dt/2) P(dt) K(dt/2)`` with the kinetic factor
``exp(-i k^2 dt/2)`` applied in Fourier space. ``P`` is diagonal in
position space except at coupling bins, where two waves exchange amplitude.
Delta potentials sit on the nearest bin with strength ``W/dx``; the
nonlinearity enters as the potential ``-g|psi|^2`` evaluated at the start
of the step.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numba
import numpy as np
import scipy.fft as sfft

from .core import ComplexField, Grid, PTFeederError, WellSystem

log = logging.getLogger(__name__)

DT_RANGE = (1e-6, 1e-4)
COUPLING_MODES = ("exact-kick", "effective-potential")
BOUNDARIES = ("none", "absorbing", "reservoir")
CLASSES = ("stable", "potentially-stable", "unstable")
DEFAULT_MS_PER_UNIT = 123.0 / 45.0


class PropagationConfigError(PTFeederError):
    pass


class PropagationAbort(PTFeederError):
    """Non-finite values appeared; ``record`` holds everything up to ``time``."""

    def __init__(self, msg, time, record=None):
        super().__init__(msg)
        self.time = time
        self.record = record


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 1e-4
    t_final: float = 10.0
    record_stride: int = 100
    delta_mode: str = "nearest-bin"
    coupling_mode: str = "exact-kick"
    boundary: str = "absorbing"
    # mask width as a fraction of the domain, strength as a peak damping rate
    mask_width: float = 0.1
    mask_strength: float = 5.0
    # fade masked waves to zero across the mask before the first step
    taper_masked: bool = True
    stationarity_threshold: float = 0.1
    classify: bool = True
    refine_factor: int = 10
    lifetime_tolerance: float = 0.1
    stop_on_loss: bool = False
    snapshot_stride: int = 0
    allow_dt_override: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise PropagationConfigError("dt must be positive")
        lo, hi = DT_RANGE
        if not self.allow_dt_override and not lo * (1 - 1e-12) <= self.dt <= hi * (1 + 1e-12):
            raise PropagationConfigError(
                f"dt={self.dt:g} outside [{lo:g}, {hi:g}]; set allow_dt_override to use it")
        if not self.t_final >= 0:
            raise PropagationConfigError("t_final must be non-negative")
        if self.record_stride < 1:
            raise PropagationConfigError("record_stride must be >= 1")
        if self.delta_mode != "nearest-bin":
            raise PropagationConfigError(f"unknown delta_mode {self.delta_mode!r}")
        if self.coupling_mode not in COUPLING_MODES:
            raise PropagationConfigError(f"unknown coupling_mode {self.coupling_mode!r}")
        if self.boundary not in BOUNDARIES:
            raise PropagationConfigError(f"unknown boundary {self.boundary!r}")
        if not 0.0 < self.mask_width < 0.5:
            raise PropagationConfigError("mask_width must lie in (0, 0.5)")
        if not self.mask_strength >= 0:
            raise PropagationConfigError("mask_strength must be non-negative")
        if not 0.0 < self.stationarity_threshold < 1.0:
            raise PropagationConfigError("stationarity_threshold must lie in (0, 1)")
        if self.refine_factor < 2:
            raise PropagationConfigError("refine_factor must be >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PropagationRecord:
    times: np.ndarray
    norms_per_wave: np.ndarray
    overlap_with_initial: np.ndarray
    peak_drift: np.ndarray
    lifetime: float
    classification: str
    names: tuple = ()
    dt: float = np.nan
    refined_lifetime: float | None = None
    periodic_wrap: bool = False
    snapshots: list = field(default_factory=list)

    @property
    def total_norm(self) -> np.ndarray:
        return self.norms_per_wave.sum(axis=1)

    def summary(self, ms_per_unit: float = DEFAULT_MS_PER_UNIT) -> dict:
        return {
            "lifetime": float(self.lifetime),
            "classification": self.classification,
            "refined_lifetime": None if self.refined_lifetime is None else float(self.refined_lifetime),
            "si_ms": reduced_to_si_time(self.lifetime, ms_per_unit),
            "dt": self.dt,
            "periodic_wrap": self.periodic_wrap,
            "final_norms": [float(v) for v in self.norms_per_wave[-1]] if len(self.times) else [],
        }


def reduced_to_si_time(t_reduced: float, scale_ms_per_unit: float = DEFAULT_MS_PER_UNIT) -> float:
    """Reduced time to milliseconds; the default scale maps 45 units to 123 ms."""
    if not scale_ms_per_unit > 0:
        raise ValueError("scale must be positive")
    return float(t_reduced) * float(scale_ms_per_unit)


# -- potential step kernels -------------------------------------------------------

@numba.njit(cache=True)
def _potential_step(psi, fstat, vstat, g, dt, cbin, ci, cj, cval, exact):
    m, n = psi.shape
    nc = cbin.shape[0]
    # pre-step amplitudes at coupling bins
    a = np.empty(nc, dtype=np.complex128)
    b = np.empty(nc, dtype=np.complex128)
    for k in range(nc):
        a[k] = psi[ci[k], cbin[k]]
        b[k] = psi[cj[k], cbin[k]]
    for w in range(m):
        for i in range(n):
            z = psi[w, i]
            ph = g * (z.real * z.real + z.imag * z.imag) * dt
            if abs(ph) < 1e-2:
                # series good to round-off for small phases, much cheaper than cos/sin
                p2 = ph * ph
                rot = complex(1.0 - p2 * (0.5 - p2 * (1.0 / 24.0 - p2 / 720.0)),
                              ph * (1.0 - p2 * (1.0 / 6.0 - p2 * (1.0 / 120.0 - p2 / 5040.0))))
            else:
                rot = complex(np.cos(ph), np.sin(ph))
            psi[w, i] = z * fstat[w, i] * rot
    for k in range(nc):
        x = cbin[k]
        ai, bj = a[k], b[k]
        di = vstat[ci[k], x] - g * (ai.real * ai.real + ai.imag * ai.imag)
        dj = vstat[cj[k], x] - g * (bj.real * bj.real + bj.imag * bj.imag)
        c = cval[k]
        if exact:
            s = 0.5 * (di + dj)
            d = 0.5 * (di - dj)
            om = np.sqrt(d * d + c * c)
            cs = np.cos(om * dt)
            if abs(om * dt) < 1e-8:
                sn = dt + 0j
            else:
                sn = np.sin(om * dt) / om
            ph = np.exp(-1j * s * dt)
            psi[ci[k], x] = ph * ((cs - 1j * sn * d) * ai - 1j * sn * c * bj)
            psi[cj[k], x] = ph * (-1j * sn * c * ai + (cs + 1j * sn * d) * bj)
        else:
            wi = di + (c * bj / ai if abs(ai) > 0 else 0.0)
            wj = dj + (c * ai / bj if abs(bj) > 0 else 0.0)
            psi[ci[k], x] = np.exp(-1j * wi * dt) * ai
            psi[cj[k], x] = np.exp(-1j * wj * dt) * bj


# -- setup -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WaveSetup:
    """Discretized problem: initial waves, static potentials, couplings."""

    grid: Grid
    psi0: np.ndarray
    vstat: np.ndarray
    couplings: tuple          # (bin, i, j, gamma/dx)
    g: float
    masked: tuple = ()        # wave indices that get the absorbing mask
    names: tuple = ()
    mu: tuple = ()            # per-wave stationary mu, needed by the reservoir boundary


def delta_potential(grid: Grid, deltas: Sequence[tuple[float, complex]]) -> np.ndarray:
    """Nearest-bin discretization ``W/dx`` of a sum of deltas."""
    v = np.zeros(grid.n_bins, dtype=complex)
    for x0, w in deltas:
        v[grid.nearest_index(x0)] += complex(w) / grid.dx
    return v


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 at ``t <= 0`` to 1 at ``t >= 1``."""
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def absorbing_profile(grid: Grid, width: float, strength: float) -> np.ndarray:
    """Damping rate rising smoothly from 0 to ``strength`` over the outer
    ``width`` fraction on each side.

    The ramp is C-infinity: a ramp with a kink in any derivative radiates
    algebraically decaying high-k waves that reach the interior within a
    fraction of a time unit.
    """
    x = grid.x
    w = width * grid.length
    depth = np.maximum(grid.x_min + w - x, x - (grid.x_max - w)) / w
    return strength * _smoothstep(depth)


def mask_taper(grid: Grid, width: float) -> np.ndarray:
    """Smooth ramp from 1 at the inner mask edge to 0 at the grid edge.

    Unbound feeders do not vanish at the grid edge, and the periodic FFT
    would otherwise see a jump there whose high-k content reaches the
    interior within a few steps.
    """
    return 1.0 - absorbing_profile(grid, width, 1.0)


def setup_single(field: ComplexField, deltas: Sequence[tuple[float, complex]] = (), g: float = 0.0,
                 absorb: bool = False, name: str = "psi", mu: float | None = None) -> WaveSetup:
    grid = field.grid
    return WaveSetup(grid, field.values[None, :].copy(), delta_potential(grid, deltas)[None, :],
                     (), float(g), (0,) if absorb else (), (name,),
                     () if mu is None else (float(mu),))


def setup_well_state(state, absorb: bool = False) -> WaveSetup:
    """A stationary state propagated directly with its complex deltas."""
    return setup_single(state.field, state.system.deltas(), state.system.g, absorb, "psi1",
                        state.mu.real)


def setup_coupled(cs) -> WaveSetup:
    """Closed system from :class:`ptfeeder.feeder.CoupledSystem`; every wave
    but the first is a feeder and gets the mask."""
    grid = cs.grid
    psi0 = np.array([w.values for w in cs.waves])
    vstat = np.array([delta_potential(grid, [(x0, complex(v)) for x0, v in wl]) for wl in cs.wells])
    couplings = []
    used = set()
    for c in cs.couplings:
        b = grid.nearest_index(c.x0)
        i, j = c.partner_indices
        if (b, i) in used or (b, j) in used:
            raise PTFeederError("a wave may take part in only one coupling per bin")
        used |= {(b, i), (b, j)}
        couplings.append((b, i, j, c.gamma / grid.dx))
    names = cs.names or tuple(f"psi{i + 1}" for i in range(len(cs.waves)))
    return WaveSetup(grid, psi0, vstat, tuple(couplings), cs.g,
                     tuple(range(1, len(cs.waves))), names, (float(cs.mu.real),) * len(cs.waves))


# -- stepping ---------------------------------------------------------------------

def _coupling_arrays(couplings):
    if couplings:
        b, i, j, c = zip(*couplings)
    else:
        b = i = j = c = ()
    return (np.asarray(b, dtype=np.int64), np.asarray(i, dtype=np.int64),
            np.asarray(j, dtype=np.int64), np.asarray(c, dtype=np.complex128))


def split_step(waves: np.ndarray, potentials: np.ndarray, couplings, g: float, dt: float,
               k: np.ndarray, exact_kick: bool = True) -> np.ndarray:
    """One Strang step for waves of shape ``(m, n)``; returns a new array.

    ``potentials`` are the discretized static potentials per wave, ``k`` the
    FFT-ordered wave numbers, ``couplings`` tuples ``(bin, i, j, strength)``.
    """
    psi = np.array(waves, dtype=np.complex128, ndmin=2, copy=True)
    v = np.broadcast_to(np.asarray(potentials, dtype=np.complex128), psi.shape)
    kh = np.exp(-0.5j * k**2 * dt)
    psi = sfft.ifft(kh * sfft.fft(psi, axis=-1), axis=-1)
    _potential_step(psi, np.exp(-1j * v * dt), np.ascontiguousarray(v), float(g), float(dt),
                    *_coupling_arrays(couplings), bool(exact_kick))
    psi = sfft.ifft(kh * sfft.fft(psi, axis=-1), axis=-1)
    if not np.all(np.isfinite(psi)):
        raise PropagationAbort("non-finite values after one step", dt)
    return psi


class Propagator:
    """Reusable stepping machinery for one :class:`WaveSetup` and ``dt``."""

    def __init__(self, setup: WaveSetup, dt: float, coupling_mode: str = "exact-kick",
                 boundary: str = "absorbing", mask_width: float = 0.1,
                 mask_strength: float = 5.0):
        self.setup = setup
        self.dt = float(dt)
        grid = setup.grid
        v = np.array(setup.vstat, dtype=np.complex128)
        self.relax = None
        self.steps = 0
        if boundary == "absorbing" and setup.masked:
            prof = absorbing_profile(grid, mask_width, mask_strength)
            for w in setup.masked:
                v[w] = v[w] - 1j * prof
        elif boundary == "reservoir" and setup.masked:
            if len(setup.mu) != setup.psi0.shape[0]:
                raise PropagationConfigError("the reservoir boundary needs the stationary mu of every wave")
        # reservoir data are set up below, once the step factors exist
        self.vstat = np.ascontiguousarray(v)
        self.fstat = np.exp(-1j * self.vstat * self.dt)
        self.kfull = np.exp(-1j * grid.k**2 * self.dt)
        self.khalf = np.exp(-0.5j * grid.k**2 * self.dt)
        self.carr = _coupling_arrays(setup.couplings)
        self.exact = coupling_mode == "exact-kick"
        self.g = float(setup.g)
        if boundary == "reservoir" and setup.masked:
            prof = absorbing_profile(grid, mask_width, mask_strength)
            idx = np.flatnonzero(prof > 0)
            ws = np.array(setup.masked)
            # the relaxation acts after the potential step, where the stepped
            # stationary wave is not psi0 exp(-i mu t) but its half-kinetic,
            # potential-kicked image; relaxing toward psi0 itself costs O(dt)
            ref = sfft.ifft(self.khalf * sfft.fft(np.array(setup.psi0, dtype=np.complex128),
                                                  axis=-1), axis=-1)
            _potential_step(ref, self.fstat, self.vstat, self.g, self.dt, *self.carr, self.exact)
            self.relax = (ws, idx, np.exp(-prof[idx] * self.dt), ref[np.ix_(ws, idx)],
                          np.array(setup.mu, dtype=float)[ws])

    def advance(self, psi: np.ndarray, n_steps: int) -> np.ndarray:
        """``n_steps`` Strang steps with the inner half kinetic steps fused."""
        if n_steps <= 0:
            return psi
        f = sfft.fft(psi, axis=-1, overwrite_x=True)
        f *= self.khalf
        psi = sfft.ifft(f, axis=-1, overwrite_x=True)
        for s in range(n_steps):
            _potential_step(psi, self.fstat, self.vstat, self.g, self.dt, *self.carr, self.exact)
            if self.relax is not None:
                self._relax(psi, (self.steps + s) * self.dt)
            f = sfft.fft(psi, axis=-1, overwrite_x=True)
            f *= self.khalf if s == n_steps - 1 else self.kfull
            psi = sfft.ifft(f, axis=-1, overwrite_x=True)
        self.steps += n_steps
        return psi

    def _relax(self, psi, t):
        # pull the edge region toward the stepped stationary continuation
        ws, idx, damp, ref0, mu = self.relax
        ref = ref0 * np.exp(-1j * mu * t)[:, None]
        sub = np.ix_(ws, idx)
        psi[sub] = ref + (psi[sub] - ref) * damp


# -- propagation -------------------------------------------------------------------

def _window(setup: WaveSetup, config: PropagationConfig) -> np.ndarray:
    """Overlaps of masked waves are taken over the unmasked interior."""
    grid = setup.grid
    m = setup.psi0.shape[0]
    win = np.ones((m, grid.n_bins), dtype=bool)
    if config.boundary in ("absorbing", "reservoir"):
        w = config.mask_width * grid.length
        inner = (grid.x >= grid.x_min + w) & (grid.x <= grid.x_max - w)
        for i in setup.masked:
            win[i] = inner
    return win


def _overlaps(psi0, psi, win):
    out = np.empty(psi.shape[0])
    for i in range(psi.shape[0]):
        a, b = psi0[i, win[i]], psi[i, win[i]]
        den = np.linalg.norm(a) * np.linalg.norm(b)
        out[i] = abs(np.vdot(a, b)) / den if den > 0 else 0.0
    return out


def _run(setup: WaveSetup, config: PropagationConfig, lifetime_waves, t_stop: float | None = None):
    grid = setup.grid
    dt = config.dt
    prop = Propagator(setup, dt, config.coupling_mode, config.boundary, config.mask_width,
                      config.mask_strength)
    psi = np.array(setup.psi0, dtype=np.complex128)
    if config.boundary == "absorbing" and config.taper_masked and setup.masked:
        psi[list(setup.masked)] *= mask_taper(grid, config.mask_width)
    psi0 = psi.copy()
    win = _window(setup, config)
    n_total = int(round((config.t_final if t_stop is None else t_stop) / dt))
    stride = config.record_stride
    times, norms, ovl, drift, snaps = [], [], [], [], []
    x = grid.x
    peak0 = x[np.argmax(np.abs(psi0[0]))]
    lifetime = None
    thr = config.stationarity_threshold

    def record(step):
        t = step * dt
        n = np.sum(np.abs(psi) ** 2, axis=1) * grid.dx
        times.append(t)
        norms.append(n)
        ovl.append(_overlaps(psi0, psi, win))
        drift.append(x[np.argmax(np.abs(psi[0]))] - peak0)
        if config.snapshot_stride and (len(times) - 1) % config.snapshot_stride == 0:
            snaps.append((t, psi.copy()))
        return np.all(np.isfinite(n))

    def partial():
        return _assemble(times, norms, ovl, drift, lifetime if lifetime is not None else times[-1],
                         "unstable", setup, dt, config, snaps)

    record(0)
    step = 0
    while step < n_total:
        k = min(stride, n_total - step)
        psi = prop.advance(psi, k)
        step += k
        if not record(step):
            raise PropagationAbort(f"non-finite wave function at t={step * dt:.6g}",
                                   step * dt, partial())
        if lifetime is None and np.any(1.0 - ovl[-1][list(lifetime_waves)] > thr):
            lifetime = times[-1]
            if config.stop_on_loss:
                break
    if lifetime is None:
        lifetime = config.t_final if t_stop is None else n_total * dt
        lost = False
    else:
        lost = True
    return _assemble(times, norms, ovl, drift, lifetime, "stable", setup, dt, config, snaps), lost


def _assemble(times, norms, ovl, drift, lifetime, cls, setup, dt, config, snaps):
    return PropagationRecord(np.array(times), np.array(norms), np.array(ovl), np.array(drift),
                             float(lifetime), cls, setup.names, dt,
                             periodic_wrap=config.boundary == "none", snapshots=snaps)


def classify_lifetimes(coarse: float, refined: float | None, tol: float = 0.1) -> str:
    """Unstable when refining dt leaves the lifetime unchanged (or shorter),
    potentially stable when it grows by more than ``tol``."""
    if refined is None:
        return "stable"
    if refined > coarse * (1.0 + tol):
        return "potentially-stable"
    return "unstable"


def propagate(system, config: PropagationConfig | None = None, lifetime_waves=(0,)) -> PropagationRecord:
    """Evolve a :class:`WaveSetup` (or a ``CoupledSystem``/``StationaryState``,
    converted with the default setup) and classify its stationarity."""
    config = config or PropagationConfig()
    setup = _as_setup(system)
    rec, lost = _run(setup, config, lifetime_waves)
    if not lost:
        rec.classification = "stable"
        return rec
    if not config.classify:
        rec.classification = "unstable"
        return rec
    fine_cfg = replace(config, dt=config.dt / config.refine_factor, allow_dt_override=True,
                       stop_on_loss=True, snapshot_stride=0)
    horizon = min(config.t_final, rec.lifetime * (1.0 + config.lifetime_tolerance)
                  + 2 * config.record_stride * config.dt)
    fine_cfg = replace(fine_cfg, record_stride=config.record_stride * config.refine_factor)
    fine, fine_lost = _run(setup, fine_cfg, lifetime_waves, t_stop=horizon)
    refined = fine.lifetime if fine_lost else np.inf
    rec.refined_lifetime = refined
    rec.classification = classify_lifetimes(rec.lifetime, refined, config.lifetime_tolerance)
    return rec


def _as_setup(system) -> WaveSetup:
    if isinstance(system, WaveSetup):
        return system
    if hasattr(system, "couplings") and hasattr(system, "waves"):
        return setup_coupled(system)
    if hasattr(system, "field") and hasattr(system, "system"):
        return setup_well_state(system)
    if isinstance(system, ComplexField):
        return setup_single(system)
    raise TypeError(f"cannot propagate {type(system).__name__}")


def evolve_fields(setup: WaveSetup, dt: float, t: float, coupling_mode: str = "exact-kick",
                  boundary: str = "none", mask_width: float = 0.1,
                  mask_strength: float = 5.0) -> np.ndarray:
    """Plain evolution to time ``t`` without records; returns the waves."""
    prop = Propagator(setup, dt, coupling_mode, boundary, mask_width, mask_strength)
    return prop.advance(np.array(setup.psi0, dtype=np.complex128), int(round(t / dt)))
