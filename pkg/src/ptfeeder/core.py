"""Grid, sampled wave functions and the elementary observables.

Units throughout: the kinetic operator is ``-d^2/dx^2`` (hbar = 1, 2m = 1),
so a plane wave ``exp(ikx)`` has energy ``k**2`` and current ``2k``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class PTFeederError(Exception):
    """Base class for errors raised by this package."""


class GridError(PTFeederError):
    pass


class DeltaProximityError(PTFeederError):
    pass


class VanishingAmplitudeError(PTFeederError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with nodes ``x_min + i*dx``, ``i < n_bins``.

    ``x_max`` itself is not a node; it is identified with ``x_min``.
    """

    x_min: float
    x_max: float
    n_bins: int

    def __post_init__(self):
        if not _is_power_of_two(int(self.n_bins)):
            raise GridError(f"n_bins must be a power of two >= 2, got {self.n_bins}")
        if not self.x_max > self.x_min:
            raise GridError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")

    @classmethod
    def symmetric(cls, half_width: float = 40.0, n_bins: int = 16384,
                  anchor: float | None = None) -> "Grid":
        """Grid on ``[-L, L)`` with 0 as a node.

        With ``anchor`` the spacing is shrunk slightly so that ``+-anchor``
        also fall on nodes; the width then changes by a relative amount of at
        most ``dx / (2 |anchor|)``.
        """
        dx = 2.0 * half_width / n_bins
        if anchor is not None and anchor != 0.0:
            m = max(1, int(round(abs(anchor) / dx)))
            dx = abs(anchor) / m
        half = dx * (n_bins // 2)
        return cls(-half, half, n_bins)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_bins

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.n_bins)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wave numbers in FFT order."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_bins, d=self.dx)
        k.flags.writeable = False
        return k

    @property
    def is_symmetric(self) -> bool:
        return abs(self.x_min + self.x_max) <= self.dx * (1.0 + 1e-9)

    def nearest_index(self, x0: float) -> int:
        i = int(np.rint((x0 - self.x_min) / self.dx))
        if not 0 <= i < self.n_bins:
            raise GridError(f"position {x0} lies outside the grid")
        return i

    def contains(self, x0: float) -> bool:
        return self.x_min <= x0 <= self.x[-1]

    def zeros(self) -> "ComplexField":
        return ComplexField(self, np.zeros(self.n_bins, dtype=complex))


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex wave function sampled on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex, copy=True)
        if v.shape != (self.grid.n_bins,):
            raise GridError(f"expected {self.grid.n_bins} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PTFeederError("field contains non-finite samples")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ComplexField":
        return cls(grid, fn(grid.x))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def scaled(self, c: complex) -> "ComplexField":
        return ComplexField(self.grid, c * self.values)

    def __call__(self, x0: float) -> complex:
        return interpolate(self, x0)


@dataclass(frozen=True)
class WellSystem:
    """Double-delta potential ``(V+i*gamma) d(x-a) + (V-i*gamma) d(x+a)``
    with nonlinearity ``g`` (attractive for ``g > 0``)."""

    a: float = 1.1
    V: float = -1.0
    gamma: float = 0.0
    g: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise PTFeederError(f"half-separation a must be positive, got {self.a}")

    def deltas(self) -> list[tuple[float, complex]]:
        """Delta positions and complex strengths, sorted by position."""
        return [(-self.a, complex(self.V, -self.gamma)),
                (self.a, complex(self.V, self.gamma))]

    def with_gamma(self, gamma: float) -> "WellSystem":
        return replace(self, gamma=float(gamma))

    def with_g(self, g: float) -> "WellSystem":
        return replace(self, g=float(g))


# -- observables -------------------------------------------------------------

def norm_squared(field: ComplexField) -> float:
    """``sum |psi_i|^2 dx``; equals the trapezoid rule on a periodic grid."""
    return float(np.sum(np.abs(field.values) ** 2) * field.grid.dx)


def _interp_index(grid: Grid, x0: float) -> tuple[int, float]:
    s = (x0 - grid.x_min) / grid.dx
    i = int(np.floor(s))
    if i < 0 or i > grid.n_bins - 1 or (i == grid.n_bins - 1 and s - i > 1e-12):
        raise GridError(f"position {x0} lies outside the grid nodes")
    i = min(i, grid.n_bins - 2)
    return i, s - i


def interpolate(field: ComplexField, x0: float) -> complex:
    """Linear interpolation of real and imaginary parts."""
    i, t = _interp_index(field.grid, x0)
    v = field.values
    return complex((1.0 - t) * v[i] + t * v[i + 1])


def current_profile(field: ComplexField) -> np.ndarray:
    """``j = -i(psi* psi' - psi psi'*)`` at every node, central differences
    (periodic wrap at the ends)."""
    v = field.values
    dv = (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * field.grid.dx)
    return 2.0 * np.imag(np.conj(v) * dv)


def probability_current(field: ComplexField, x: float,
                        singular_points: Iterable[float] = ()) -> float:
    """Probability current at ``x``, linearly interpolated between nodes.

    ``singular_points`` are positions where psi' jumps (delta potentials);
    the stencil must stay at least ``2*dx`` away from them.
    """
    grid = field.grid
    dx = grid.dx
    for xs in singular_points:
        if abs(x - xs) < 2.0 * dx:
            raise DeltaProximityError(
                f"x={x} is within 2*dx of a derivative discontinuity at {xs}")
    if not (grid.x_min + dx <= x <= grid.x[-1] - dx):
        raise GridError(f"x={x} is not strictly inside the grid")
    i, t = _interp_index(grid, x)
    v = field.values

    def j_at(m: int) -> float:
        d = (v[m + 1] - v[m - 1]) / (2.0 * dx)
        return 2.0 * float(np.imag(np.conj(v[m]) * d))

    if t == 0.0:
        return j_at(i)
    return (1.0 - t) * j_at(i) + t * j_at(i + 1)


def pt_reflect(field: ComplexField) -> ComplexField:
    """``psi(x) -> conj(psi(-x))``. Node 0 (x_min) maps onto itself through
    the periodic identification ``x_min ~ x_max``."""
    grid = field.grid
    if not grid.is_symmetric:
        raise GridError("PT reflection needs a grid symmetric about x = 0")
    n = grid.n_bins
    idx = (n - np.arange(n)) % n
    return ComplexField(grid, np.conj(field.values[idx]))


def phase_at(field: ComplexField, x: float) -> float:
    """``arg psi(x)`` in ``(-pi, pi]``."""
    z = interpolate(field, x)
    if abs(z) <= 1e-12:
        raise VanishingAmplitudeError(f"|psi({x})| = {abs(z):.3e} is too small for a phase")
    ph = float(np.angle(z))
    return np.pi if ph == -np.pi else ph


def wrap_phase(phi: float) -> float:
    """Wrap an angle to ``(-pi, pi]``."""
    w = float(np.angle(np.exp(1j * phi)))
    return np.pi if w == -np.pi else w


def pt_deviation(field: ComplexField) -> float:
    """Max deviation between ``psi`` and its PT image after removing the
    best-fitting global phase, relative to ``max|psi|``."""
    p = pt_reflect(field).values
    v = field.values
    z = np.vdot(v, p)
    ph = z / abs(z) if abs(z) > 0 else 1.0
    scale = np.max(np.abs(v))
    return float(np.max(np.abs(p - ph * v)) / scale) if scale > 0 else 0.0


# -- serialization -----------------------------------------------------------

CSV_HEADER = ("x", "re_psi", "im_psi")


def write_field_csv(path: str | Path, field: ComplexField) -> None:
    data = np.column_stack([field.x, field.values.real, field.values.imag])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def read_field_csv(path: str | Path) -> ComplexField:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = data[:, 0]
    n = len(x)
    dx = (x[-1] - x[0]) / (n - 1)
    grid = Grid(float(x[0]), float(x[0] + n * dx), n)
    return ComplexField(grid, data[:, 1] + 1j * data[:, 2])


def write_fields_csv(path: str | Path, grid: Grid, fields: Sequence[ComplexField],
                     names: Sequence[str]) -> None:
    """Several fields on one grid: columns ``x, re_<name>, im_<name>, ...``."""
    cols = [grid.x]
    header = ["x"]
    for name, f in zip(names, fields):
        if f.grid != grid:
            raise GridError("all fields must share the grid")
        cols += [f.values.real, f.values.imag]
        header += [f"re_{name}", f"im_{name}"]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(header)
        np.savetxt(fh, np.column_stack(cols), fmt="%.17g", delimiter=",")
