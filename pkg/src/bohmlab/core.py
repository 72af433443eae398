"""Grid, wavefunction storage and the field quantities derived from them.

Everything here is a pure function of immutable values. Integrals use the
trapezoid rule and spatial derivatives use central differences, which keeps
the whole stack second order in the grid spacing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, InvalidBoundsError, OutOfRangeError, ZeroNormError

MIN_POINTS = 16


def _frozen(a, dtype):
    # read-only arrays of the right dtype are already immutable; skip the copy
    if not (isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable):
        a = np.array(a, dtype=dtype, copy=True)
        a.flags.writeable = False
    return a


def trapezoid(f, dx):
    """Trapezoid rule for samples on a uniform grid."""
    f = np.asarray(f)
    return dx * (f.sum() - 0.5 * (f[0] + f[-1]))


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.m > 0):
            raise ValueError(f"hbar and m must be positive, got hbar={self.hbar}, m={self.m}")


NATURAL = PhysicalConstants()


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + np.arange(self.n) * self.dx
        x.flags.writeable = False
        return x

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.x_min) & (x <= self.x_max)

    def refined(self, factor: int = 2) -> "Grid":
        """Same box with the spacing divided by ``factor``."""
        return Grid(self.x_min, self.x_max, (self.n - 1) * factor + 1)


def build_grid(x_min: float, x_max: float, n: int) -> Grid:
    if not (np.isfinite(x_min) and np.isfinite(x_max)) or x_max <= x_min:
        raise InvalidBoundsError(f"need x_max > x_min, got [{x_min}, {x_max}]")
    if int(n) != n or n < MIN_POINTS:
        raise InvalidBoundsError(f"need an integer n >= {MIN_POINTS}, got {n}")
    return Grid(float(x_min), float(x_max), int(n))


@dataclass(frozen=True, eq=False)
class Wavefunction:
    grid: Grid
    amp: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        amp = _frozen(self.amp, complex)
        if amp.shape != (self.grid.n,):
            raise GridMismatchError(f"expected {self.grid.n} amplitudes, got shape {amp.shape}")
        object.__setattr__(self, "amp", amp)

    @classmethod
    def from_function(cls, grid: Grid, f, t: float = 0.0) -> "Wavefunction":
        return cls(grid, f(grid.x), t)

    def norm(self) -> float:
        return float(trapezoid(np.abs(self.amp) ** 2, self.grid.dx))

    def edge_amplitude(self) -> float:
        return float(max(abs(self.amp[0]), abs(self.amp[-1])))

    def with_amp(self, amp, t=None) -> "Wavefunction":
        return Wavefunction(self.grid, amp, self.t if t is None else t)


@dataclass(frozen=True, eq=False)
class DensityFields:
    """Density, current and cumulative distribution at one instant."""

    grid: Grid
    rho: np.ndarray
    j: np.ndarray
    cdf: np.ndarray
    t: float = 0.0
    stacked: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("rho", "j", "cdf"):
            object.__setattr__(self, name, _frozen(getattr(self, name), float))
        object.__setattr__(self, "stacked", np.stack([self.rho, self.j]))

    def cdf_at(self, x) -> np.ndarray:
        """Piecewise-linear interpolation of the CDF at ``x``."""
        return np.interp(x, self.grid.x, self.cdf)


def normalize(psi: Wavefunction) -> Wavefunction:
    nrm = psi.norm()
    if not nrm > 0 or not np.isfinite(nrm):
        raise ZeroNormError(f"cannot normalize a state with norm {nrm}")
    return psi.with_amp(psi.amp / np.sqrt(nrm))


def cumulative_trapezoid(f, dx) -> np.ndarray:
    out = np.empty(len(f))
    out[0] = 0.0
    np.cumsum(0.5 * dx * (f[1:] + f[:-1]), out=out[1:])
    return out


def current(amp, dx, consts: PhysicalConstants = NATURAL) -> np.ndarray:
    """(hbar/m) Im(psi* dpsi/dx), central differences inside, one-sided at the ends."""
    dpsi = np.empty_like(amp)
    dpsi[1:-1] = (amp[2:] - amp[:-2]) / (2 * dx)
    dpsi[0] = (amp[1] - amp[0]) / dx
    dpsi[-1] = (amp[-1] - amp[-2]) / dx
    return (consts.hbar / consts.m) * (amp.real * dpsi.imag - amp.imag * dpsi.real)


def density_current(psi: Wavefunction, consts: PhysicalConstants = NATURAL) -> DensityFields:
    amp = psi.amp
    dx = psi.grid.dx
    rho = amp.real**2 + amp.imag**2
    cdf = np.clip(cumulative_trapezoid(rho, dx), 0.0, 1.0)
    return DensityFields(psi.grid, rho, current(amp, dx, consts), cdf, psi.t)


def invert_cdf(x: np.ndarray, cdf: np.ndarray, p) -> np.ndarray:
    """Inverse of a non-decreasing piecewise-linear CDF sampled at ``x``.

    Flat stretches resolve to their left edge. Values of ``p`` above the last
    CDF sample clamp to the right end of the grid.
    """
    p = np.asarray(p, dtype=float)
    i = np.searchsorted(cdf, p, side="left")
    hi = np.minimum(i, len(x) - 1)
    lo = np.maximum(hi - 1, 0)
    c_lo, c_hi = cdf[lo], cdf[hi]
    span = c_hi - c_lo
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (p - c_lo) / span, 1.0)
    xq = x[lo] + np.clip(w, 0.0, 1.0) * (x[hi] - x[lo])
    return np.where(i >= len(x), x[-1], xq)


def quantile(fields: DensityFields, p):
    """Position below which the probability mass equals ``p``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise OutOfRangeError(f"quantile level must lie in (0, 1), got {p}")
    xq = invert_cdf(fields.grid.x, fields.cdf, p_arr)
    return float(xq) if xq.ndim == 0 else xq


def overlap(psi: Wavefunction, phi: Wavefunction) -> complex:
    if psi.grid != phi.grid:
        raise GridMismatchError(f"overlap of states on different grids: {psi.grid} vs {phi.grid}")
    return complex(trapezoid(np.conj(psi.amp) * phi.amp, psi.grid.dx))
