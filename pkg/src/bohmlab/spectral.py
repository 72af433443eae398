"""Bound states of H = -(hbar^2/2m) d^2/dx^2 + V(x) on a Dirichlet box.

The Hamiltonian acts on the n-2 interior grid points; amplitudes at the two
walls are pinned to zero. Eigenpairs come from LAPACK's symmetric tridiagonal
solver followed by one pass of inverse iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, lapack

from .core import NATURAL, Grid, PhysicalConstants, Wavefunction
from .errors import DegeneracyError, OutOfRangeError

DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PotentialSample:
    grid: Grid
    v: np.ndarray
    support: tuple[float, float] | None = None

    def __post_init__(self):
        v = np.array(self.v, dtype=float, copy=True)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} potential values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential must be finite everywhere")
        v.flags.writeable = False
        object.__setattr__(self, "v", v)

    @classmethod
    def from_function(cls, grid: Grid, f) -> "PotentialSample":
        return cls(grid, np.broadcast_to(f(grid.x), (grid.n,)))

    def shifted(self, c: float) -> "PotentialSample":
        return PotentialSample(self.grid, self.v + c, self.support)


def harmonic(grid: Grid, omega: float = 1.0, m: float = 1.0, center: float = 0.0) -> PotentialSample:
    return PotentialSample(grid, 0.5 * m * omega**2 * (grid.x - center) ** 2)


def flat(grid: Grid) -> PotentialSample:
    return PotentialSample(grid, np.zeros(grid.n))


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix on the interior points of a grid."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def size(self) -> int:
        return len(self.diag)

    def matvec(self, u):
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def to_dense(self):
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)


def kinetic_coefficients(dx: float, consts: PhysicalConstants) -> tuple[float, float]:
    """Diagonal and off-diagonal weights of the 3-point kinetic operator."""
    c = consts.hbar**2 / (consts.m * dx**2)
    return c, -0.5 * c


def discretize_hamiltonian(v: PotentialSample, consts: PhysicalConstants = NATURAL) -> TridiagonalOperator:
    kd, ko = kinetic_coefficients(v.grid.dx, consts)
    interior = v.v[1:-1]
    return TridiagonalOperator(kd + interior, np.full(len(interior) - 1, ko))


def apply_hamiltonian(psi: Wavefunction, v: PotentialSample, consts: PhysicalConstants = NATURAL) -> np.ndarray:
    """H psi on the full grid (zero at the walls)."""
    h = discretize_hamiltonian(v, consts)
    out = np.zeros(psi.grid.n, dtype=complex)
    out[1:-1] = h.matvec(psi.amp[1:-1])
    return out


@dataclass(frozen=True, eq=False)
class SpectralResult:
    energies: np.ndarray
    states: tuple[Wavefunction, ...]

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])


def _inverse_iteration(h: TridiagonalOperator, energy: float, vec: np.ndarray) -> np.ndarray:
    shift = energy + 1e-12 * max(1.0, abs(energy))
    d = h.diag - shift
    _, _, _, y, info = lapack.dgtsv(h.off.copy(), d, h.off.copy(), vec.copy())
    if info != 0 or not np.all(np.isfinite(y)):
        return vec
    y /= np.linalg.norm(y)
    return y if np.dot(y, vec) >= 0 else -y


def _fix_phase(u: np.ndarray) -> np.ndarray:
    return u if u[np.argmax(np.abs(u))] > 0 else -u


def eigenstates(v: PotentialSample, k: int, consts: PhysicalConstants = NATURAL) -> SpectralResult:
    """The ``k`` lowest eigenpairs, normalized and phase-fixed.

    Raises DegeneracyError if two returned levels are closer than
    1e-10 * max(1, |E|).
    """
    grid = v.grid
    if not 1 <= k <= grid.n / 4:
        raise OutOfRangeError(f"need 1 <= k <= n/4 = {grid.n / 4}, got k={k}")
    h = discretize_hamiltonian(v, consts)
    energies, vecs = eigh_tridiagonal(h.diag, h.off, select="i", select_range=(0, k - 1))

    gaps = np.diff(energies)
    scale = np.maximum(1.0, np.abs(energies[1:]))
    if np.any(gaps < DEGENERACY_RTOL * scale):
        i = int(np.argmax(gaps < DEGENERACY_RTOL * scale))
        raise DegeneracyError(f"levels {i} and {i + 1} are degenerate: {energies[i]!r}, {energies[i + 1]!r}")

    refined = np.empty_like(vecs)
    for i in range(k):
        u = _inverse_iteration(h, energies[i], vecs[:, i])
        # re-orthogonalize against lower states; inverse iteration can leak a little
        for q in range(i):
            u -= np.dot(refined[:, q], u) * refined[:, q]
        refined[:, i] = u / np.linalg.norm(u)
    energies = np.array([refined[:, i] @ h.matvec(refined[:, i]) for i in range(k)])

    states = []
    scale = 1.0 / np.sqrt(grid.dx)
    for i in range(k):
        amp = np.zeros(grid.n)
        amp[1:-1] = _fix_phase(refined[:, i]) * scale
        states.append(Wavefunction(grid, amp, 0.0))
    return SpectralResult(energies, tuple(states))


def ground_state(v: PotentialSample, consts: PhysicalConstants = NATURAL) -> tuple[float, Wavefunction]:
    res = eigenstates(v, 1, consts)
    return float(res.energies[0]), res.states[0]


def count_nodes(psi: Wavefunction, rtol: float = 1e-8) -> int:
    """Sign changes of the real part, ignoring amplitudes below rtol * max."""
    u = psi.amp.real
    u = u[np.abs(u) > rtol * np.abs(u).max()]
    return int(np.count_nonzero(np.diff(np.sign(u)) != 0))
