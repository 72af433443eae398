"""Bohmian trajectories, integrated two independent ways.

``ode`` integrates dx/dt = j/rho with RK4, linearly interpolating rho and j in
space and between consecutive frames. ``quantile`` follows a fixed level of
the instantaneous CDF, which is where the guidance equation must put the
particle in one dimension. The quantile route is the reference when they
disagree.

Both routes are driven by :class:`EnsembleTracker`, which consumes frames one
at a time. It can sit inside :func:`bohmlab.evolve.propagate` as an observer,
so long runs never hold every frame in memory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import NATURAL, DensityFields, Grid, PhysicalConstants, density_current, invert_cdf, quantile
from .errors import InvalidIntervalError, OutOfGridError, OutOfRangeError

log = logging.getLogger(__name__)

METHODS = ("ode", "quantile")
DEFAULT_EPS_REL = 1e-12
DEFAULT_SUBSTEPS = 2


def _interp_rows(rows: np.ndarray, grid: Grid, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of each row of ``rows`` at positions ``x``."""
    # callers guarantee x inside the grid, so s >= 0 and truncation is floor
    s = (x - grid.x_min) / grid.dx
    i = s.astype(np.intp)
    np.minimum(i, grid.n - 2, out=i)
    w = s - i
    lo = rows[:, i]
    return lo + w * (rows[:, i + 1] - lo)


def velocity(fields: DensityFields, x, eps: float | None = None):
    """Guidance velocity j/rho at ``x``, with rho floored at ``eps``.

    The default floor is 1e-12 times the peak density.
    """
    x_arr = np.asarray(x, dtype=float)
    grid = fields.grid
    if np.any(~grid.contains(x_arr)):
        raise OutOfGridError(f"position outside [{grid.x_min}, {grid.x_max}]: {x}")
    if eps is None:
        eps = DEFAULT_EPS_REL * fields.rho.max()
    rho, j = _interp_rows(fields.stacked, grid, np.atleast_1d(x_arr))
    v = j / np.maximum(rho, eps)
    return float(v[0]) if x_arr.ndim == 0 else v


def advance(x, frames, substeps: int = DEFAULT_SUBSTEPS, eps_rel: float = DEFAULT_EPS_REL):
    """RK4 across one frame interval.

    ``frames`` is ``((t_a, fields_a), (t_b, fields_b))``. Fields are
    interpolated linearly in time between the two frames. Positions that would
    leave the box are clamped to the walls.
    """
    (ta, fa), (tb, fb) = frames
    grid = fa.grid
    x_arr = np.asarray(x, dtype=float)
    if np.any(~grid.contains(x_arr)):
        raise OutOfGridError(f"position outside [{grid.x_min}, {grid.x_max}]: {x}")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    rows = np.concatenate([fa.stacked, fb.stacked])
    eps = eps_rel * max(fa.rho.max(), fb.rho.max())
    lo, hi = grid.x_min, grid.x_max

    def vel(y, theta):
        np.maximum(y, lo, out=y)
        np.minimum(y, hi, out=y)
        ra, ja, rb, jb = _interp_rows(rows, grid, y)
        rho = ra + theta * (rb - ra)
        return (ja + theta * (jb - ja)) / np.maximum(rho, eps)

    y = np.atleast_1d(x_arr).copy()
    h = (tb - ta) / substeps
    for s in range(substeps):
        th0, thm, th1 = s / substeps, (s + 0.5) / substeps, (s + 1) / substeps
        k1 = vel(y, th0)
        k2 = vel(y + 0.5 * h * k1, thm)
        k3 = vel(y + 0.5 * h * k2, thm)
        k4 = vel(y + h * k3, th1)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if y.min() < lo or y.max() > hi:
            log.debug("clamped %d positions at the box walls", np.count_nonzero((y < lo) | (y > hi)))
            np.clip(y, lo, hi, out=y)
    return float(y[0]) if x_arr.ndim == 0 else y


@dataclass(frozen=True, eq=False)
class Trajectory:
    p0: float
    times: np.ndarray
    positions: np.ndarray
    method: str

    @property
    def x0(self) -> float:
        return float(self.positions[0])

    def max_drift(self) -> float:
        return float(np.max(np.abs(self.positions - self.positions[0])))

    def final_drift(self) -> float:
        return float(abs(self.positions[-1] - self.positions[0]))


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    quantiles: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        q = np.array(self.quantiles, dtype=float, ndmin=1)
        if q.size == 0 or np.any(~((q > 0) & (q < 1))):
            raise OutOfRangeError("ensemble quantiles must lie in (0, 1)")
        q.flags.writeable = False
        object.__setattr__(self, "quantiles", q)

    @classmethod
    def equispaced(cls, n: int) -> "EnsembleSpec":
        return cls(np.arange(1, n + 1) / (n + 1))

    @classmethod
    def sampled(cls, n: int, seed: int = 0) -> "EnsembleSpec":
        rng = np.random.default_rng(seed)
        q = np.sort(rng.uniform(0.0, 1.0, n))
        # uniform() can return exactly 0.0
        q = np.clip(q, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
        return cls(q, seed)

    def __len__(self):
        return len(self.quantiles)


class EnsembleTracker:
    """Streams frames and advances every member of an ensemble.

    Call with a Wavefunction (observer use) or feed DensityFields directly.
    Positions are recorded at every frame.
    """

    def __init__(self, quantiles, methods=METHODS, substeps=DEFAULT_SUBSTEPS,
                 consts: PhysicalConstants = NATURAL, eps_rel=DEFAULT_EPS_REL):
        self.p0 = np.array(quantiles, dtype=float, ndmin=1)
        unknown = set(methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown trajectory method(s) {sorted(unknown)}")
        self.methods = tuple(m for m in METHODS if m in methods)
        self.substeps = substeps
        self.consts = consts
        self.eps_rel = eps_rel
        self.times: list[float] = []
        self._positions = {m: [] for m in self.methods}
        self._prev: DensityFields | None = None
        self.quantile_drift = np.zeros(len(self.p0))
        self.clamped_frames = 0

    def __call__(self, psi):
        self.feed(density_current(psi, self.consts))

    def feed(self, fields: DensityFields):
        prev = self._prev
        if prev is None:
            x0 = quantile(fields, self.p0)
            for m in self.methods:
                self._positions[m].append(x0)
        else:
            if "ode" in self.methods:
                x = advance(self._positions["ode"][-1], ((prev.t, prev), (fields.t, fields)),
                            self.substeps, self.eps_rel)
                if x.min() <= fields.grid.x_min or x.max() >= fields.grid.x_max:
                    self.clamped_frames += 1
                self._positions["ode"].append(x)
                np.maximum(self.quantile_drift, np.abs(fields.cdf_at(x) - self.p0), out=self.quantile_drift)
            if "quantile" in self.methods:
                self._positions["quantile"].append(invert_cdf(fields.grid.x, fields.cdf, self.p0))
        self.times.append(fields.t)
        self._prev = fields

    @property
    def max_quantile_drift(self) -> float:
        """Largest |CDF(x_ode) - p0| seen so far; zero unless ``ode`` runs."""
        return float(self.quantile_drift.max())

    def positions(self, method: str) -> np.ndarray:
        """Array of shape (frames, ensemble size)."""
        return np.array(self._positions[method])

    def trajectories(self, method: str) -> list[Trajectory]:
        if self.clamped_frames:
            log.warning("%d frames had trajectories clamped at the box walls", self.clamped_frames)
        times = np.array(self.times)
        pos = self.positions(method)
        return [Trajectory(float(p), times, pos[:, i].copy(), method) for i, p in enumerate(self.p0)]


def _track(quantiles, trace, methods, substeps) -> EnsembleTracker:
    tracker = EnsembleTracker(quantiles, methods, substeps, trace.consts)
    for k in range(len(trace)):
        tracker.feed(trace.fields(k))
    return tracker


def run_ensemble(spec: EnsembleSpec, trace, method: str = "quantile", substeps: int = DEFAULT_SUBSTEPS):
    """One trajectory per quantile in ``spec``, driven by the stored frames of ``trace``."""
    return _track(spec.quantiles, trace, (method,), substeps).trajectories(method)


def trajectory_ode(p0: float, trace, substeps: int = DEFAULT_SUBSTEPS) -> Trajectory:
    return run_ensemble(EnsembleSpec([p0]), trace, "ode", substeps)[0]


def trajectory_quantile(p0: float, trace) -> Trajectory:
    return run_ensemble(EnsembleSpec([p0]), trace, "quantile")[0]


@dataclass(frozen=True)
class CrossingReport:
    entered: bool
    first_entry: float | None
    occupancy_fraction: float


def indicator_samples(positions, interval) -> np.ndarray:
    a, b = interval
    positions = np.asarray(positions)
    return ((positions >= a) & (positions <= b)).astype(float)


def crossing_report(traj: Trajectory, interval) -> CrossingReport:
    a, b = interval
    if not a < b:
        raise InvalidIntervalError(f"need a < b, got [{a}, {b}]")
    inside = indicator_samples(traj.positions, interval)
    entered = bool(inside.any())
    first = float(traj.times[np.argmax(inside > 0)]) if entered else None
    span = traj.times[-1] - traj.times[0]
    if span > 0:
        occ = float(np.sum(0.5 * (inside[1:] + inside[:-1]) * np.diff(traj.times)) / span)
    else:
        occ = float(inside[0])
    return CrossingReport(entered, first, occ)


def sup_difference(a: Trajectory, b: Trajectory) -> float:
    return float(np.max(np.abs(a.positions - b.positions)))


def ks_distance(samples, fields: DensityFields) -> float:
    """Kolmogorov-Smirnov distance between an empirical sample and the CDF of ``fields``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    f = fields.cdf_at(x)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def dual_method_tolerance(grid: Grid) -> float:
    """Allowed sup |x_ode - x_quantile| at reference resolution: 5e-3 per 20 length units of box."""
    return 5e-3 * grid.length / 20.0


def quantile_tolerance(grid: Grid) -> float:
    """Positional accuracy of the piecewise-linear CDF inversion, one grid spacing."""
    return grid.dx


def is_non_crossing(positions) -> bool:
    """True if every row of a (frames, members) array is non-decreasing.

    Members must be ordered by increasing initial quantile.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    return bool(np.all(np.diff(pos, axis=1) >= 0.0))
