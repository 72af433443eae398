"""Protective-measurement experiment: time averages against ensemble averages.

A particle starts in the ground state of a confining well. A localized bump is
switched on and off slowly and weakly. The wavefunction barely changes, so
every trajectory stays near its starting quantile, and particles that start
outside the bump's interval never visit it. Meanwhile the ensemble keeps a
finite probability there for the whole run.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bohm import EnsembleSpec, EnsembleTracker, Trajectory, crossing_report
from .config import ProtectiveConfig, canonical_config, to_dict
from .core import DensityFields, Grid, PhysicalConstants, build_grid, density_current, trapezoid
from .errors import BumpOutsideGridError, EmptyTrajectoryError, StageError
from .evolve import EvolutionTrace, PotentialSchedule, RampSchedule, propagate
from .spectral import PotentialSample, eigenstates


WEAKNESS_WARN = 0.2

__all__ = [
    "ExperimentReport",
    "Indicator",
    "ProtectiveConfig",
    "build_bump",
    "build_schedule",
    "canonical_config",
    "ensemble_average",
    "position",
    "run_protective",
    "run_tracked",
    "time_average",
]


def build_bump(grid: Grid, center: float, width: float) -> PotentialSample:
    """Unit-peak Gaussian truncated at three widths; ``support`` holds that interval."""
    a, b = center - 3 * width, center + 3 * width
    if not (width > 0 and grid.x_min <= a and b <= grid.x_max):
        raise BumpOutsideGridError(f"bump support [{a}, {b}] not inside [{grid.x_min}, {grid.x_max}]")
    x = grid.x
    # strict, with slack for rounding, so grid points on the support edge get exactly 0
    inside = np.abs(x - center) < 3 * width - 1e-9 * grid.dx
    v = np.where(inside, np.exp(-((x - center) ** 2) / (2 * width**2)), 0.0)
    return PotentialSample(grid, v, (a, b))


def base_potential(grid: Grid, cfg: ProtectiveConfig) -> PotentialSample:
    p = cfg.potential
    if p.family == "box":
        return PotentialSample(grid, np.zeros(grid.n))
    y = grid.x - p.center
    v = 0.5 * cfg.physics.mass * p.omega**2 * y**2
    if p.family == "anharmonic":
        v = v + p.quartic * y**4
    return PotentialSample(grid, v)


def build_schedule(cfg: ProtectiveConfig) -> PotentialSchedule:
    grid = build_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
    bump = build_bump(grid, cfg.bump.center, cfg.bump.width)
    ramp = RampSchedule(cfg.ramp.total_time, cfg.ramp.shape)
    return PotentialSchedule(base_potential(grid, cfg), bump, cfg.bump.strength, ramp)


def constants(cfg: ProtectiveConfig) -> PhysicalConstants:
    return PhysicalConstants(cfg.physics.hbar, cfg.physics.mass)


def ensemble_spec(cfg: ProtectiveConfig) -> EnsembleSpec:
    e = cfg.ensemble
    if e.sampling == "random":
        return EnsembleSpec.sampled(e.n, e.seed)
    return EnsembleSpec.equispaced(e.n)


def methods_for(choice: str) -> tuple[str, ...]:
    return ("ode", "quantile") if choice == "both" else (choice,)


def position(x):
    return x


@dataclass(frozen=True)
class Indicator:
    """Indicator function of the closed interval [a, b]."""

    a: float
    b: float

    def __call__(self, x):
        x = np.asarray(x)
        return ((x >= self.a) & (x <= self.b)).astype(float)


def time_average(traj: Trajectory, f=position) -> float:
    """Trapezoid-in-time mean of ``f`` along a trajectory."""
    if len(traj.times) < 2:
        raise EmptyTrajectoryError(f"need at least 2 samples, got {len(traj.times)}")
    vals = np.broadcast_to(f(traj.positions), traj.positions.shape).astype(float)
    t = traj.times
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t)) / (t[-1] - t[0]))


def ensemble_average(fields: DensityFields, f=position) -> float:
    """Integral of f * rho. Indicators are evaluated through the interpolated CDF."""
    if isinstance(f, Indicator):
        return float(fields.cdf_at(f.b) - fields.cdf_at(f.a))
    vals = np.broadcast_to(f(fields.grid.x), fields.rho.shape)
    return float(trapezoid(vals * fields.rho, fields.grid.dx))


class _FrameRecorder:
    """Observer: computes fields once per step and fans them out."""

    def __init__(self, tracker: EnsembleTracker, indicator: Indicator, consts):
        self.tracker, self.indicator, self.consts = tracker, indicator, consts
        self.times: list[float] = []
        self.interval_prob: list[float] = []

    def __call__(self, psi):
        fields = density_current(psi, self.consts)
        self.tracker.feed(fields)
        self.times.append(psi.t)
        self.interval_prob.append(ensemble_average(fields, self.indicator))


@dataclass(eq=False)
class ExperimentReport:
    config: ProtectiveConfig
    interval: tuple[float, float]
    ground_energy: float
    gap: float
    weakness_ratio: float
    initial_interval_mass: float
    times: np.ndarray
    interval_prob: np.ndarray
    frame_times: np.ndarray
    norms: np.ndarray
    fidelities: np.ndarray
    infidelities: np.ndarray
    trajectories: dict = field(default_factory=dict)
    crossings: dict = field(default_factory=dict)
    occupancy: dict = field(default_factory=dict)
    max_quantile_drift: float = float("nan")
    quantile_drift: np.ndarray | None = None
    trace: EvolutionTrace | None = field(default=None, repr=False)

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(self.trajectories)

    @property
    def reference_method(self) -> str:
        return "quantile" if "quantile" in self.trajectories else "ode"

    @property
    def interval_prob_time_avg(self) -> float:
        t, p = self.times, self.interval_prob
        return float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(t)) / (t[-1] - t[0]))

    def fraction_never_entered(self, method: str | None = None) -> float:
        reps = self.crossings[method or self.reference_method]
        return float(np.mean([not r.entered for r in reps]))

    def never_entered(self, method: str | None = None) -> list[int]:
        reps = self.crossings[method or self.reference_method]
        return [i for i, r in enumerate(reps) if not r.entered]

    def max_position_drift(self, method: str | None = None) -> float:
        methods = [method] if method else self.methods
        return max(tr.max_drift() for m in methods for tr in self.trajectories[m])

    def max_final_drift(self, method: str | None = None) -> float:
        methods = [method] if method else self.methods
        return max(tr.final_drift() for m in methods for tr in self.trajectories[m])

    def sup_differences(self) -> np.ndarray | None:
        if len(self.methods) < 2:
            return None
        return np.array([np.max(np.abs(a.positions - b.positions))
                         for a, b in zip(self.trajectories["ode"], self.trajectories["quantile"])])

    @property
    def min_fidelity(self) -> float:
        return float(np.nanmin(self.fidelities)) if np.any(np.isfinite(self.fidelities)) else float("nan")

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelities[-1])

    @property
    def final_infidelity(self) -> float:
        return float(self.infidelities[-1])

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - 1.0)))

    def summary(self) -> dict:
        sup = self.sup_differences()
        ref = self.reference_method
        never = self.never_entered()
        occ_never = [self.occupancy[ref][i] for i in never]
        out = {
            "reference_method": ref,
            "methods": list(self.methods),
            "n_trajectories": len(self.crossings[ref]),
            "interval_a": self.interval[0],
            "interval_b": self.interval[1],
            "ground_energy": self.ground_energy,
            "gap": self.gap,
            "weakness_ratio": self.weakness_ratio,
            "initial_interval_mass": self.initial_interval_mass,
            "ensemble_interval_prob_time_avg": self.interval_prob_time_avg,
            "ensemble_interval_prob_min": float(np.min(self.interval_prob)),
            "fraction_never_entered": self.fraction_never_entered(),
            "max_occupancy_never_entered": max(occ_never) if occ_never else None,
            "min_fidelity": self.min_fidelity,
            "final_fidelity": self.final_fidelity,
            "final_infidelity": self.final_infidelity,
            "max_norm_drift": self.max_norm_drift,
            "max_position_drift": self.max_position_drift(),
            "max_final_drift": self.max_final_drift(),
            "max_quantile_drift": self.max_quantile_drift,
            "max_sup_difference": float(sup.max()) if sup is not None else None,
            "config": to_dict(self.config),
        }
        if "ode" in self.methods and ref != "ode":
            out["fraction_never_entered_ode"] = self.fraction_never_entered("ode")
        return out


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _initial_state(sched, consts):
    spectrum = _stage("eigensolve", eigenstates, sched.base, 2, consts)
    return spectrum


def run_tracked(cfg: ProtectiveConfig, quantiles=None, methods=None, fidelity=None, spectrum=None):
    """Propagate the configured ground state with an ensemble tracker attached.

    Returns ``(trace, recorder)``; the recorder holds the tracker plus the
    per-step ensemble probability of the bump interval.
    """
    consts = constants(cfg)
    sched = _stage("setup", build_schedule, cfg)
    if spectrum is None:
        spectrum = _initial_state(sched, consts)
    if quantiles is None:
        quantiles = _stage("setup", ensemble_spec, cfg).quantiles
    methods = methods or methods_for(cfg.numerics.method)
    tracker = EnsembleTracker(quantiles, methods, cfg.numerics.substeps, consts)
    recorder = _FrameRecorder(tracker, Indicator(*sched.interval), consts)
    trace = _stage(
        "propagate", propagate, spectrum.states[0], sched, cfg.numerics.dt,
        store_stride=cfg.numerics.store_stride, consts=consts,
        fidelity=cfg.numerics.fidelity if fidelity is None else fidelity,
        observers=(recorder,), max_dt_ratio=cfg.numerics.max_dt_ratio,
    )
    return trace, recorder


def run_protective(config: ProtectiveConfig | None = None) -> ExperimentReport:
    """Ground state, slow perturbation, ensemble of trajectories, then aggregate."""
    cfg = config or canonical_config()
    consts = constants(cfg)
    sched = _stage("setup", build_schedule, cfg)
    interval = sched.interval

    spectrum = _initial_state(sched, consts)
    weakness = cfg.bump.strength * float(np.max(np.abs(sched.bump.v))) / spectrum.gap
    if weakness > WEAKNESS_WARN:
        warnings.warn(f"perturbation is not weak: lambda*max|b|/gap = {weakness:.3g} > {WEAKNESS_WARN}",
                      stacklevel=2)

    methods = methods_for(cfg.numerics.method)
    trace, recorder = run_tracked(cfg, methods=methods, spectrum=spectrum)
    tracker = recorder.tracker
    indicator = recorder.indicator

    def aggregate():
        trajs = {m: tracker.trajectories(m) for m in methods}
        crossings = {m: [crossing_report(tr, interval) for tr in trajs[m]] for m in methods}
        occupancy = {m: [time_average(tr, indicator) for tr in trajs[m]] for m in methods}
        return trajs, crossings, occupancy

    trajs, crossings, occupancy = _stage("aggregate", aggregate)
    prob = np.array(recorder.interval_prob)
    return ExperimentReport(
        config=cfg,
        interval=interval,
        ground_energy=float(spectrum.energies[0]),
        gap=spectrum.gap,
        weakness_ratio=weakness,
        initial_interval_mass=float(prob[0]),
        times=np.array(recorder.times),
        interval_prob=prob,
        frame_times=trace.times,
        norms=trace.norms,
        fidelities=trace.fidelities,
        infidelities=trace.infidelities,
        trajectories=trajs,
        crossings=crossings,
        occupancy=occupancy,
        max_quantile_drift=tracker.max_quantile_drift if "ode" in methods else float("nan"),
        quantile_drift=tracker.quantile_drift.copy() if "ode" in methods else None,
        trace=trace,
    )
