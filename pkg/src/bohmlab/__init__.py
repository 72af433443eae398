"""bohmlab: one-dimensional Bohmian trajectories on a grid.

Crank-Nicolson wavefunction propagation, a tridiagonal eigensolver, two
independent trajectory integrators and the protective-measurement
experiment built on top of them.
"""
from .bohm import (
    EnsembleSpec,
    EnsembleTracker,
    Trajectory,
    advance,
    crossing_report,
    ks_distance,
    run_ensemble,
    trajectory_ode,
    trajectory_quantile,
    velocity,
)
from .config import ProtectiveConfig, RunConfig, canonical_config
from .core import (
    NATURAL,
    DensityFields,
    Grid,
    PhysicalConstants,
    Wavefunction,
    build_grid,
    density_current,
    normalize,
    overlap,
    quantile,
)
from .errors import BohmLabError
from .evolve import EvolutionTrace, PotentialSchedule, RampSchedule, propagate, step
from .protect import ExperimentReport, Indicator, build_bump, ensemble_average, run_protective, time_average
from .spectral import PotentialSample, eigenstates, ground_state, harmonic

__version__ = "0.1.0"
