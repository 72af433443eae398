"""Run configuration: nested dataclasses loaded from a TOML document.

Every section and key is optional; missing values fall back to the canonical
protective-measurement experiment. Unknown sections or keys are rejected, and
all values are validated before any computation starts.
"""
from __future__ import annotations

import copy
import dataclasses
import sys
from dataclasses import dataclass, field, fields

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

POTENTIAL_FAMILIES = ("harmonic", "box", "anharmonic")
METHOD_CHOICES = ("ode", "quantile", "both")
SAMPLING_CHOICES = ("equispaced", "random")


@dataclass
class GridConfig:
    x_min: float = -12.0
    x_max: float = 12.0
    n: int = 2401


@dataclass
class PotentialConfig:
    # harmonic: m w^2 (x-c)^2 / 2; anharmonic adds quartic * (x-c)^4; box: V = 0
    family: str = "harmonic"
    omega: float = 1.0
    center: float = 0.0
    quartic: float = 0.0


@dataclass
class BumpConfig:
    center: float = 2.2
    width: float = 0.25
    strength: float = 0.05


@dataclass
class RampConfig:
    shape: str = "sin2"
    total_time: float = 200.0


@dataclass
class EnsembleConfig:
    n: int = 33
    sampling: str = "equispaced"
    seed: int = 0


@dataclass
class NumericsConfig:
    dt: float = 2e-3
    substeps: int = 2
    store_stride: int = 500
    max_dt_ratio: float = 100.0
    method: str = "both"
    fidelity: bool = True


@dataclass
class PhysicsConfig:
    hbar: float = 1.0
    mass: float = 1.0


@dataclass
class ProtectiveConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    bump: BumpConfig = field(default_factory=BumpConfig)
    ramp: RampConfig = field(default_factory=RampConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)

    def replace(self, **sections) -> "ProtectiveConfig":
        """Copy with some fields overridden, e.g. ``replace(bump={"strength": 0})``."""
        new = copy.deepcopy(self)
        for name, values in sections.items():
            setattr(new, name, dataclasses.replace(getattr(self, name), **values))
        validate(new)
        return new


@dataclass
class EigenConfig:
    k: int = 5


@dataclass
class LemmaConfig:
    shape: str = "sin2"
    total_time: float = 5.0
    strength: float = 0.5
    n_quantiles: int = 9
    refine: bool = True


@dataclass
class SweepConfig:
    strengths: list = field(default_factory=lambda: [0.05, 0.025, 0.0125])
    total_times: list = field(default_factory=lambda: [200.0])


@dataclass
class OutputConfig:
    traj_stride: int = 100
    emit_plot: bool = False


@dataclass
class RunConfig(ProtectiveConfig):
    eigen: EigenConfig = field(default_factory=EigenConfig)
    lemma: LemmaConfig = field(default_factory=LemmaConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def protective(self) -> ProtectiveConfig:
        names = [f.name for f in fields(ProtectiveConfig)]
        return ProtectiveConfig(**{n: dataclasses.replace(getattr(self, n)) for n in names})


def canonical_config() -> ProtectiveConfig:
    return ProtectiveConfig()


def _coerce(value, default, key):
    kind = type(default)
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind is str:
        if isinstance(value, str):
            return value
    elif kind is list:
        if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return [float(v) for v in value]
    raise ConfigError(f"bad value for key '{key}': expected {kind.__name__}, got {value!r}")


def from_dict(doc: dict, cls=RunConfig):
    """Build ``cls`` from a parsed document, rejecting unknown sections and keys."""
    cfg = cls()
    sections = {f.name: f for f in fields(cls)}
    for name, body in doc.items():
        if name not in sections:
            raise ConfigError(f"unknown key '{name}'")
        if not isinstance(body, dict):
            raise ConfigError(f"bad value for key '{name}': expected a table")
        sec = getattr(cfg, name)
        known = {f.name for f in fields(sec)}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"unknown key '{name}.{key}'")
            setattr(sec, key, _coerce(value, getattr(sec, key), f"{name}.{key}"))
    validate(cfg)
    return cfg


def loads(text: str, cls=RunConfig):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return from_dict(doc, cls)


def load(path, cls=RunConfig):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, cls)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(f"bad value for key '{key}': {msg}")


def validate(cfg):
    g = cfg.grid
    _require(g.x_max > g.x_min, "grid.x_max", "must exceed grid.x_min")
    _require(g.n >= 16, "grid.n", "must be >= 16")
    p = cfg.potential
    _require(p.family in POTENTIAL_FAMILIES, "potential.family", f"must be one of {POTENTIAL_FAMILIES}")
    _require(p.omega > 0, "potential.omega", "must be positive")
    _require(p.quartic >= 0, "potential.quartic", "must be non-negative")
    b = cfg.bump
    _require(b.width > 0, "bump.width", "must be positive")
    _require(g.x_min < b.center - 3 * b.width and b.center + 3 * b.width < g.x_max,
             "bump.center", "bump support [center - 3 width, center + 3 width] must lie strictly inside the grid")
    _require(b.strength >= 0, "bump.strength", "must be non-negative")
    r = cfg.ramp
    _require(r.shape in ("sin2", "linear", "smoothstep"), "ramp.shape", "must be sin2, linear or smoothstep")
    _require(r.total_time > 0, "ramp.total_time", "must be positive")
    e = cfg.ensemble
    _require(e.n >= 1, "ensemble.n", "must be >= 1")
    _require(e.sampling in SAMPLING_CHOICES, "ensemble.sampling", f"must be one of {SAMPLING_CHOICES}")
    nm = cfg.numerics
    _require(nm.dt > 0, "numerics.dt", "must be positive")
    _require(nm.substeps >= 1, "numerics.substeps", "must be >= 1")
    _require(nm.store_stride >= 1, "numerics.store_stride", "must be >= 1")
    _require(nm.max_dt_ratio > 0, "numerics.max_dt_ratio", "must be positive")
    _require(nm.method in METHOD_CHOICES, "numerics.method", f"must be one of {METHOD_CHOICES}")
    ph = cfg.physics
    _require(ph.hbar > 0, "physics.hbar", "must be positive")
    _require(ph.mass > 0, "physics.mass", "must be positive")
    if isinstance(cfg, RunConfig):
        _require(cfg.eigen.k >= 1 and cfg.eigen.k <= g.n / 4, "eigen.k", "must satisfy 1 <= k <= grid.n / 4")
        lm = cfg.lemma
        _require(lm.shape in ("sin2", "linear", "smoothstep"), "lemma.shape", "must be sin2, linear or smoothstep")
        _require(lm.total_time > 0, "lemma.total_time", "must be positive")
        _require(lm.strength >= 0, "lemma.strength", "must be non-negative")
        _require(lm.n_quantiles >= 1, "lemma.n_quantiles", "must be >= 1")
        _require(len(cfg.sweep.strengths) >= 1, "sweep.strengths", "must not be empty")
        _require(len(cfg.sweep.total_times) >= 1, "sweep.total_times", "must not be empty")
        _require(all(s >= 0 for s in cfg.sweep.strengths), "sweep.strengths", "must be non-negative")
        _require(all(t > 0 for t in cfg.sweep.total_times), "sweep.total_times", "must be positive")
        _require(cfg.output.traj_stride >= 1, "output.traj_stride", "must be >= 1")
    return cfg
