import warnings

import numpy as np
import pytest

from bohmlab.bohm import Trajectory
from bohmlab.config import ProtectiveConfig
from bohmlab.core import build_grid, density_current, quantile
from bohmlab.errors import BumpOutsideGridError, EmptyTrajectoryError, StageError
from bohmlab.protect import (
    Indicator,
    build_bump,
    ensemble_average,
    position,
    run_protective,
    time_average,
)
from bohmlab.spectral import eigenstates, harmonic


def small_config(**sections) -> ProtectiveConfig:
    base = ProtectiveConfig().replace(
        grid={"n": 601},
        ramp={"total_time": 4.0},
        ensemble={"n": 15},
        numerics={"dt": 0.01, "store_stride": 50},
    )
    return base.replace(**sections) if sections else base


def test_bump_shape():
    g = build_grid(-12, 12, 2401)
    b = build_bump(g, 1.0, 0.25)
    i = np.argmin(np.abs(g.x - 1.0))
    assert b.v[i] == 1.0
    assert b.support == (0.25, 1.75)
    assert np.all(b.v[np.abs(g.x - 1.0) >= 0.75 - 1e-12] == 0.0)
    assert np.sum(b.v) * g.dx == pytest.approx(0.25 * np.sqrt(2 * np.pi), rel=1e-2)


def test_bump_outside():
    g = build_grid(-12, 12, 241)
    with pytest.raises(BumpOutsideGridError):
        build_bump(g, 11.5, 0.25)
    with pytest.raises(BumpOutsideGridError):
        build_bump(g, 0.0, 0.0)


def _traj(xs):
    xs = np.asarray(xs, dtype=float)
    return Trajectory(0.5, np.linspace(0, 2, len(xs)), xs, "quantile")


def test_time_average():
    assert time_average(_traj([1.25] * 7), position) == 1.25
    ind = Indicator(0.0, 1.0)
    assert time_average(_traj([-1.0] * 7), ind) == 0.0
    assert time_average(_traj([0.5] * 7), ind) == 1.0
    assert time_average(_traj([0.0, 1.0, 2.0])) == pytest.approx(1.0)
    with pytest.raises(EmptyTrajectoryError):
        time_average(_traj([0.3]))


def test_ensemble_average():
    g = build_grid(-10, 10, 1001)
    f = density_current(eigenstates(harmonic(g), 1).states[0])
    assert abs(ensemble_average(f, lambda x: np.ones_like(x)) - 1) < 1e-8
    assert abs(ensemble_average(f, position)) < 1e-8
    ind = Indicator(0.3, 1.7)
    assert abs(ensemble_average(f, ind) - (f.cdf_at(1.7) - f.cdf_at(0.3))) < 1e-10
    # the plain trapezoid of the indicator agrees to grid accuracy
    assert abs(ensemble_average(f, lambda x: ind(x)) - ensemble_average(f, ind)) < 2 * g.dx


def test_static_run_is_frozen():
    cfg = small_config(bump={"strength": 0.0, "center": 0.5})
    rep = run_protective(cfg)
    assert rep.max_position_drift() < 1e-6
    g = build_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
    f = density_current(eigenstates(harmonic(g), 1).states[0])
    x0 = quantile(f, np.arange(1, 16) / 16)
    a, b = rep.interval
    inside = np.mean((x0 >= a) & (x0 <= b))
    assert 0 < inside < 1
    assert rep.fraction_never_entered() == pytest.approx(1 - inside)


def test_report_fields_and_ranges():
    rep = run_protective(small_config())
    s = rep.summary()
    assert 0 <= s["fraction_never_entered"] <= 1
    assert np.all((rep.interval_prob >= 0) & (rep.interval_prob <= 1))
    assert s["methods"] == ["ode", "quantile"]
    assert s["weakness_ratio"] == pytest.approx(0.05, rel=1e-3)
    assert s["max_sup_difference"] is not None
    assert s["config"]["numerics"]["dt"] == 0.01
    assert rep.gap == pytest.approx(1.0, abs=1e-2)


def test_deterministic():
    cfg = small_config(ensemble={"sampling": "random", "seed": 5})
    a, b = run_protective(cfg), run_protective(cfg)
    assert a.summary() == b.summary()
    for m in a.methods:
        for ta, tb in zip(a.trajectories[m], b.trajectories[m]):
            assert np.array_equal(ta.positions, tb.positions)


def test_weakness_warning():
    with pytest.warns(UserWarning, match="not weak"):
        run_protective(small_config(bump={"strength": 0.5}, numerics={"method": "quantile"}))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        run_protective(small_config(numerics={"method": "quantile"}))


def test_errors_name_the_stage():
    cfg = small_config(numerics={"dt": 0.03})
    with pytest.raises(StageError, match="^propagate: ResolutionError"):
        run_protective(cfg)


def test_single_method():
    rep = run_protective(small_config(numerics={"method": "ode"}))
    assert rep.methods == ("ode",)
    assert rep.reference_method == "ode"
    assert rep.sup_differences() is None
    assert np.isfinite(rep.max_quantile_drift)
