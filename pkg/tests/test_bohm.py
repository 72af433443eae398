import numpy as np
import pytest

from bohmlab.bohm import (
    EnsembleSpec,
    EnsembleTracker,
    Trajectory,
    advance,
    crossing_report,
    is_non_crossing,
    ks_distance,
    run_ensemble,
    sup_difference,
    trajectory_ode,
    trajectory_quantile,
    velocity,
)
from bohmlab.core import Wavefunction, build_grid, density_current, normalize
from bohmlab.errors import InvalidIntervalError, OutOfGridError, OutOfRangeError
from bohmlab.evolve import static_schedule, propagate
from bohmlab.spectral import eigenstates, harmonic

SIGMA0 = 1.0


def sigma(t, s0=SIGMA0):
    return s0 * np.sqrt(1 + (t / (2 * s0**2)) ** 2)


def free_gaussian(g, t, s0=SIGMA0):
    # exact spreading packet, hbar = m = 1
    z = 1 + 1j * t / (2 * s0**2)
    return normalize(Wavefunction.from_function(g, lambda x: np.exp(-(x**2) / (4 * s0**2 * z)) / np.sqrt(z), t))


@pytest.fixture(scope="module")
def osc():
    g = build_grid(-10, 10, 1001)
    v = harmonic(g)
    return g, v, eigenstates(v, 2)


def test_velocity_vanishes_for_real_state(osc):
    g, _, res = osc
    f = density_current(res.states[0])
    assert np.max(np.abs(velocity(f, np.linspace(-9.9, 9.9, 301)))) < 1e-10


def test_velocity_free_gaussian():
    g = build_grid(-20, 20, 4001)
    t = 1.0
    f = density_current(free_gaussian(g, t))
    x = np.array([-2.0, -0.5, 0.3, 1.0, 2.5])
    rate = (t / (4 * SIGMA0**4)) / (1 + (t / (2 * SIGMA0**2)) ** 2)
    np.testing.assert_allclose(velocity(f, x), x * rate, rtol=1e-2)


def test_velocity_floor_is_finite():
    g = build_grid(-20, 20, 401)
    f = density_current(free_gaussian(g, 0.5))
    v = velocity(f, 19.9)
    assert np.isfinite(v)
    assert np.isfinite(velocity(f, 19.9, eps=1e-3))


def test_velocity_out_of_grid(osc):
    g, _, res = osc
    with pytest.raises(OutOfGridError):
        velocity(density_current(res.states[0]), 10.5)


def test_static_frames_leave_particle(osc):
    g, _, res = osc
    f = density_current(res.states[0])
    x = np.array([-1.3, 0.0, 0.4, 2.0])
    np.testing.assert_allclose(advance(x, ((0.0, f), (1.0, f))), x, atol=1e-10)


def _free_frames(g, dt, T):
    ts = np.arange(0.0, T + dt / 2, dt)
    return [(t, density_current(free_gaussian(g, t))) for t in ts]


def test_advance_free_gaussian():
    g = build_grid(-20, 20, 4001)
    frames = _free_frames(g, 0.01, 1.0)
    x = 1.0
    for a, b in zip(frames[:-1], frames[1:]):
        x = advance(x, (a, b))
    assert abs(x - sigma(1.0) / SIGMA0) < 1e-3


def test_substep_self_convergence():
    g = build_grid(-20, 20, 4001)
    frames = _free_frames(g, 0.05, 1.0)
    xs = []
    for sub in (2, 4):
        x = np.array([-1.5, 1.0])
        for a, b in zip(frames[:-1], frames[1:]):
            x = advance(x, (a, b), substeps=sub)
        xs.append(x)
    assert np.max(np.abs(xs[0] - xs[1])) < 1e-6


def test_advance_out_of_grid(osc):
    g, _, res = osc
    f = density_current(res.states[0])
    with pytest.raises(OutOfGridError):
        advance(-11.0, ((0.0, f), (1.0, f)))


@pytest.fixture(scope="module")
def static_trace(osc):
    g, v, res = osc
    return propagate(res.states[0], static_schedule(v, 1.0), 0.01, store_stride=10)


def test_symmetric_median_stays_at_origin(static_trace):
    g = static_trace.grid
    for tr in (trajectory_ode(0.5, static_trace), trajectory_quantile(0.5, static_trace)):
        assert np.max(np.abs(tr.positions)) < g.dx
        assert tr.max_drift() < 1e-10


def test_three_member_ensemble_mirror(static_trace):
    g = static_trace.grid
    trajs = run_ensemble(EnsembleSpec.equispaced(3), static_trace, "quantile")
    assert [t.p0 for t in trajs] == [0.25, 0.5, 0.75]
    lo, mid, hi = (t.positions for t in trajs)
    assert np.max(np.abs(lo + hi)) < g.dx
    assert np.max(np.abs(mid)) < g.dx
    assert np.all(lo < 0)


def test_ensemble_spec():
    q = EnsembleSpec.equispaced(9).quantiles
    assert np.all(np.diff(q) > 0) and q[0] == 0.1
    a, b = EnsembleSpec.sampled(50, 7), EnsembleSpec.sampled(50, 7)
    np.testing.assert_array_equal(a.quantiles, b.quantiles)
    assert not np.array_equal(a.quantiles, EnsembleSpec.sampled(50, 8).quantiles)
    with pytest.raises(OutOfRangeError):
        EnsembleSpec([0.2, 1.0])
    with pytest.raises(OutOfRangeError):
        EnsembleSpec([])


def test_tracker_rejects_unknown_method():
    with pytest.raises(ValueError):
        EnsembleTracker([0.5], methods=("euler",))


def _traj(xs, method="quantile"):
    xs = np.asarray(xs, dtype=float)
    return Trajectory(0.5, np.linspace(0, 1, len(xs)), xs, method)


def test_crossing_outside():
    r = crossing_report(_traj([0.0] * 11), (1.0, 2.0))
    assert not r.entered and r.first_entry is None and r.occupancy_fraction == 0.0


def test_crossing_inside():
    r = crossing_report(_traj([1.5] * 11), (1.0, 2.0))
    assert r.entered and r.first_entry == 0.0 and r.occupancy_fraction == 1.0


def test_crossing_partial():
    xs = [0.0] * 5 + [1.5] * 6
    r = crossing_report(_traj(xs), (1.0, 2.0))
    assert r.entered and r.first_entry == pytest.approx(0.5)
    assert r.occupancy_fraction == pytest.approx(0.55)


def test_crossing_bad_interval():
    with pytest.raises(InvalidIntervalError):
        crossing_report(_traj([0.0, 0.0]), (2.0, 1.0))


def test_sup_difference():
    assert sup_difference(_traj([0, 1, 2]), _traj([0, 1.5, 2])) == 0.5


def test_non_crossing_check():
    assert is_non_crossing([[0, 1, 1, 2], [0.5, 0.6, 0.7, 0.8]])
    assert not is_non_crossing([[0, 1, 0.9]])


def test_ks_distance_of_exact_quantiles(osc):
    g, _, res = osc
    f = density_current(res.states[0])
    n = 1000
    x = np.interp((np.arange(n) + 0.5) / n, f.cdf, g.x)
    assert ks_distance(x, f) < 1.5 / n
    assert ks_distance(x + 1.0, f) > 0.3
