import numpy as np
import pytest

from bohmlab.core import Wavefunction, build_grid, normalize, overlap
from bohmlab.errors import MissingFrameError, ResolutionError
from bohmlab.evolve import (
    CrankNicolson,
    PotentialSchedule,
    RampSchedule,
    continuity_residual,
    energy_expectation,
    infidelity,
    n_steps_for,
    propagate,
    static_schedule,
    step,
)
from bohmlab.protect import build_bump
from bohmlab.spectral import eigenstates, harmonic


@pytest.fixture(scope="module")
def small():
    g = build_grid(-12, 12, 601)
    v = harmonic(g)
    res = eigenstates(v, 2)
    return g, v, build_bump(g, 2.2, 0.25), res


def displaced(g, x0=1.0, k=0.0):
    return normalize(Wavefunction.from_function(g, lambda x: np.exp(-((x - x0) ** 2) / 2 + 1j * k * x)))


@pytest.mark.parametrize("shape", ["sin2", "linear", "smoothstep"])
def test_ramp_shape(shape):
    r = RampSchedule(10.0, shape)
    assert r(0.0) == 0.0 and abs(r(10.0)) < 1e-15
    assert r(5.0) == pytest.approx(1.0)
    t = np.linspace(0, 10, 1001)
    g = r(t)
    assert g.max() == pytest.approx(1.0) and g.min() >= 0.0
    # continuity: no jumps larger than the local slope allows
    assert np.max(np.abs(np.diff(g))) < 0.01


def test_ramp_rejects_bad_input():
    with pytest.raises(ValueError):
        RampSchedule(0.0)
    with pytest.raises(ValueError):
        RampSchedule(1.0, "cosine")


def test_schedule_values(small):
    g, v, b, _ = small
    s = PotentialSchedule(v, b, 0.3, RampSchedule(4.0))
    np.testing.assert_allclose(s.values(2.0), v.v + 0.3 * b.v)
    np.testing.assert_array_equal(s.values(0.0), v.v)
    assert s.interval == (2.2 - 0.75, 2.2 + 0.75)
    np.testing.assert_allclose(s.at(1.0).v, s.values(1.0))


def test_eigenstate_phase_per_step(small):
    g, v, _, res = small
    phi, e0 = res.states[0], res.energies[0]
    dt = 2e-3
    out = step(phi, v, dt)
    assert abs(overlap(phi, out) - np.exp(-1j * e0 * dt)) < 1e-8
    assert np.max(np.abs(out.amp - np.exp(-1j * e0 * dt) * phi.amp)) < 1e-8
    assert out.t == pytest.approx(dt)


def test_reversible(small):
    g, v, _, _ = small
    psi = displaced(g, 1.5, 0.8)
    back = step(step(psi, v, 0.01), v, -0.01)
    assert np.max(np.abs(back.amp - psi.amp)) < 1e-10


def test_norm_after_many_steps():
    g = build_grid(-12, 12, 201)
    v = harmonic(g)
    psi = displaced(g, 2.0, 0.5)
    tr = propagate(psi, static_schedule(v, 100.0), 1e-3, store_stride=10_000, fidelity=False)
    assert tr.times.size == 11
    assert tr.max_norm_drift() < 1e-8


def test_static_eigenstate_final_phase(small):
    g, v, _, res = small
    phi, e0 = res.states[0], res.energies[0]
    T = 10.0
    tr = propagate(phi, static_schedule(v, T), 2e-3, store_stride=1000)
    assert np.max(np.abs(tr.final.amp - np.exp(-1j * e0 * T) * phi.amp)) < 1e-6
    assert np.all(tr.infidelities < 1e-12)


def test_energy_conserved_static(small):
    g, v, _, _ = small
    psi = displaced(g, 1.0, 0.3)
    tr = propagate(psi, static_schedule(v, 20.0), 0.01, store_stride=100, fidelity=False)
    e = np.array([energy_expectation(s, v) for s in tr.states])
    assert np.max(np.abs(e / e[0] - 1)) < 1e-8


def test_adiabatic_min_fidelity_bound(small):
    g, v, b, res = small
    phi = res.states[0]

    def min_infid(T):
        tr = propagate(phi, PotentialSchedule(v, b, 0.5, RampSchedule(T)), 0.01, store_stride=10)
        return 1.0 - np.nanmin(tr.fidelities)

    c = max(min_infid(T) * T**2 for T in (20.0, 40.0))
    assert min_infid(80.0) <= c / 80.0**2


def test_sudden_ramp_loses_more_fidelity(small):
    g, v, b, res = small
    phi = res.states[0]
    fast = propagate(phi, PotentialSchedule(v, b, 0.5, RampSchedule(0.5)), 0.01)
    slow = propagate(phi, PotentialSchedule(v, b, 0.5, RampSchedule(40.0)), 0.01, store_stride=50)
    assert np.nanmin(fast.fidelities) < np.nanmin(slow.fidelities)
    assert 1 - np.nanmin(fast.fidelities) > 10 * (1 - np.nanmin(slow.fidelities))


def test_infidelity_residual_form(small):
    g, v, _, res = small
    a, b = res.states
    mix = a.with_amp(np.sqrt(1 - 1e-12) * a.amp + 1e-6 * b.amp)
    f, inf = infidelity(a, mix)
    assert inf == pytest.approx(1e-12, rel=1e-6)
    assert f == pytest.approx(1.0)


def test_continuity_static_eigenstate(small):
    g, v, _, res = small
    tr = propagate(res.states[0], static_schedule(v, 0.1), 0.01)
    assert max(continuity_residual(tr, k) for k in range(len(tr) - 1)) < 1e-10


def test_continuity_garbage_input():
    g = build_grid(-1, 1, 64)
    rng = np.random.default_rng(3)
    psi = Wavefunction(g, 1e3 * (rng.normal(size=g.n) + 1j * rng.normal(size=g.n)))
    v = harmonic(g)
    tr = propagate(psi, static_schedule(v, 0.01), 1e-3, fidelity=False, max_dt_ratio=1e6)
    r = continuity_residual(tr, 0)
    assert np.isfinite(r)


def test_missing_frame(small):
    g, v, _, res = small
    tr = propagate(res.states[0], static_schedule(v, 0.02), 0.01)
    with pytest.raises(MissingFrameError):
        tr.fields(5)
    with pytest.raises(MissingFrameError):
        continuity_residual(tr, 2)


def test_resolution_guards(small):
    g, v, _, res = small
    with pytest.raises(ResolutionError):
        n_steps_for(1.0, 0.3)
    with pytest.raises(ResolutionError):
        propagate(res.states[0], static_schedule(v, 10.0), 1.0)
    with pytest.raises(ValueError):
        CrankNicolson(g, 0.0)


def test_observers_see_every_step(small):
    g, v, _, res = small
    seen = []
    tr = propagate(res.states[0], static_schedule(v, 0.1), 0.01, store_stride=3, observers=(seen.append,))
    assert len(seen) == 11
    np.testing.assert_allclose(tr.times, [0.0, 0.03, 0.06, 0.09, 0.1])
