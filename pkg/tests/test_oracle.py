from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyosc.noise import ExplicitNoise, NoiseBatch, coarsen
from noisyosc.oracle import (
    BoxTooSmallError,
    NormDriftError,
    WaveGrid,
    eigenfunction,
    evolve,
    initial_wave,
    l2_distance,
    overlap_probabilities,
    read_snapshot,
    stationary_state,
    wavefunctional_eval,
    write_snapshot,
)
from noisyosc.reference import solve_regular
from noisyosc.scenario import ForceProfile, builtin, builtin_names
from noisyosc.trajectory import TrajectoryState, initial_state, integrate, integrate_batch

GRID = WaveGrid(-12.0, 12.0, 1024)


def test_ground_state_peak():
    g = stationary_state(0, 1.0, GRID)
    assert g.psi[GRID.nodes // 2] == pytest.approx(math.pi**-0.25, rel=1e-12)
    assert g.psi[GRID.nodes // 2] == pytest.approx(0.7511, abs=1e-4)


def test_first_excited_state_is_odd():
    g = stationary_state(1, 1.0, GRID)
    mid = GRID.nodes // 2
    assert g.psi[mid] == 0.0
    assert g.psi[mid + 1 : mid + 200] == pytest.approx(-g.psi[mid - 1 : mid - 200 : -1], abs=1e-14)


def test_orthonormality():
    states = np.array([stationary_state(n, 1.3, GRID).psi for n in range(5)])
    gram = states @ states.T * GRID.dx
    assert np.max(np.abs(gram - np.eye(5))) < 1e-8


def test_recurrence_reaches_high_levels():
    phi = eigenfunction(10, 1.0, GRID.x)
    assert np.all(np.isfinite(phi))
    assert np.sum(phi**2) * GRID.dx == pytest.approx(1.0, abs=1e-10)


def test_box_too_small():
    with pytest.raises(BoxTooSmallError):
        stationary_state(0, 1.0, WaveGrid(-3.0, 3.0, 256))


@pytest.mark.parametrize("n", [0, 1])
def test_static_evolution_is_stationary(n):
    cfg = builtin("static")
    grid = WaveGrid.for_scenario(cfg)
    phi = stationary_state(n, 1.0, grid)
    out = evolve(phi, cfg)
    amp = np.sum(np.conj(phi.psi) * out.psi) * grid.dx
    assert abs(amp) == pytest.approx(1.0, abs=1e-6)
    expected = -(n + 0.5) * cfg.omega_in * (cfg.t_end - cfg.t_start)
    diff = np.angle(amp * np.exp(-1j * expected))
    assert abs(diff) < 1e-4


def test_forced_ground_state_survival():
    cfg = builtin("forced")
    grid = WaveGrid.for_scenario(cfg)
    out = evolve(stationary_state(0, 1.0, grid), cfg)
    p0 = overlap_probabilities(out, 0, cfg.omega_out)[0]
    assert p0 == pytest.approx(math.exp(-solve_regular(cfg).nu), abs=1e-3)


def test_noisy_pathwise_agreement():
    cfg = builtin("noisy_default")
    grid = WaveGrid.for_scenario(cfg)
    idx = range(5)
    final, _ = integrate_batch(cfg, NoiseBatch(cfg, idx), scheme="stratonovich")
    out = evolve(initial_wave(0, cfg, grid, batch=5), cfg, NoiseBatch(cfg, idx))
    assert np.all(l2_distance(out, wavefunctional_eval(0, final, grid, cfg)) <= 1e-3)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(-50, 50))
def test_wave_functional_static_identity(t):
    # exact free trajectory: xi = e^{it}, no displacement, zero action
    cfg = builtin("static")
    state = TrajectoryState(t, 0.0, 0.0, np.exp(1j * t), 1j * np.exp(1j * t), 0.0, 0.0, t)
    psi = wavefunctional_eval(0, state, GRID, cfg)
    expected = np.exp(-0.5j * t) * eigenfunction(0, 1.0, GRID.x)
    assert np.max(np.abs(psi.psi - expected)) < 1e-10


def test_wave_functional_from_integrated_state_at_start():
    cfg = builtin("static")
    psi = wavefunctional_eval(0, initial_state(cfg), GRID, cfg)
    expected = np.exp(-0.5j * cfg.t_start) * eigenfunction(0, 1.0, GRID.x)
    assert np.max(np.abs(psi.psi - expected)) < 1e-10


def test_wave_functional_forced_is_coherent_state():
    cfg = builtin("forced")
    grid = WaveGrid.for_scenario(cfg)
    state = integrate(cfg)
    psi = wavefunctional_eval(0, state, grid, cfg)
    out = evolve(initial_wave(0, cfg, grid), cfg)
    assert l2_distance(psi, out) <= 1e-3
    density = np.abs(psi.psi) ** 2
    assert np.sum(grid.x * density) * grid.dx == pytest.approx(state.eta, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(
    eta=st.floats(-3, 3), eta_dot=st.floats(-3, 3), r=st.floats(0.6, 1.6), arg=st.floats(-3, 3),
    z3=st.floats(-2, 2), sigma=st.floats(-5, 5), n=st.integers(0, 1),
)
def test_wave_functional_unit_norm(eta, eta_dot, r, arg, z3, sigma, n):
    cfg = builtin("static")
    xi = r * np.exp(1j * arg)
    xi_dot = (z3 + 1j * cfg.omega_in / r**2) * xi
    state = TrajectoryState(0.0, eta, eta_dot, xi, xi_dot, sigma, 0.0, arg)
    psi = wavefunctional_eval(n, state, GRID, cfg)
    assert psi.norm() == pytest.approx(1.0, abs=1e-6)


def test_overlaps_of_eigenstates():
    for k in range(4):
        probs = overlap_probabilities(stationary_state(k, 1.7, GRID), 5, 1.7)
        assert probs == pytest.approx(np.eye(6)[k], abs=1e-8)


@pytest.mark.parametrize("a, p", [(0.8, 0.0), (0.5, -0.7), (-1.2, 0.4)])
def test_displaced_state_is_poisson(a, p):
    w = 1.0
    psi = eigenfunction(0, w, GRID.x - a) * np.exp(1j * p * GRID.x)
    nu = 0.5 * (w * a * a + p * p / w)
    probs = overlap_probabilities(GRID.with_psi(psi), 3, w)
    expected = [math.exp(-nu) * nu**m / math.factorial(m) for m in range(4)]
    assert probs == pytest.approx(expected, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2, 2), p=st.floats(-2, 2), w=st.floats(0.5, 2))
def test_bessel_inequality(a, p, w):
    psi = eigenfunction(0, 1.0, GRID.x - a) * np.exp(1j * p * GRID.x)
    probs = overlap_probabilities(GRID.with_psi(psi), 8, w)
    partial = np.cumsum(probs)
    assert partial[-1] <= 1 + 1e-8
    assert np.all(np.diff(partial) >= 0)


@pytest.mark.parametrize("name", builtin_names())
def test_unitarity_at_default_grid(name):
    cfg = builtin(name, grid_nodes=4096, grid_half_width=12.0)
    grid = WaveGrid.for_scenario(cfg)
    out = evolve(initial_wave(0, cfg, grid), cfg, NoiseBatch(cfg, [0]))
    assert abs(out.norm() - 1.0) <= 1e-6
    assert out.edge_amplitude() < 1e-8


@pytest.mark.parametrize("name", ["forced", "jump", "noisy_default"])
def test_grid_convergence(name):
    cfg = builtin(name)
    fine = cfg.replace(dt=cfg.dt / 2, grid_nodes=2 * cfg.grid_nodes)
    inc = NoiseBatch(fine, [0]).take(fine.n_steps)
    coarse_inc = coarsen(inc, 2)
    res = []
    for c, noise in ((cfg, coarse_inc), (fine, inc)):
        grid = WaveGrid.for_scenario(c)
        for n in (0, 1):
            out = evolve(initial_wave(n, c, grid), c, ExplicitNoise(noise))
            res.append(overlap_probabilities(out, 4, c.omega_out))
    diff = np.abs(np.array(res[:2]) - np.array(res[2:]))
    assert diff.max() <= 1e-4


def test_box_overflow_aborts():
    cfg = builtin("forced", force_profile=ForceProfile("gaussian", 8.0, 0.0, 1.0))
    grid = WaveGrid.for_scenario(cfg)
    with pytest.raises(NormDriftError, match="enlarge the box"):
        evolve(initial_wave(0, cfg, grid), cfg)


def test_snapshots_round_trip(tmp_path):
    cfg = builtin("noisy_static")
    grid = WaveGrid.for_scenario(cfg)
    steps = [cfg.step_index(1.0), cfg.n_steps]
    out, snaps = evolve(initial_wave(0, cfg, grid), cfg, NoiseBatch(cfg, [0]), snapshot_steps=steps)
    assert np.allclose(snaps[cfg.n_steps][0], out.psi)
    path = tmp_path / "snap.csv"
    write_snapshot(path, grid, snaps[steps[0]][0])
    x, psi = read_snapshot(path)
    assert np.array_equal(x, grid.x)
    assert np.array_equal(psi, snaps[steps[0]][0])
