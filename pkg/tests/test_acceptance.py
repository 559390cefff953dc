"""Exit criteria, one test per criterion; each prints a PASS/FAIL line."""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest

from noisyosc.amplitudes import P_TABLE, feynman_kac_weight
from noisyosc.estimators import (
    feynman_kac_estimates,
    functional_estimates,
    oracle_estimates,
    stationarity_check,
    z_score,
)
from noisyosc.fokker_planck import fp_drift
from noisyosc.noise import ExplicitNoise, NoiseBatch, coarsen
from noisyosc.oracle import WaveGrid, evolve, initial_wave, l2_distance, wavefunctional_eval
from noisyosc.reference import solve_regular
from noisyosc.scenario import builtin
from noisyosc.trajectory import integrate, integrate_batch

pytestmark = pytest.mark.acceptance


def gaussian_pulse_nu(cfg) -> float:
    # |int A exp(-(t-c)^2/(2 s^2)) e^{i w t} dt|^2 / (2 w), evaluated in closed form
    f = cfg.force_profile
    w = cfg.omega_in
    amplitude = f.amplitude * f.width * math.sqrt(2 * math.pi) * math.exp(-0.5 * (w * f.width) ** 2)
    return amplitude**2 / (2 * w)


def test_identity_scenario(verdict, calibration_record):
    cfg = builtin("static")
    assert cfg.eps1 == cfg.eps2 == 0 and cfg.omega_in == cfg.omega_out
    start = time.perf_counter()
    worst = 0.0
    for n in (0, 1):
        for est in (
            oracle_estimates(n, [0, 1], cfg, 200),
            functional_estimates(n, [0, 1], cfg, 10_000),
            feynman_kac_estimates(n, [0, 1], cfg, 10_000, calibration=calibration_record),
        ):
            worst = max(worst, max(abs(e.value - float(n == m)) for m, e in est.items()))
    seconds = time.perf_counter() - start
    ok = worst <= 1e-3 and seconds < 60
    assert verdict(1, ok, f"max |W_nm - delta_nm| = {worst:.2e} (tol 1e-3), runtime {seconds:.1f}s (limit 60s)")


def _mean_wronskian_error(cfg, fine, factor):
    inc = coarsen(fine, factor) if factor > 1 else fine
    final, _ = integrate_batch(cfg.replace(dt=cfg.dt * factor), ExplicitNoise(inc))
    return float(np.mean(np.abs(np.asarray(final.wronskian) - cfg.omega_in)))


def test_wronskian_conservation(verdict):
    det = builtin("tanh", dt=1e-4)
    assert det.t_end - det.t_start == pytest.approx(20.0)
    drift = abs(integrate(det).wronskian - det.omega_in) / det.omega_in

    cfg = builtin("noisy_default", dt=2.5e-4)
    fine = NoiseBatch(cfg, range(100)).take(cfg.n_steps)
    errs = [_mean_wronskian_error(cfg, fine, f) for f in (4, 2, 1)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    # convergence order reported to two decimals
    ok = drift <= 1e-6 and all(round(p, 2) >= 1.0 for p in orders)
    assert verdict(
        2, ok,
        f"deterministic relative drift {drift:.2e} (tol 1e-6); noisy error {errs[0]:.2e}->{errs[1]:.2e}->{errs[2]:.2e}, "
        f"observed orders {orders[0]:.3f}, {orders[1]:.3f} (need >= 1)",
    )


def test_pathwise_solution(verdict):
    cfg = builtin("noisy_default")
    start = time.perf_counter()
    grid = WaveGrid.for_scenario(cfg)
    idx = list(range(50))
    worst = 0.0
    for n in (0, 1):
        final, _ = integrate_batch(cfg, NoiseBatch(cfg, idx), scheme="stratonovich")
        out = evolve(initial_wave(n, cfg, grid, batch=len(idx)), cfg, NoiseBatch(cfg, idx))
        worst = max(worst, float(np.max(l2_distance(out, wavefunctional_eval(n, final, grid, cfg)))))
    seconds = time.perf_counter() - start
    ok = worst <= 1e-3 and seconds < 600
    assert verdict(3, ok, f"max L2 distance over 50 realizations, n=0,1: {worst:.2e} (tol 1e-3), runtime {seconds:.1f}s")


def test_displaced_oscillator_law(verdict):
    cfg = builtin("forced")
    nu_ref = solve_regular(cfg).nu
    nu_fourier = gaussian_pulse_nu(cfg)
    probs = oracle_estimates(0, range(4), cfg, 2)
    worst = max(abs(probs[m].value - math.exp(-nu_ref) * nu_ref**m / math.factorial(m)) for m in range(4))
    ok = worst <= 1e-3 and abs(nu_ref - nu_fourier) <= 1e-6
    assert verdict(
        4, ok,
        f"max |W_0m - Poisson| for m<=3: {worst:.2e} (tol 1e-3); nu reference {nu_ref:.10f} vs Fourier "
        f"{nu_fourier:.10f}, diff {abs(nu_ref - nu_fourier):.1e} (tol 1e-6)",
    )


def test_sudden_jump_law(verdict):
    cfg = builtin("jump")
    w1, w2 = cfg.omega_in, cfg.omega_out
    rho_matching = ((w2 - w1) / (w2 + w1)) ** 2
    rho_ref = solve_regular(cfg).rho
    w00 = oracle_estimates(0, [0], cfg, 2)[0].value
    target = math.sqrt(1 - rho_matching)
    ok = (
        abs(rho_matching - 1 / 9) < 1e-15
        and abs(rho_ref - rho_matching) <= 1e-6
        and abs(w00 - target) <= 1e-3
    )
    assert verdict(
        5, ok,
        f"rho matching {rho_matching:.12f}, reference {rho_ref:.12f}; oracle W00 {w00:.6f} vs sqrt(1-rho) "
        f"{target:.6f}, diff {abs(w00 - target):.1e} (tol 1e-3)",
    )


def test_drift_coefficient_fidelity(verdict):
    rng = np.random.default_rng(2024)
    cfg = builtin("noisy_forced")
    z = rng.normal(scale=3.0, size=(4, 1000))
    t = rng.uniform(cfg.t_start, cfg.t_end, size=1000)
    got = np.stack([fp_drift(z[:, i], t[i], cfg) for i in range(1000)], axis=1)
    om2 = np.array([cfg.omega0_squared(s) for s in t])
    f0 = np.array([cfg.force0(s) for s in t])
    z1, z2, z3, z4 = z
    want = np.stack([z2, -om2 * z1 + f0, -om2 - z3**2 + z4**2, -2 * z3 * z4])
    # rounding scale of each entry: the magnitudes of the terms being summed
    scale = np.stack([np.abs(z2), np.abs(om2 * z1) + np.abs(f0), om2 + z3**2 + z4**2, np.abs(2 * z3 * z4)])
    err = np.abs(got - want) / np.maximum(scale, np.finfo(float).tiny)
    ok = float(err.max()) <= 4 * np.finfo(float).eps
    assert verdict(6, ok, f"max deviation relative to term magnitudes at 1000 random points: {err.max():.1e} (floating-point only)")


def test_exponent_table(verdict):
    expected = {(0, 0): 1, (0, 1): 1, (1, 0): 3, (1, 1): 3}
    weights_ok = all(feynman_kac_weight(n, m, math.log(2.0)) == pytest.approx(2.0**-p) for (n, m), p in expected.items())
    ok = P_TABLE == expected and weights_ok
    assert verdict(7, ok, f"exponent table {P_TABLE}")


def test_cross_route_statistics(verdict, calibration_record):
    cfg = builtin("noisy_static")
    assert cfg.eps1 == 0 and cfg.eps2 == 0.01
    start = time.perf_counter()
    ms = [0, 1]
    routes = {
        "oracle": oracle_estimates(0, ms, cfg, 200),
        "functional": functional_estimates(0, ms, cfg, 10_000),
        "feynman_kac": feynman_kac_estimates(0, ms, cfg, 10_000, calibration=calibration_record),
    }
    seconds = time.perf_counter() - start
    parts, ok = [], seconds < 1800
    for m in ms:
        for a, b in itertools.combinations(routes, 2):
            z = z_score(routes[a][m], routes[b][m])
            ok &= z < 3
            parts.append(f"W0{m} {a}/{b} z={z:.2f}")
    values = ", ".join(f"{k} W00={v[0].value:.4f}+-{v[0].stderr:.4f}" for k, v in routes.items())
    assert verdict(8, ok, f"{values}; " + "; ".join(parts) + f"; runtime {seconds:.0f}s")


def test_weight_identity(verdict):
    worst = 0.0
    count = 0
    for name in ("noisy_default", "noisy_static", "noisy_forced"):
        cfg = builtin(name, dt=1e-4)
        idx = list(range(100))
        at_te, _ = integrate_batch(cfg, NoiseBatch(cfg, idx), t_stop=cfg.te, scheme="stratonovich")
        at_launch, _ = integrate_batch(cfg, NoiseBatch(cfg, idx), t_stop=cfg.t_launch, scheme="stratonovich")
        for (n, m), p in P_TABLE.items():
            weight = feynman_kac_weight(n, m, at_te.log_r_integral)
            ratio = (np.abs(at_launch.xi) / np.abs(at_te.xi)) ** p
            worst = max(worst, float(np.max(np.abs(weight - ratio))))
        count += len(idx)
    ok = worst <= 1e-4
    assert verdict(9, ok, f"max |exp(-p int z3) - (r_launch/r_te)^p| over {count} realizations: {worst:.1e} (tol 1e-4)")


def test_stationarity_diagnostic(verdict):
    cfg = builtin("noisy_static")
    report = stationarity_check(0, 0, cfg, 10_000)
    halved = stationarity_check(0, 0, cfg.replace(eps1=0.5 * cfg.eps1), 10_000)
    flagged_when_failing = report.stationary or not halved.stationary
    ok = report.stationary and flagged_when_failing
    assert verdict(
        10, ok,
        f"W00 te={cfg.te:g}: {report.base.value:.5f}+-{report.base.stderr:.5f}, doubled window: "
        f"{report.doubled.value:.5f}+-{report.doubled.stderr:.5f}, z={report.z:.1f} (need < 3); "
        f"halved eps1 run flagged non-stationary: {not halved.stationary}",
    )
