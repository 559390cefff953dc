from __future__ import annotations

import math

import numpy as np
import pytest

from noisyosc import reference
from noisyosc.reference import AsymptoticData, AsymptoticFitError, regular_solution, solve_regular
from noisyosc.scenario import OmegaProfile, builtin, builtin_names


def test_identity_scenario_constants():
    a = solve_regular(builtin("static"))
    assert a.c1 == pytest.approx(1.0, abs=1e-6)
    assert abs(a.c2) < 1e-6
    assert a.rho < 1e-12 and a.nu == 0.0
    assert a.d5 == 0.0 and a.d6 == 0.0
    assert a.xi0_at_t1_abs == pytest.approx(1.0, abs=1e-8)


def test_sudden_jump_rho():
    assert solve_regular(builtin("jump")).rho == pytest.approx(((2 - 1) / (2 + 1)) ** 2, abs=1e-6)


def analytic_nu(cfg):
    # |int e^{i w t} A exp(-(t-c)^2/(2 s^2)) dt|^2 / (2 w) for a Gaussian pulse
    f = cfg.force_profile
    w = cfg.omega_in
    amp = f.amplitude * f.width * math.sqrt(2 * math.pi) * math.exp(-0.5 * (w * f.width) ** 2)
    return amp**2 / (2 * w)


def test_forced_nu_matches_fourier_integral():
    cfg = builtin("forced")
    assert solve_regular(cfg).nu == pytest.approx(analytic_nu(cfg), abs=1e-6)


@pytest.mark.parametrize("name", builtin_names())
def test_bogoliubov_norm(name):
    cfg = builtin(name)
    a = solve_regular(cfg)
    assert abs(a.c1) ** 2 - abs(a.c2) ** 2 == pytest.approx(cfg.omega_in / cfg.omega_out, abs=1e-6)
    assert a.rho < 1
    assert a.d1**2 + a.d2**2 > 0
    assert a.nu >= 0
    if cfg.force_profile.kind == "zero":
        assert a.nu == 0.0


def test_adiabatic_limit_monotone():
    rhos = []
    for width in (1.0, 2.0, 4.0, 8.0):
        cfg = builtin(
            "tanh", omega_out=1.5, omega_profile=OmegaProfile("tanh", center=0.0, width=width),
            t_start=-80.0, t_end=80.0, dt=1e-2,
        )
        rhos.append(solve_regular(cfg, refine=4).rho)
    assert all(a > b for a, b in zip(rhos, rhos[1:])), rhos


def test_d_constant_after_pulse():
    cfg = builtin("forced")
    sol = regular_solution(cfg)
    # beyond six pulse widths the force is below 1e-7 of its peak
    late = sol.t >= cfg.force_profile.center + 6 * cfg.force_profile.width
    assert np.max(np.abs(sol.d[late] - sol.d[-1])) <= 1e-8


def test_refit_one_period_earlier_agrees():
    for name in ("jump", "tanh", "forced"):
        assert solve_regular(builtin(name)).fit_residual <= 1e-6


def test_unsettled_fit_is_an_error(monkeypatch):
    monkeypatch.setattr(reference, "FIT_TOL", 1e-14)
    solve_regular.cache_clear()
    try:
        with pytest.raises(AsymptoticFitError, match="settled"):
            solve_regular(builtin("tanh"))
    finally:
        solve_regular.cache_clear()


def test_serialization_round_trip():
    a = solve_regular(builtin("forced"))
    assert AsymptoticData.from_dict(a.to_dict()) == a
