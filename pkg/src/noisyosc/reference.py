"""Regular (noise-free) solutions xi_0, eta_0 and the asymptotic constants built from them."""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .scenario import ScenarioConfig
from .trajectory import _advance, _StepTable

FIT_TOL = 1e-4


class AsymptoticFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class AsymptoticData:
    c1: complex
    c2: complex
    rho: float
    delta: float
    d_complex: complex
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    xi0_at_t1_abs: float
    omega_in: float
    omega_out: float
    fit_residual: float = 0.0

    @property
    def nu(self) -> float:
        return abs(self.d_complex) ** 2

    @property
    def beta(self) -> float:
        return math.atan2(self.d_complex.imag, self.d_complex.real)

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, complex):
                out[key] = {"re": value.real, "im": value.imag}
            else:
                out[key] = float(value)
        out["nu"] = self.nu
        out["beta"] = self.beta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> AsymptoticData:
        kwargs = {}
        for name in cls.__dataclass_fields__:
            value = data[name]
            kwargs[name] = complex(value["re"], value["im"]) if isinstance(value, dict) else float(value)
        return cls(**kwargs)


@dataclass
class RegularSolution:
    t: np.ndarray
    xi0: np.ndarray
    xi0_dot: np.ndarray
    eta0: np.ndarray
    eta0_dot: np.ndarray
    d: np.ndarray


def regular_solution(cfg: ScenarioConfig, refine: int = 4) -> RegularSolution:
    """Integrate xi_0 and eta_0 with the trajectory integrator at zero noise, on the step
    grid refined ``refine`` times, and accumulate d(t) by the trapezoid rule on its nodes."""
    fine = cfg.replace(dt=cfg.dt / refine, eps1=0.0, eps2=0.0) if refine != 1 else cfg.deterministic()
    table = _StepTable(fine)
    n = fine.n_steps
    t = fine.time(np.arange(n + 1))
    w = fine.omega_in
    y = (0.0, 0.0, complex(np.exp(1j * w * fine.t_start)), complex(1j * w * np.exp(1j * w * fine.t_start)), 0.0, 0.0)
    out = np.empty((n + 1, 4), dtype=complex)
    out[0] = y[:4]
    for k in range(n):
        y = _advance(y, fine.dt, table.om2_a[k], table.om2_b[k], table.f_a[k], table.f_b[k], 0.0, 0.0, 0.0, "ito")
        out[k + 1] = y[:4]
    eta0, eta0_dot, xi0, xi0_dot = out[:, 0].real, out[:, 1].real, out[:, 2], out[:, 3]
    integrand = xi0 * np.asarray(fine.force0(t))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * fine.dt)])
    d = 1j / math.sqrt(2.0 * w) * cum
    return RegularSolution(t, xi0, xi0_dot, eta0, eta0_dot, d)


def fit_bogoliubov(t: float, xi: complex, xi_dot: complex, omega: float) -> tuple[complex, complex]:
    """Coefficients (C1, C2) with xi = C1 e^{i w t} + C2 e^{-i w t} matching value and slope at ``t``."""
    v = xi_dot / (1j * omega)
    return 0.5 * (xi + v) * np.exp(-1j * omega * t), 0.5 * (xi - v) * np.exp(1j * omega * t)


@functools.lru_cache(maxsize=64)
def solve_regular(cfg: ScenarioConfig, refine: int = 4) -> AsymptoticData:
    """Asymptotic constants of the noise-free problem (cached per scenario)."""
    cfg = cfg.deterministic()
    sol = regular_solution(cfg, refine)
    fine_dt = cfg.dt / refine
    idx = lambda time: int(round((time - cfg.t_start) / fine_dt))
    w_out = cfg.omega_out

    c1, c2 = fit_bogoliubov(sol.t[-1], sol.xi0[-1], sol.xi0_dot[-1], w_out)
    k_prev = idx(cfg.t_end - 2.0 * math.pi / w_out)
    if k_prev < 0:
        raise AsymptoticFitError("horizon shorter than one outgoing period; cannot verify the fit")
    c1b, c2b = fit_bogoliubov(sol.t[k_prev], sol.xi0[k_prev], sol.xi0_dot[k_prev], w_out)
    residual = max(abs(c1 - c1b), abs(c2 - c2b))
    if residual > FIT_TOL:
        raise AsymptoticFitError(
            f"Bogoliubov fit changes by {residual:.3g} over one period before t_end: "
            "Omega_0 has not settled to omega_out"
        )
    rho = abs(c2 / c1) ** 2
    if rho >= 1.0:
        raise AsymptoticFitError(f"rho = {rho} >= 1: Wronskian of xi_0 violated")

    ke = idx(cfg.te)
    xe, xde = sol.xi0[ke], sol.xi0_dot[ke]
    return AsymptoticData(
        c1=complex(c1),
        c2=complex(c2),
        rho=float(rho),
        delta=float(np.angle(c1) + np.angle(c2)),
        d_complex=complex(sol.d[-1]),
        d1=float(xe.real),
        d2=float(xe.imag),
        d3=float(xde.real),
        d4=float(xde.imag),
        d5=float(sol.eta0[ke]),
        d6=float(sol.eta0_dot[ke]),
        xi0_at_t1_abs=float(abs(sol.xi0[idx(cfg.t1)])),
        omega_in=cfg.omega_in,
        omega_out=cfg.omega_out,
        fit_residual=float(residual),
    )
