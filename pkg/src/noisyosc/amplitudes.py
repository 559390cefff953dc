"""Transition kernels for the weighted-path route.

``h00`` and ``h01`` evaluate the closed-form ground-state kernels in the barred variables
(xi1, xi2, xi3) together with the quadratic ``sigma_quadratic`` and the displacement
shifts ``mu_shifts``. Their values turn into probabilities only through a
``KernelConvention`` that maps the classical state z(te) onto the barred variables;
which convention is right is decided by calibration against the grid oracle.

``gaussian_kernels`` is the exact overlap of the Gaussian wave functional with the
outgoing levels 0 and 1, written in the same variables. It supplies the n = 1 kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .reference import AsymptoticData

P_TABLE = {(0, 0): 1, (0, 1): 1, (1, 0): 3, (1, 1): 3}
SUPPORTED_LEVELS = tuple(P_TABLE)


class UnsupportedLevelError(ValueError):
    pass


class KernelDegeneracyError(ArithmeticError):
    pass


def p_exponent(n: int, m: int) -> int:
    try:
        return P_TABLE[(n, m)]
    except KeyError:
        raise UnsupportedLevelError(f"no kernel exponent for levels ({n}, {m}); supported: {SUPPORTED_LEVELS}") from None


def _normalized_basis(asym: AsymptoticData):
    # w/C1 and v/C1 of xi_0 at te, in terms of rho and delta only.
    g = complex(asym.d1, asym.d2)
    g_dot = complex(asym.d3, asym.d4)
    k = math.sqrt(asym.rho) * np.exp(-1j * asym.delta)
    return np.conj(g) - g * k, np.conj(g_dot) - g_dot * k


def sigma_quadratic(xi3, asym: AsymptoticData):
    """Sigma(xi3) as a quadratic in xi3 built from d1..d4, rho and delta.

    For complex ``xi3`` the Hermitian continuation |xi3 w - v|^2 of the same form is used;
    on the real axis both coincide.
    """
    d1, d2, d3, d4 = asym.d1, asym.d2, asym.d3, asym.d4
    rho, delta = asym.rho, asym.delta
    sr, c, s = math.sqrt(rho), math.cos(delta), math.sin(delta)
    scale = asym.omega_in * asym.omega_out / (1.0 - rho)
    xi3 = np.asarray(xi3)
    if np.iscomplexobj(xi3):
        w, v = _normalized_basis(asym)
        value = scale * np.abs(xi3 * w - v) ** 2
    else:
        a = (d1**2 + d2**2) * (1 + rho) - 2 * sr * ((d1**2 - d2**2) * c + 2 * d1 * d2 * s)
        b = -(d2 * d4 + d1 * d3) * (1 + rho) + 2 * sr * ((d1 * d4 + d2 * d3) * s + (d1 * d3 - d2 * d4) * c)
        c0 = (d3**2 + d4**2) * (1 + rho) + 2 * sr * ((d4**2 - d3**2) * c - 2 * d3 * d4 * s)
        value = scale * (a * xi3**2 + 2 * b * xi3 + c0)
    if np.any(~(value > 0)):
        raise KernelDegeneracyError("Sigma(xi3) <= 0: asymptotic data are not positive definite")
    return value[()]


def mu_shifts(asym: AsymptoticData, omega_in: float | None = None) -> tuple[float, float]:
    omega_in = asym.omega_in if omega_in is None else omega_in
    amp = math.sqrt(2.0 * asym.nu / omega_in)
    cb, sb = math.cos(asym.beta), math.sin(asym.beta)
    mu1 = -asym.d5 + amp * (asym.d1 * cb + asym.d2 * sb)
    mu2 = -asym.d6 + amp * (asym.d3 * cb + asym.d4 * sb)
    return mu1, mu2


@dataclass(frozen=True)
class KernelInputs:
    xi1: np.ndarray | float
    xi2: np.ndarray | float
    xi3: np.ndarray | float | complex
    asym: AsymptoticData

    @property
    def omega_in(self) -> float:
        return self.asym.omega_in

    @property
    def omega_out(self) -> float:
        return self.asym.omega_out


def h00(inp: KernelInputs, exponent_scale: float = 1.0):
    w_in, w_out = inp.omega_in, inp.omega_out
    sigma = sigma_quadratic(inp.xi3, inp.asym)
    mu1, mu2 = mu_shifts(inp.asym)
    arg = inp.xi3 * (inp.xi1 + mu1) - inp.xi2 - mu2
    pref = 2.0 * math.sqrt(w_in * w_out) / (inp.asym.xi0_at_t1_abs * np.sqrt(sigma))
    return (pref * np.exp(-exponent_scale * w_out * w_in**2 / sigma * np.abs(arg) ** 2))[()]


def h01(inp: KernelInputs, exponent_scale: float = 1.0):
    w_in, w_out = inp.omega_in, inp.omega_out
    sigma = sigma_quadratic(inp.xi3, inp.asym)
    mu1, mu2 = mu_shifts(inp.asym)
    bracket = inp.xi2 - inp.xi1 * inp.xi3 - inp.xi3 * mu1 + mu2
    return (2.0 * w_out * w_in**2 / sigma * np.abs(bracket) ** 2 * h00(inp, exponent_scale))[()]


def feynman_kac_weight(n: int, m: int, log_r_integral):
    """exp(-p_nm * integral of z3) = (r(t_launch) / r(te))**p_nm."""
    return np.exp(-p_exponent(n, m) * np.asarray(log_r_integral))[()]


# -- exact Gaussian overlaps --------------------------------------------------


def _invariants(z, asym: AsymptoticData):
    """Conserved quantities of the state at te, transported to the outgoing region.

    Returns (q, kappa, alpha, beta) with |u| = r*q the Bogoliubov norm, kappa = v/u the
    squeezing ratio, alpha the coherent displacement and beta = alpha - kappa*conj(alpha).
    """
    z1, z2, z3, z4 = (np.asarray(c, dtype=float) for c in z)
    w_in, w_out = asym.omega_in, asym.omega_out
    g = complex(asym.d1, asym.d2)
    g_dot = complex(asym.d3, asym.d4)
    c1, c2 = asym.c1, asym.c2
    zeta = z3 + 1j * z4
    x = zeta * (np.conj(g) * c1 - g * np.conj(c2)) - (np.conj(g_dot) * c1 - g_dot * np.conj(c2))
    y = zeta * (np.conj(g) * c2 - g * np.conj(c1)) - (np.conj(g_dot) * c2 - g_dot * np.conj(c1))
    q = math.sqrt(w_out / w_in) * np.abs(x) / (2.0 * w_in)
    kappa = y / x
    mu1, mu2 = mu_shifts(asym)
    p = (z1 + mu1) * math.sqrt(w_in / 2.0)
    qq = (z2 + mu2) * math.sqrt(w_in / 2.0)
    coef = 1j * (p * np.conj(g_dot) - qq * np.conj(g)) / w_in
    amp = math.sqrt(2.0 / w_in) * (c1 * coef + np.conj(c2) * np.conj(coef))
    alpha = math.sqrt(w_out / 2.0) * np.conj(amp)
    beta = alpha - kappa * np.conj(alpha)
    return q, kappa, alpha, beta


def gaussian_kernels(z, asym: AsymptoticData) -> dict[tuple[int, int], np.ndarray]:
    """Exact |c_nm|^2 * (r(te)/r(t_launch))**p_nm for (n, m) in {0,1}^2.

    Multiplying by the path weight exp(-p_nm * log_r_integral) gives |c_nm|^2.
    """
    q, kappa, alpha, beta = _invariants(z, asym)
    expo = (np.abs(beta) ** 2 + (np.conj(kappa) * beta**2).real) / (1.0 - np.abs(kappa) ** 2)
    r1 = asym.xi0_at_t1_abs
    c00 = np.exp(-expo) / (q * r1)
    n1 = c00 / (q * r1) ** 2
    return {
        (0, 0): c00[()],
        (0, 1): (np.abs(beta) ** 2 * c00)[()],
        (1, 0): (np.abs(alpha) ** 2 * n1)[()],
        (1, 1): (np.abs(1.0 - np.conj(alpha) * beta) ** 2 * n1)[()],
    }


# -- conventions --------------------------------------------------------------


@dataclass(frozen=True)
class KernelConvention:
    """Map z(te) -> (xi1, xi2, xi3) plus the exponent scale used in h00/h01.

    ``complex_riccati`` feeds xi3 = z3 + i*z4 (the full Riccati variable xi_dot/xi)
    instead of its real part z3.
    """

    name: str
    complex_riccati: bool
    exponent_scale: float
    description: str = ""

    def inputs(self, z, asym: AsymptoticData) -> KernelInputs:
        z1, z2, z3, z4 = (np.asarray(c, dtype=float) for c in z)
        xi3 = z3 + 1j * z4 if self.complex_riccati else z3
        return KernelInputs(z1, z2, xi3, asym)

    def observable(self, n: int, m: int, z, asym: AsymptoticData):
        """omega_in**p_nm * h_nm(mapped z); multiplied by the path weight it estimates |c_nm|^2."""
        p = p_exponent(n, m)
        if n == 1:
            return gaussian_kernels(z, asym)[(n, m)]
        inp = self.inputs(z, asym)
        h = h00(inp, self.exponent_scale) if m == 0 else h01(inp, self.exponent_scale)
        return asym.omega_in**p * h


CONVENTIONS = (
    KernelConvention("literal", False, 1.0, "xi = (z1, z2, z3), kernels as printed"),
    KernelConvention("complex-riccati", True, 1.0, "xi3 = z3 + i z4, kernels as printed"),
    KernelConvention(
        "complex-riccati-x2", True, 2.0, "xi3 = z3 + i z4, ground-state exponent doubled"
    ),
)


def convention(name: str) -> KernelConvention:
    for conv in CONVENTIONS:
        if conv.name == name:
            return conv
    raise KeyError(f"unknown kernel convention {name!r}")
