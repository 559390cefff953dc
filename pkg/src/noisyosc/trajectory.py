"""Classical trajectories under one noise realization.

The state carries the driven solution eta (with velocity), the complex homogeneous
solution xi (with derivative), the action sigma, the unwrapped phase gamma of xi and
the log-amplitude integral of z3 = Re(xi_dot/xi) accumulated from the launch time t1.

Every function here works on scalars and, unchanged, on arrays holding a batch of
realizations. The deterministic drift is advanced by Heun's rule; noise enters the
velocities as Ito increments (``scheme="ito"``) or averaged over predictor and
corrector (``scheme="stratonovich"``). Both have the same continuous limit because the
noise coefficients depend on positions only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .noise import ExplicitNoise, NoiseBatch, NoiseRealization
from .scenario import ScenarioConfig

SCHEMES = ("ito", "stratonovich")
XI_FLOOR = 1e-12
_OVERFLOW = 1e150
_BLOCK = 512


class DegenerateStateError(ArithmeticError):
    """|xi| fell below the floor where z3, z4 are defined."""


class DivergenceError(RuntimeError):
    """Too many realizations overflowed."""


@dataclass(frozen=True)
class TrajectoryState:
    t: float
    eta: float
    eta_dot: float
    xi: complex
    xi_dot: complex
    sigma: float
    log_r_integral: float
    phase: float
    divergent: bool = False

    @property
    def r(self):
        return np.abs(self.xi)

    @property
    def wronskian(self):
        return np.imag(np.conj(self.xi) * self.xi_dot)

    def take(self, index) -> TrajectoryState:
        """Select realizations from a batched state."""
        pick = lambda a: np.asarray(a)[index]
        return TrajectoryState(
            self.t, pick(self.eta), pick(self.eta_dot), pick(self.xi), pick(self.xi_dot),
            pick(self.sigma), pick(self.log_r_integral), pick(self.phase), pick(self.divergent),
        )


def initial_state(cfg: ScenarioConfig, batch: int | None = None) -> TrajectoryState:
    t0 = cfg.t_start
    w = cfg.omega_in
    xi = np.exp(1j * w * t0)
    if batch is None:
        return TrajectoryState(t0, 0.0, 0.0, complex(xi), complex(1j * w * xi), 0.0, 0.0, w * t0)
    zeros = np.zeros(batch)
    return TrajectoryState(
        t0, zeros, zeros.copy(), np.full(batch, xi), np.full(batch, 1j * w * xi),
        zeros.copy(), zeros.copy(), np.full(batch, w * t0), np.zeros(batch, dtype=bool),
    )


def z_coords(state: TrajectoryState):
    """(z1, z2, z3, z4) = (eta, eta_dot, Re(xi_dot/xi), Im(xi_dot/xi))."""
    xi = np.asarray(state.xi)
    if np.any(np.abs(xi) < XI_FLOOR):
        raise DegenerateStateError("|xi| below 1e-12: Wronskian violated upstream")
    ratio = np.asarray(state.xi_dot) / xi
    return (np.asarray(state.eta)[()], np.asarray(state.eta_dot)[()], ratio.real[()], ratio.imag[()])


# -- one step -----------------------------------------------------------------


def _drift(om2, f0, active, eta, eta_dot, xi, xi_dot):
    return (
        eta_dot,
        f0 - om2 * eta,
        xi_dot,
        -om2 * xi,
        0.5 * eta_dot**2 - 0.5 * om2 * eta**2 + f0 * eta,
        active * (xi_dot / xi).real,
    )


def _kicks(s1dw1, s2dw2, eta, xi):
    # Noise parts of (eta_dot, xi_dot, sigma).
    return (s2dw2 - eta * s1dw1, -xi * s1dw1, eta * s2dw2 - 0.5 * eta**2 * s1dw1)


def _advance(y, dt, om2_a, om2_b, f_a, f_b, active, s1dw1, s2dw2, scheme):
    eta, eta_dot, xi, xi_dot, sigma, logr = y
    a = _drift(om2_a, f_a, active, eta, eta_dot, xi, xi_dot)
    g = _kicks(s1dw1, s2dw2, eta, xi)
    p_eta = eta + a[0] * dt
    p_eta_dot = eta_dot + a[1] * dt + g[0]
    p_xi = xi + a[2] * dt
    p_xi_dot = xi_dot + a[3] * dt + g[1]
    b = _drift(om2_b, f_b, active, p_eta, p_eta_dot, p_xi, p_xi_dot)
    if scheme == "stratonovich":
        gp = _kicks(s1dw1, s2dw2, p_eta, p_xi)
        g = tuple(0.5 * (u + v) for u, v in zip(g, gp))
    h = 0.5 * dt
    return (
        eta + h * (a[0] + b[0]),
        eta_dot + h * (a[1] + b[1]) + g[0],
        xi + h * (a[2] + b[2]),
        xi_dot + h * (a[3] + b[3]) + g[1],
        sigma + h * (a[4] + b[4]) + g[2],
        logr + h * (a[5] + b[5]),
    )


class _StepTable:
    """Per-step scalars: profile values at both step ends, noise amplitudes, launch flag."""

    def __init__(self, cfg: ScenarioConfig) -> None:
        k = np.arange(cfg.n_steps)
        t_a = cfg.time(k)
        t_b = cfg.time(k + 1)
        self.om2_a = np.asarray(cfg.omega0_squared(t_a, side=1), dtype=float)
        self.om2_b = np.asarray(cfg.omega0_squared(t_b, side=-1), dtype=float)
        self.f_a = np.asarray(cfg.force0(t_a), dtype=float)
        self.f_b = np.asarray(cfg.force0(t_b), dtype=float)
        self.s1 = np.sqrt(2.0 * cfg.eps1 * np.asarray(cfg.noise_window(t_a, 1)))
        self.s2 = np.sqrt(2.0 * cfg.eps2 * np.asarray(cfg.noise_window(t_a, 2)))
        self.active = (k >= cfg.step_index(cfg.t_launch)).astype(float)


def step(state: TrajectoryState, cfg: ScenarioConfig, dW1, dW2, scheme: str = "ito") -> TrajectoryState:
    """Advance by one step of length cfg.dt from ``state.t`` (which must sit on the step grid)."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    k = cfg.step_index(state.t)
    t, dt = state.t, cfg.dt
    t_b = t + dt
    s1 = np.sqrt(2.0 * cfg.eps1 * cfg.noise_window(t, 1))
    s2 = np.sqrt(2.0 * cfg.eps2 * cfg.noise_window(t, 2))
    active = float(k >= cfg.step_index(cfg.t_launch))
    y = (state.eta, state.eta_dot, state.xi, state.xi_dot, state.sigma, state.log_r_integral)
    with np.errstate(over="ignore", invalid="ignore"):
        y = _advance(
            y, dt, cfg.omega0_squared(t, 1), cfg.omega0_squared(t_b, -1), cfg.force0(t), cfg.force0(t_b),
            active, s1 * np.asarray(dW1), s2 * np.asarray(dW2), scheme,
        )
        phase = state.phase + np.angle(y[2] / state.xi)
    new = TrajectoryState(cfg.time(k + 1).item(), *y, phase, state.divergent)
    return replace(new, divergent=_divergent(new))


def _divergent(s: TrajectoryState):
    parts = (s.eta, s.eta_dot, s.xi, s.xi_dot, s.sigma, s.log_r_integral)
    bad = np.asarray(s.divergent, dtype=bool)
    for p in parts:
        bad = bad | ~np.isfinite(p) | (np.abs(p) > _OVERFLOW)
    with np.errstate(invalid="ignore"):
        bad = bad | ~(np.abs(s.xi) >= XI_FLOOR)
    return bad[()]


# -- whole horizon ------------------------------------------------------------


@dataclass
class Dense:
    """Recorded samples: ``t`` of shape (n,), ``data`` of shape (n, batch, 6) holding
    z1, z2, z3, z4, sigma, log_r_integral."""

    t: np.ndarray
    data: np.ndarray

    COLUMNS = ("t", "z1", "z2", "z3", "z4", "sigma", "log_r_integral")


def _record(state: TrajectoryState):
    with np.errstate(all="ignore"):
        ratio = state.xi_dot / state.xi
    return np.stack([state.eta, state.eta_dot, ratio.real, ratio.imag, state.sigma, state.log_r_integral], axis=-1)


def integrate_batch(
    cfg: ScenarioConfig,
    noise,
    t_stop: float | None = None,
    scheme: str = "ito",
    record_every: int | None = None,
    launch_kick: np.ndarray | None = None,
    batch: int | None = None,
):
    """Integrate a batch of realizations from t_start to ``t_stop`` (default t_end).

    ``noise`` is a NoiseBatch, an ExplicitNoise, or a list of realization indices (drawn
    from cfg.base_seed). ``launch_kick`` of shape (batch, 2) is added to (eta, eta_dot)
    at the launch time. Returns (final state, dense record or None).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if not isinstance(noise, (NoiseBatch, ExplicitNoise)):
        noise = NoiseBatch(cfg, noise)
    n_batch = batch or (len(noise.indices) if isinstance(noise, NoiseBatch) else noise.increments.shape[0])
    k_stop = cfg.n_steps if t_stop is None else cfg.step_index(t_stop)
    k_launch = cfg.step_index(cfg.t_launch)
    table = _StepTable(cfg)
    dt = cfg.dt

    s = initial_state(cfg, n_batch)
    y = (s.eta, s.eta_dot, s.xi, s.xi_dot, s.sigma, s.log_r_integral)
    phase = s.phase
    times, records = [], []
    if record_every:
        times.append(cfg.t_start)
        records.append(_record(s))

    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while k < k_stop:
            block = noise.take(min(_BLOCK, k_stop - k))
            for j in range(block.shape[1]):
                if launch_kick is not None and k == k_launch:
                    y = (y[0] + launch_kick[:, 0], y[1] + launch_kick[:, 1]) + y[2:]
                xi_old = y[2]
                y = _advance(
                    y, dt, table.om2_a[k], table.om2_b[k], table.f_a[k], table.f_b[k], table.active[k],
                    table.s1[k] * block[:, j, 0], table.s2[k] * block[:, j, 1], scheme,
                )
                phase = phase + np.angle(y[2] / xi_old)
                k += 1
                if record_every and k % record_every == 0:
                    times.append(float(cfg.time(k)))
                    records.append(_record(TrajectoryState(0.0, *y, phase)))

    final = TrajectoryState(float(cfg.time(k)), *y, phase, np.zeros(n_batch, dtype=bool))
    final = replace(final, divergent=_divergent(final))
    dense = Dense(np.array(times), np.array(records)) if record_every else None
    return final, dense


def integrate(
    cfg: ScenarioConfig,
    noise: NoiseRealization | np.ndarray | None = None,
    t_stop: float | None = None,
    scheme: str = "ito",
    record_every: int | None = None,
):
    """Single realization. ``noise`` may be a NoiseRealization, an explicit (n_steps, 2)
    increment array, or None (deterministic). Returns the final state, or
    (state, Dense) when ``record_every`` is given."""
    if noise is None:
        src = ExplicitNoise(np.zeros((1, cfg.n_steps, 2)))
    elif isinstance(noise, NoiseRealization):
        src = NoiseBatch(cfg, [noise.realization_index], seed=noise.seed)
    else:
        src = ExplicitNoise(np.asarray(noise))
    final, dense = integrate_batch(cfg, src, t_stop=t_stop, scheme=scheme, record_every=record_every)
    state = final.take(0)
    state = replace(
        state,
        eta=float(state.eta), eta_dot=float(state.eta_dot), xi=complex(state.xi), xi_dot=complex(state.xi_dot),
        sigma=float(state.sigma), log_r_integral=float(state.log_r_integral), phase=float(state.phase),
        divergent=bool(state.divergent),
    )
    if record_every:
        return state, Dense(dense.t, dense.data[:, 0])
    return state


def check_divergence(divergent: np.ndarray, threshold: float = 1e-3) -> int:
    """Count divergent realizations; raise when the fraction exceeds ``threshold``."""
    divergent = np.asarray(divergent, dtype=bool)
    count = int(divergent.sum())
    if divergent.size and count / divergent.size > threshold:
        raise DivergenceError(
            f"{count} of {divergent.size} realizations diverged (limit {threshold:.1%}); "
            "the noise is too strong for a stationary regime"
        )
    return count
