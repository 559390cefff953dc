"""Grid oracle: the Schroedinger equation with a noisy quadratic potential, solved by
split-step Fourier on a periodic box, plus the analytic wave functional built from
classical trajectories and overlap quadrature against oscillator eigenstates.

Every routine accepts a batch of wave functions stacked along the first axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .noise import ExplicitNoise, NoiseBatch, NoiseRealization
from .scenario import ScenarioConfig
from .trajectory import TrajectoryState, z_coords

EDGE_TOL = 1e-8
NORM_ABORT = 1e-4
BOUNDARY_LAYER_FRACTION = 50  # outer 1/50 of the box on each side
_BLOCK = 256


class BoxTooSmallError(ValueError):
    pass


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class WaveGrid:
    """Periodic grid x_j = x_min + j*dx, j < nodes, with dx = (x_max - x_min)/nodes.

    ``psi`` has shape (nodes,) or (batch, nodes); it may be None for a bare geometry.
    """

    x_min: float
    x_max: float
    nodes: int
    psi: np.ndarray | None = None
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.nodes < 8 or self.nodes & (self.nodes - 1):
            raise ValueError(f"node count must be a power of two >= 8, got {self.nodes}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def for_scenario(cls, cfg: ScenarioConfig, nodes: int | None = None) -> WaveGrid:
        half = cfg.grid_half_width * cfg.natural_length
        return cls(-half, half, nodes or cfg.grid_nodes)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nodes

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nodes)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nodes, d=self.dx)

    def with_psi(self, psi, t: float | None = None) -> WaveGrid:
        return replace(self, psi=np.asarray(psi), t=self.t if t is None else t)

    def norm(self):
        return (np.sum(np.abs(self.psi) ** 2, axis=-1) * self.dx)[()]

    def edge_amplitude(self, width: int = 1):
        """Largest |psi| over the first and last ``width`` nodes."""
        a = np.abs(self.psi)
        return np.maximum(a[..., :width].max(axis=-1), a[..., -width:].max(axis=-1))[()]


def hermite_functions(n_max: int, y: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions h_0..h_{n_max} at ``y`` (unit frequency) by the
    three-term recurrence; shape (n_max + 1,) + y.shape."""
    y = np.asarray(y, dtype=float)
    out = np.empty((n_max + 1,) + y.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * y**2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for k in range(1, n_max):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * y * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def eigenfunction(n: int, omega: float, x) -> np.ndarray:
    """phi_n for frequency ``omega`` (unit mass, hbar = 1), L2-normalized on the line."""
    return omega**0.25 * hermite_functions(n, math.sqrt(omega) * np.asarray(x))[n]


def stationary_state(n: int, omega: float, grid: WaveGrid) -> WaveGrid:
    if n < 0:
        raise ValueError("level must be nonnegative")
    if omega <= 0:
        raise ValueError("frequency must be positive")
    phi = eigenfunction(n, omega, grid.x)
    g = grid.with_psi(phi)
    if g.edge_amplitude() >= EDGE_TOL:
        raise BoxTooSmallError(
            f"level {n} at omega={omega} has edge amplitude {g.edge_amplitude():.2e} >= {EDGE_TOL:g}; widen the box"
        )
    return g.with_psi(phi / math.sqrt(g.norm()))


def initial_wave(n: int, cfg: ScenarioConfig, grid: WaveGrid, batch: int | None = None) -> WaveGrid:
    """Incoming level ``n`` at t_start with its stationary phase exp(-i(n + 1/2) omega_in t_start),
    optionally tiled over ``batch`` realizations."""
    phi = stationary_state(n, cfg.omega_in, grid).psi * np.exp(-1j * (n + 0.5) * cfg.omega_in * cfg.t_start)
    if batch is not None:
        phi = np.tile(phi, (batch, 1))
    return grid.with_psi(phi, t=cfg.t_start)


def _potential_phase(x, x2, a, b):
    # exp(-i (a x^2 + b x)) for per-realization a, b of shape (batch,)
    return np.exp(-1j * (a[:, None] * x2 + b[:, None] * x))


def evolve(
    psi: WaveGrid,
    cfg: ScenarioConfig,
    noise=None,
    t_stop: float | None = None,
    snapshot_steps=(),
):
    """Strang split-step evolution from cfg.t_start to ``t_stop`` (default t_end).

    Each step of length dt sees the potential at its midpoint: deterministic profiles at
    t + dt/2 plus the piecewise-constant noise sqrt(2 eps_i p_i) dW_i/dt, with the same
    increments as the trajectory integrator. ``noise`` is a NoiseRealization, NoiseBatch,
    ExplicitNoise, an increment array, or None. Half-kicks of consecutive steps are merged.

    Returns the final WaveGrid, or (WaveGrid, {step: psi}) when ``snapshot_steps`` is given.
    """
    data = np.asarray(psi.psi, dtype=complex)
    single = data.ndim == 1
    data = np.atleast_2d(data).copy()
    batch = data.shape[0]
    if noise is None:
        noise = ExplicitNoise(np.zeros((batch, cfg.n_steps, 2)))
    elif isinstance(noise, NoiseRealization):
        noise = NoiseBatch(cfg, [noise.realization_index], seed=noise.seed)
    elif not isinstance(noise, (NoiseBatch, ExplicitNoise)):
        noise = ExplicitNoise(np.asarray(noise))

    k_stop = cfg.n_steps if t_stop is None else cfg.step_index(t_stop)
    dt = cfg.dt
    x = psi.x
    x2 = 0.5 * x * x
    kinetic = np.exp(-0.5j * psi.k**2 * dt)
    t_mid = cfg.time(np.arange(k_stop) + 0.5)
    om2 = np.asarray(cfg.omega0_squared(t_mid), dtype=float)
    f0 = np.asarray(cfg.force0(t_mid), dtype=float)
    t_left = cfg.time(np.arange(k_stop))
    s1 = np.sqrt(2.0 * cfg.eps1 * np.asarray(cfg.noise_window(t_left, 1)))
    s2 = np.sqrt(2.0 * cfg.eps2 * np.asarray(cfg.noise_window(t_left, 2)))
    norm0 = np.sum(np.abs(data) ** 2, axis=1) * psi.dx
    snaps = {}
    wanted = set(int(s) for s in snapshot_steps)

    prev_a = prev_b = None
    k = 0
    while k < k_stop:
        block = noise.take(min(_BLOCK, k_stop - k))
        for j in range(block.shape[1]):
            # half-step phase (dt/2) V = a x^2/2 + b x
            a = 0.5 * dt * (om2[k] + s1[k] * block[:, j, 0] / dt)
            b = -0.5 * dt * (f0[k] + s2[k] * block[:, j, 1] / dt)
            if prev_a is None:
                data *= _potential_phase(x, x2, a, b)
            else:
                data *= _potential_phase(x, x2, prev_a + a, prev_b + b)
            data = np.fft.ifft(kinetic * np.fft.fft(data, axis=1), axis=1)
            prev_a, prev_b = a, b
            k += 1
            if k in wanted:
                snaps[k] = data * _potential_phase(x, x2, prev_a, prev_b)
    if prev_a is not None:
        data *= _potential_phase(x, x2, prev_a, prev_b)

    dens = np.abs(data) ** 2
    drift = np.abs(np.sum(dens, axis=1) * psi.dx - norm0)
    # The periodic box conserves norm exactly, so probability that reached the boundary
    # layer (and may have wrapped around) counts as lost.
    layer = max(1, psi.nodes // BOUNDARY_LAYER_FRACTION)
    edge = (dens[:, :layer].sum(axis=1) + dens[:, -layer:].sum(axis=1)) * psi.dx
    loss = np.maximum(drift, edge)
    if np.any(loss > NORM_ABORT):
        raise NormDriftError(
            f"norm drift {drift.max():.2e}, boundary-layer probability {edge.max():.2e} (limit {NORM_ABORT:g}); "
            "reduce dt or enlarge the box"
        )
    out = psi.with_psi(data[0] if single else data, t=float(cfg.time(k)))
    if wanted:
        return out, snaps
    return out


def wavefunctional_eval(n: int, state: TrajectoryState, grid: WaveGrid, cfg: ScenarioConfig) -> WaveGrid:
    """The Gaussian-family wave functional of level ``n`` built from a trajectory state.

    With r = |xi|, y = x - eta and gamma the unwrapped phase of xi:
    r^{-1/2} exp(i[eta_dot y + z3 y^2/2 + sigma]) exp(-i(n + 1/2) gamma) phi_n^in(y / r).
    """
    z1, z2, z3, _ = (np.atleast_1d(c) for c in z_coords(state))
    r = np.atleast_1d(np.abs(state.xi))
    sigma = np.atleast_1d(state.sigma)
    gamma = np.atleast_1d(state.phase)
    x = grid.x[None, :]
    y = x - z1[:, None]
    phase = z2[:, None] * y + 0.5 * z3[:, None] * y**2 + sigma[:, None] - (n + 0.5) * gamma[:, None]
    psi = eigenfunction(n, cfg.omega_in, y / r[:, None]) / np.sqrt(r[:, None]) * np.exp(1j * phase)
    if np.ndim(state.xi) == 0:
        psi = psi[0]
    return grid.with_psi(psi, t=float(state.t))


def overlap_amplitudes(psi: WaveGrid, levels: int, omega: float) -> np.ndarray:
    """<phi_m, psi> for m = 0..levels by discrete quadrature; shape (..., levels + 1)."""
    basis = omega**0.25 * hermite_functions(levels, math.sqrt(omega) * psi.x)
    return np.tensordot(np.asarray(psi.psi), basis, axes=([-1], [1])) * psi.dx


def overlap_probabilities(psi: WaveGrid, levels: int, omega_out: float) -> np.ndarray:
    """|<phi_m^out, psi>|^2 for m = 0..levels."""
    return np.abs(overlap_amplitudes(psi, levels, omega_out)) ** 2


def l2_distance(a: WaveGrid, b: WaveGrid):
    return np.sqrt(np.sum(np.abs(np.asarray(a.psi) - np.asarray(b.psi)) ** 2, axis=-1) * a.dx)[()]


def write_snapshot(path: str | Path, grid: WaveGrid, psi=None) -> None:
    """Write (x, Re psi, Im psi) as CSV for a single wave function."""
    psi = np.asarray(grid.psi if psi is None else psi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re_psi", "im_psi"])
        for xv, v in zip(grid.x, psi):
            w.writerow([f"{xv:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_snapshot(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1] + 1j * arr[:, 2]
