"""Drift and diffusion of the classical state z = (eta, eta_dot, Re xi_dot/xi, Im xi_dot/xi),
the stationary operator used for residual checks, and the weighted-path expectation that
replaces a grid solve of the backward problem."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .amplitudes import p_exponent
from .noise import NoiseBatch, _generator
from .parallel import chunks, ordered_map
from .scenario import ScenarioConfig
from .trajectory import check_divergence, integrate_batch, z_coords

LAUNCH_CHANNEL = 3
DEFAULT_CHUNK = 1000


class GridTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class FPCoefficients:
    drift: np.ndarray  # shape (4, ...)
    d22: np.ndarray
    d33: np.ndarray
    d23: np.ndarray

    @property
    def determinant(self):
        return self.d22 * self.d33 - self.d23**2


def fp_drift(z, t: float, cfg: ScenarioConfig) -> np.ndarray:
    z1, z2, z3, z4 = (np.asarray(c, dtype=float) for c in z)
    om2 = cfg.omega0_squared(t)
    f0 = cfg.force0(t)
    return np.array([z2, f0 - om2 * z1, z4**2 - z3**2 - om2, -2.0 * z3 * z4])


def fp_coefficients(z, t: float, cfg: ScenarioConfig) -> FPCoefficients:
    z1 = np.asarray(z[0], dtype=float)
    e1 = cfg.eps1 * cfg.noise_window(t, 1)
    e2 = cfg.eps2 * cfg.noise_window(t, 2)
    return FPCoefficients(
        drift=fp_drift(z, t, cfg),
        d22=(e2 + e1 * z1**2)[()],
        d33=(e1 + 0.0 * z1)[()],
        d23=(e1 * z1)[()],
    )


# -- stationary operator ------------------------------------------------------


@dataclass(frozen=True)
class FPGrid:
    """Scalar field on a tensor grid over (z1, z2, z3)."""

    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    values: np.ndarray

    def __post_init__(self) -> None:
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"field shape {self.values.shape} does not match axes {shape}")
        for a in self.axes:
            if len(a) > 1 and not np.all(np.diff(a) > 0):
                raise ValueError("axis nodes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")

    @classmethod
    def from_box(cls, lo, hi, nodes, func: Callable | None = None) -> FPGrid:
        axes = tuple(np.linspace(a, b, int(k)) for a, b, k in zip(lo, hi, nodes))
        if func is None:
            values = np.zeros(tuple(len(a) for a in axes))
        else:
            mesh = np.meshgrid(*axes, indexing="ij")
            values = np.asarray(func(*mesh), dtype=float) * np.ones(mesh[0].shape)
        return cls(axes, values)

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def with_values(self, values) -> FPGrid:
        return FPGrid(self.axes, np.asarray(values, dtype=float))


def stationary_operator(grid: FPGrid, n: int, m: int, cfg: ScenarioConfig) -> np.ndarray:
    """The stationary backward operator with outgoing-frequency coefficients, applied by
    central differences; returns values on interior nodes."""
    if any(len(a) < 3 for a in grid.axes):
        raise GridTooSmallError("need at least 3 nodes per axis")
    p = p_exponent(n, m)
    q = grid.values
    h1, h2, h3 = grid.spacing
    w2 = cfg.omega_out**2
    e1, e2 = cfg.eps1, cfg.eps2
    c = (slice(1, -1),) * 3

    def sh(d1=0, d2=0, d3=0):
        return q[tuple(slice(1 + d, q.shape[i] - 1 + d) for i, d in enumerate((d1, d2, d3)))]

    dq1 = (sh(1, 0, 0) - sh(-1, 0, 0)) / (2 * h1)
    dq2 = (sh(0, 1, 0) - sh(0, -1, 0)) / (2 * h2)
    dq3 = (sh(0, 0, 1) - sh(0, 0, -1)) / (2 * h3)
    d22 = (sh(0, 1, 0) - 2 * q[c] + sh(0, -1, 0)) / h2**2
    d33 = (sh(0, 0, 1) - 2 * q[c] + sh(0, 0, -1)) / h3**2
    d23 = (sh(0, 1, 1) - sh(0, 1, -1) - sh(0, -1, 1) + sh(0, -1, -1)) / (4 * h2 * h3)
    z1, z2, z3 = np.meshgrid(*(a[1:-1] for a in grid.axes), indexing="ij")
    return (
        -z2 * dq1
        + w2 * z1 * dq2
        + (z3**2 + w2) * dq3
        + (e2 + e1 * z1**2) * d22
        + e1 * d33
        + 2 * e1 * z1 * d23
        + (2 - p) * z3 * q[c]
    )


def stationary_residual(grid: FPGrid, n: int, m: int, cfg: ScenarioConfig) -> float:
    """Root-mean-square of the stationary operator over interior nodes."""
    res = stationary_operator(grid, n, m, cfg)
    return float(np.sqrt(np.mean(res**2)))


# -- weighted-path expectation ------------------------------------------------


def launch_kicks(cfg: ScenarioConfig, indices) -> np.ndarray | None:
    """Gaussian offsets of (eta, eta_dot) at launch, std ``launch_smear``, one stream per realization."""
    if cfg.launch_smear <= 0:
        return None
    out = np.empty((len(indices), 2))
    for b, i in enumerate(indices):
        out[b] = _generator(cfg.base_seed, int(i), LAUNCH_CHANNEL).standard_normal(2)
    return cfg.launch_smear * out


def _fk_chunk(args):
    cfg, indices, scheme = args
    indices = list(indices)
    final, _ = integrate_batch(
        cfg, NoiseBatch(cfg, indices), t_stop=cfg.te, scheme=scheme, launch_kick=launch_kicks(cfg, indices)
    )
    ok = ~np.asarray(final.divergent)
    out = np.full((len(indices), 5), np.nan)
    if ok.any():
        good = final.take(ok)
        out[ok, :4] = np.stack(z_coords(good), axis=1)
        out[ok, 4] = good.log_r_integral
    return out


def fk_paths(
    cfg: ScenarioConfig, N: int, workers: int = 1, scheme: str = "stratonovich", chunk: int = DEFAULT_CHUNK
) -> np.ndarray:
    """Rows (z1, z2, z3, z4, log_r_integral) at te for realizations 0..N-1; NaN rows diverged."""
    items = [(cfg, r, scheme) for r in chunks(N, chunk)]
    return np.concatenate(ordered_map(_fk_chunk, items, workers)) if items else np.empty((0, 5))


def weighted_samples(n: int, m: int, observable: Callable, paths: np.ndarray) -> np.ndarray:
    """observable(z) * exp(-p_nm * log_r_integral) per path; NaN where the path diverged."""
    p = p_exponent(n, m)
    out = np.full(paths.shape[0], np.nan)
    ok = ~np.isnan(paths).any(axis=1)
    if ok.any():
        z = tuple(paths[ok, i] for i in range(4))
        out[ok] = np.asarray(observable(z), dtype=float) * np.exp(-p * paths[ok, 4])
    return out


def feynman_kac_Q_expectation(
    n: int,
    m: int,
    observable: Callable,
    cfg: ScenarioConfig,
    N: int,
    workers: int = 1,
    scheme: str = "stratonovich",
    chunk: int = DEFAULT_CHUNK,
) -> tuple[float, float]:
    """Mean and standard error of observable(z(te)) weighted by exp(-p_nm * integral of z3)."""
    if N < 2:
        raise ValueError("need at least 2 realizations")
    p_exponent(n, m)
    samples = weighted_samples(n, m, observable, fk_paths(cfg, N, workers, scheme, chunk))
    bad = np.isnan(samples)
    check_divergence(bad)
    good = samples[~bad]
    return float(np.mean(good)), float(np.std(good, ddof=1) / math.sqrt(good.size))


def unit_observable(z) -> np.ndarray:
    return np.ones_like(np.asarray(z[0], dtype=float))


# -- pilot box and empirical densities ----------------------------------------


def pilot_samples(cfg: ScenarioConfig, N: int = 1000, scheme: str = "stratonovich") -> np.ndarray:
    """(z1, z2, z3) at te for ``N`` realizations, shape (N, 3)."""
    final, _ = integrate_batch(cfg, NoiseBatch(cfg, range(N)), t_stop=cfg.te, scheme=scheme)
    final = final.take(~np.asarray(final.divergent))
    z = z_coords(final)
    return np.stack(z[:3], axis=1)


def pilot_box(cfg: ScenarioConfig, N: int = 1000, width: float = 6.0, scheme: str = "stratonovich"):
    """Per-axis (lo, hi) = mean -/+ ``width`` standard deviations of a pilot ensemble."""
    s = pilot_samples(cfg, N, scheme)
    mean, std = s.mean(axis=0), s.std(axis=0, ddof=1)
    std = np.where(std > 0, std, 1.0)
    return mean - width * std, mean + width * std


def empirical_density(samples: np.ndarray, lo, hi, nodes, weights=None) -> FPGrid:
    """Normalized histogram of (z1, z2, z3) samples with bin centres as grid nodes."""
    edges = [np.linspace(a, b, int(k) + 1) for a, b, k in zip(lo, hi, nodes)]
    hist, _ = np.histogramdd(samples, bins=edges, weights=weights, density=True)
    axes = tuple(0.5 * (e[1:] + e[:-1]) for e in edges)
    return FPGrid(axes, hist)


def write_grid_csv(path: str | Path, grid: FPGrid) -> None:
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z1", "z2", "z3", "value"])
        for a, b, c, v in zip(*(g.ravel() for g in mesh), grid.values.ravel()):
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}", f"{v:.17g}"])


def read_grid_csv(path: str | Path) -> FPGrid:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    axes = tuple(np.unique(arr[:, i]) for i in range(3))
    return FPGrid(axes, arr[:, 3].reshape(tuple(len(a) for a in axes)))
