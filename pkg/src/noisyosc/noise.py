"""Counter-based Wiener increments, one independent Philox stream per (seed, realization, channel).

Channel ``i`` draws nothing before its switch-on step; draw ``j`` of the stream is the
increment of step ``k_i + j``. Extending ``te`` therefore keeps every earlier increment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ScenarioConfig


def _generator(seed: int, index: int, channel: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index, channel])))


@dataclass(frozen=True)
class NoiseRealization:
    seed: int
    realization_index: int

    def increments(self, cfg: ScenarioConfig) -> np.ndarray:
        """All increments as an array of shape (n_steps, 2); zero outside the noise windows."""
        return NoiseBatch(cfg, [self.realization_index], seed=self.seed).take(cfg.n_steps)[0]


class NoiseBatch:
    """Sequential reader of increments (dW1, dW2) for a batch of realizations.

    ``take(k)`` returns the next ``k`` steps as an array of shape (batch, k, 2), each
    entry N(0, dt) inside the channel's window and exactly zero outside it.
    """

    def __init__(self, cfg: ScenarioConfig, indices, seed: int | None = None) -> None:
        self.cfg = cfg
        self.indices = [int(i) for i in indices]
        self.seed = cfg.base_seed if seed is None else int(seed)
        self.position = 0
        self._windows = []
        self._gens = []
        for channel, t_on, eps in ((1, cfg.t1, cfg.eps1), (2, cfg.t2, cfg.eps2)):
            self._windows.append((cfg.step_index(t_on), cfg.step_index(cfg.te)))
            if eps > 0:
                self._gens.append([_generator(self.seed, i, channel) for i in self.indices])
            else:
                self._gens.append(None)

    def take(self, count: int) -> np.ndarray:
        k0, k1 = self.position, self.position + count
        out = np.zeros((len(self.indices), count, 2))
        sqrt_dt = np.sqrt(self.cfg.dt)
        for c in range(2):
            gens = self._gens[c]
            if gens is None:
                continue
            lo, hi = max(k0, self._windows[c][0]), min(k1, self._windows[c][1])
            if hi <= lo:
                continue
            for b, g in enumerate(gens):
                out[b, lo - k0 : hi - k0, c] = g.standard_normal(hi - lo)
            out[:, lo - k0 : hi - k0, c] *= sqrt_dt
        self.position = k1
        return out


class ExplicitNoise:
    """Increments supplied as an array of shape (batch, n_steps, 2); same reader interface."""

    def __init__(self, increments: np.ndarray) -> None:
        self.increments = np.asarray(increments, dtype=float)
        if self.increments.ndim == 2:
            self.increments = self.increments[None]
        self.position = 0

    def take(self, count: int) -> np.ndarray:
        out = self.increments[:, self.position : self.position + count]
        if out.shape[1] != count:
            raise ValueError("explicit increments exhausted before the end of the horizon")
        self.position += count
        return out


def coarsen(increments: np.ndarray, factor: int = 2) -> np.ndarray:
    """Sum consecutive groups of fine increments: the same Brownian path on a coarser grid."""
    inc = np.asarray(increments)
    n = inc.shape[-2]
    if n % factor:
        raise ValueError("number of steps must be divisible by the coarsening factor")
    shape = inc.shape[:-2] + (n // factor, factor, inc.shape[-1])
    return inc.reshape(shape).sum(axis=-2)
