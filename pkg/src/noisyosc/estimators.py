"""Transition probabilities W_nm from three independent routes, with error bars and
pairwise comparison.

``oracle``: grid evolution per realization. ``functional``: the analytic wave functional
built from classical trajectories, projected on the grid. ``feynman_kac``: kernel
observables of z(te) weighted by exp(-p_nm * integral of z3).

Realizations are processed in fixed chunks and concatenated in index order before any
reduction, so results do not depend on the worker count.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .amplitudes import KernelConvention, convention, p_exponent
from .calibration import CalibrationRecord
from .fokker_planck import fk_paths, weighted_samples
from .noise import NoiseBatch
from .oracle import WaveGrid, evolve, initial_wave, overlap_probabilities, wavefunctional_eval
from .parallel import chunks, ordered_map
from .reference import AsymptoticData, solve_regular
from .scenario import ScenarioConfig
from .trajectory import check_divergence, integrate_batch

METHODS = ("oracle", "functional", "feynman_kac")
ORACLE_CHUNK = 50
FUNCTIONAL_CHUNK = 500
FK_CHUNK = 1000
Z_THRESHOLD = 3.0
ABS_FLOOR = 1e-3


class FingerprintMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionEstimate:
    n: int
    m: int
    value: float
    stderr: float
    samples: int
    method: str
    fingerprint: str
    divergent: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> TransitionEstimate:
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def _summarize(n, m, samples, method, cfg, divergent, seconds) -> TransitionEstimate:
    samples = np.asarray(samples, dtype=float)
    count = samples.size
    spread = count > 1 and np.ptp(samples) > 0
    stderr = float(np.std(samples, ddof=1) / math.sqrt(count)) if spread else 0.0
    return TransitionEstimate(
        n, m, float(np.mean(samples)), stderr, count, method, cfg.fingerprint(), int(divergent), seconds
    )


def _noise_free(cfg: ScenarioConfig) -> bool:
    return cfg.eps1 == 0.0 and cfg.eps2 == 0.0


def _realizations(cfg: ScenarioConfig, N: int) -> int:
    # Without noise every realization is the same path: compute one, replicate it.
    if N < 2:
        raise ValueError("need at least 2 realizations")
    return 1 if _noise_free(cfg) else N


def _expand(rows: np.ndarray, cfg: ScenarioConfig, N: int) -> np.ndarray:
    return np.repeat(rows, N, axis=0) if _noise_free(cfg) else rows


# -- oracle -------------------------------------------------------------------


def _oracle_chunk(args):
    cfg, indices, n, levels = args
    grid = WaveGrid.for_scenario(cfg)
    psi0 = initial_wave(n, cfg, grid, batch=len(indices))
    out = evolve(psi0, cfg, NoiseBatch(cfg, list(indices)))
    return overlap_probabilities(out, levels, cfg.omega_out)


def oracle_probabilities(n: int, levels: int, cfg: ScenarioConfig, N: int, workers: int = 1, chunk: int = ORACLE_CHUNK):
    """|c_nm|^2 for m = 0..levels per realization, shape (N, levels + 1)."""
    k = _realizations(cfg, N)
    items = [(cfg, r, n, levels) for r in chunks(k, chunk)]
    return _expand(np.concatenate(ordered_map(_oracle_chunk, items, workers)), cfg, N)


def oracle_estimates(n: int, ms, cfg: ScenarioConfig, N: int, workers: int = 1) -> dict[int, TransitionEstimate]:
    ms = list(ms)
    t0 = time.perf_counter()
    probs = oracle_probabilities(n, max(ms), cfg, max(N, 2), workers)[:N]
    sec = time.perf_counter() - t0
    return {m: _summarize(n, m, probs[:, m], "oracle", cfg, 0, sec) for m in ms}


def w_oracle(n: int, m: int, cfg: ScenarioConfig, N: int, workers: int = 1) -> TransitionEstimate:
    return oracle_estimates(n, [m], cfg, N, workers)[m]


# -- analytic functional ------------------------------------------------------


def _functional_chunk(args):
    cfg, indices, n, levels, scheme = args
    grid = WaveGrid.for_scenario(cfg)
    final, _ = integrate_batch(cfg, NoiseBatch(cfg, list(indices)), scheme=scheme)
    ok = ~np.asarray(final.divergent)
    probs = np.full((len(indices), levels + 1), np.nan)
    if ok.any():
        psi = wavefunctional_eval(n, final.take(ok), grid, cfg)
        probs[ok] = overlap_probabilities(psi, levels, cfg.omega_out)
    return probs


def functional_probabilities(
    n: int, levels: int, cfg: ScenarioConfig, N: int, workers: int = 1, scheme: str = "stratonovich",
    chunk: int = FUNCTIONAL_CHUNK,
):
    """Per-realization overlaps of the analytic wave functional at t_end; NaN rows mark divergence."""
    k = _realizations(cfg, N)
    items = [(cfg, r, n, levels, scheme) for r in chunks(k, chunk)]
    return _expand(np.concatenate(ordered_map(_functional_chunk, items, workers)), cfg, N)


def _drop_divergent(rows: np.ndarray):
    bad = np.isnan(rows).any(axis=1)
    check_divergence(bad)
    return rows[~bad], int(bad.sum())


def functional_estimates(
    n: int, ms, cfg: ScenarioConfig, N: int, workers: int = 1, scheme: str = "stratonovich"
) -> dict[int, TransitionEstimate]:
    ms = list(ms)
    t0 = time.perf_counter()
    rows, bad = _drop_divergent(functional_probabilities(n, max(ms), cfg, max(N, 2), workers, scheme)[:N])
    sec = time.perf_counter() - t0
    return {m: _summarize(n, m, rows[:, m], "functional", cfg, bad, sec) for m in ms}


def w_functional(n: int, m: int, cfg: ScenarioConfig, N: int, workers: int = 1, scheme: str = "stratonovich"):
    return functional_estimates(n, [m], cfg, N, workers, scheme)[m]


# -- weighted paths -----------------------------------------------------------


@dataclass(frozen=True)
class KernelObservable:
    """Picklable observable z -> Omega_in^p h_nm(mapped z) for one convention."""

    convention: KernelConvention
    n: int
    m: int
    asym: AsymptoticData

    def __call__(self, z):
        return self.convention.observable(self.n, self.m, z, self.asym)


def feynman_kac_estimates(
    n: int,
    ms,
    cfg: ScenarioConfig,
    N: int,
    workers: int = 1,
    calibration: CalibrationRecord | None = None,
    convention_name: str | None = None,
    scheme: str = "stratonovich",
) -> dict[int, TransitionEstimate]:
    """Weighted-path estimates. The kernel convention comes from ``calibration`` (which
    must cover the scenario family) unless ``convention_name`` forces one."""
    if convention_name is None:
        if calibration is None:
            raise ValueError("a calibration record is required; run calibration first")
        calibration.require(cfg)
        convention_name = calibration.convention
    conv = convention(convention_name)
    ms = list(ms)
    for m in ms:
        p_exponent(n, m)
    asym = solve_regular(cfg)
    t0 = time.perf_counter()
    paths = fk_paths(cfg, _realizations(cfg, max(N, 2)), workers, scheme, FK_CHUNK)
    bad = np.isnan(paths).any(axis=1)
    check_divergence(bad)
    sec = time.perf_counter() - t0
    out = {}
    for m in ms:
        samples = weighted_samples(n, m, KernelObservable(conv, n, m, asym), paths[~bad])
        samples = _expand(samples, cfg, N)[:N]
        out[m] = _summarize(n, m, samples, "feynman_kac", cfg, int(bad.sum()), sec)
    return out


def w_feynman_kac(
    n: int, m: int, cfg: ScenarioConfig, N: int, calibration: CalibrationRecord | None, workers: int = 1,
    scheme: str = "stratonovich",
) -> TransitionEstimate:
    return feynman_kac_estimates(n, [m], cfg, N, workers, calibration=calibration, scheme=scheme)[m]


# -- comparison ---------------------------------------------------------------


@dataclass
class PairComparison:
    a: str
    b: str
    n: int
    m: int
    difference: float
    z: float
    passed: bool


@dataclass
class CrossValidation:
    pairs: list[PairComparison] = field(default_factory=list)
    threshold: float = Z_THRESHOLD

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.pairs)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "passed": self.passed, "pairs": [asdict(p) for p in self.pairs]}


def z_score(a: TransitionEstimate, b: TransitionEstimate) -> float:
    diff = abs(a.value - b.value)
    scale = math.hypot(a.stderr, b.stderr)
    if scale == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / scale


def cross_validate(
    estimates: list[TransitionEstimate], threshold: float = Z_THRESHOLD, atol: float = ABS_FLOOR
) -> CrossValidation:
    """Pairwise z-scores between estimates of the same (n, m). A pair passes when z < ``threshold``
    or, for error-free estimates, when the values agree within ``atol``."""
    if len(estimates) < 2:
        raise ValueError("need at least two estimates")
    prints = {e.fingerprint for e in estimates}
    if len(prints) != 1:
        raise FingerprintMismatchError(f"estimates come from different scenarios: {sorted(prints)}")
    report = CrossValidation(threshold=threshold)
    for a, b in itertools.combinations(estimates, 2):
        if (a.n, a.m) != (b.n, b.m):
            continue
        z = z_score(a, b)
        diff = abs(a.value - b.value)
        report.pairs.append(PairComparison(a.method, b.method, a.n, a.m, diff, z, z < threshold or diff <= atol))
    return report


# -- stationarity -------------------------------------------------------------


def doubled_window(cfg: ScenarioConfig) -> ScenarioConfig:
    """Same scenario with the noise window [min(t1, t2), te) twice as long."""
    t_on = min(cfg.t1, cfg.t2)
    shift = cfg.te - t_on
    return cfg.replace(te=cfg.te + shift, t_end=cfg.t_end + shift, name=f"{cfg.name}-doubled-te")


@dataclass
class StationarityReport:
    base: TransitionEstimate
    doubled: TransitionEstimate
    z: float
    stationary: bool

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "doubled": self.doubled.to_dict(), "z": self.z, "stationary": self.stationary}


def stationarity_check(
    n: int, m: int, cfg: ScenarioConfig, N: int, method: str = "functional", workers: int = 1,
    calibration: CalibrationRecord | None = None,
) -> StationarityReport:
    """W_nm at te and with the noise window doubled; flagged non-stationary above 3 sigma."""
    runs = []
    for c in (cfg, doubled_window(cfg)):
        if method == "functional":
            runs.append(w_functional(n, m, c, N, workers))
        elif method == "oracle":
            runs.append(w_oracle(n, m, c, N, workers))
        elif method == "feynman_kac":
            runs.append(w_feynman_kac(n, m, c, N, calibration, workers))
        else:
            raise ValueError(f"unknown method {method!r}")
    z = z_score(*runs)
    return StationarityReport(runs[0], runs[1], z, z < Z_THRESHOLD)
