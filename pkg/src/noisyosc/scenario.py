"""Problem definition: deterministic profiles, noise powers and windows, time and space grids."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

SCHEMA_VERSION = 1

OMEGA_KINDS = ("constant", "jump", "tanh")
FORCE_KINDS = ("zero", "gaussian")

_ASYMPTOTIC_RTOL = 1e-6
_ALIGN_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid or incomplete scenario configuration."""


@dataclass(frozen=True)
class OmegaProfile:
    """Deterministic squared frequency.

    ``constant``: omega_in**2 everywhere. ``jump``: omega_in**2 before ``t_jump``,
    omega_out**2 from ``t_jump`` on. ``tanh``: smooth ramp in the squared frequency
    centred at ``center`` with time scale ``width``.
    """

    kind: str = "constant"
    t_jump: float = 0.0
    center: float = 0.0
    width: float = 1.0


@dataclass(frozen=True)
class ForceProfile:
    """Deterministic force: identically zero or ``amplitude*exp(-(t-center)**2/(2*width**2))``."""

    kind: str = "zero"
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    omega_in: float
    omega_out: float
    omega_profile: OmegaProfile = field(default_factory=OmegaProfile)
    force_profile: ForceProfile = field(default_factory=ForceProfile)
    eps1: float = 0.0
    eps2: float = 0.0
    t1: float = 0.0
    t2: float = 0.0
    te: float = 5.0
    t_start: float = -5.0
    t_end: float = 8.0
    dt: float = 1e-3
    base_seed: int = 0
    grid_nodes: int = 4096
    grid_half_width: float = 12.0
    launch_smear: float = 0.0
    name: str = "unnamed"

    def __post_init__(self) -> None:
        _validate(self)

    # -- profiles -----------------------------------------------------------

    def omega0_squared(self, t, side: int = 1):
        """Deterministic Omega_0^2(t).

        At a sudden jump the value is the right limit; ``side=-1`` returns the
        left limit instead (used by integrators for the step that ends on the jump).
        """
        prof = self.omega_profile
        w_in2, w_out2 = self.omega_in**2, self.omega_out**2
        if prof.kind == "constant":
            return np.full_like(np.asarray(t, dtype=float), w_in2)[()]
        if prof.kind == "jump":
            t = np.asarray(t, dtype=float)
            after = t > prof.t_jump if side < 0 else t >= prof.t_jump
            return np.where(after, w_out2, w_in2)[()]
        s = np.tanh((np.asarray(t, dtype=float) - prof.center) / prof.width)
        return (0.5 * (w_in2 + w_out2) + 0.5 * (w_out2 - w_in2) * s)[()]

    def force0(self, t):
        prof = self.force_profile
        t = np.asarray(t, dtype=float)
        if prof.kind == "zero":
            return np.zeros_like(t)[()]
        return (prof.amplitude * np.exp(-((t - prof.center) ** 2) / (2.0 * prof.width**2)))[()]

    def noise_window(self, t, i: int):
        """Indicator of [t_i, t_e) for noise channel ``i`` (1: frequency, 2: force)."""
        if i not in (1, 2):
            raise ValueError(f"noise channel must be 1 or 2, got {i}")
        t_on = self.t1 if i == 1 else self.t2
        t = np.asarray(t, dtype=float)
        return ((t >= t_on) & (t < self.te)).astype(float)[()]

    # -- time grid ----------------------------------------------------------

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    def step_index(self, t: float) -> int:
        """Index k with t_start + k*dt == t; raises if ``t`` is off the step grid."""
        k = (t - self.t_start) / self.dt
        if abs(k - round(k)) > _ALIGN_TOL * max(1.0, abs(k)):
            raise ConfigError(f"time {t!r} is not aligned to the step grid (t_start={self.t_start}, dt={self.dt})")
        return int(round(k))

    def time(self, k):
        return self.t_start + np.asarray(k) * self.dt

    @property
    def t_launch(self) -> float:
        """Switch-on of frequency noise; the log-amplitude integral starts here."""
        return self.t1

    @property
    def family(self) -> str:
        return self.omega_profile.kind

    @property
    def natural_length(self) -> float:
        return 1.0 / math.sqrt(min(self.omega_in, self.omega_out))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        prof, force = self.omega_profile, self.force_profile
        omega_section: dict[str, Any] = {"kind": prof.kind}
        if prof.kind == "jump":
            omega_section["t_jump"] = prof.t_jump
        elif prof.kind == "tanh":
            omega_section.update(center=prof.center, width=prof.width)
        force_section: dict[str, Any] = {"kind": force.kind}
        if force.kind == "gaussian":
            force_section.update(amplitude=force.amplitude, center=force.center, width=force.width)
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "oscillator": {"omega_in": self.omega_in, "omega_out": self.omega_out},
            "omega_profile": omega_section,
            "force_profile": force_section,
            "noise": {"eps1": self.eps1, "eps2": self.eps2, "t1": self.t1, "t2": self.t2, "te": self.te},
            "time": {"t_start": self.t_start, "t_end": self.t_end, "dt": self.dt},
            "grid": {"nodes": self.grid_nodes, "half_width": self.grid_half_width},
            "feynman_kac": {"launch_smear": self.launch_smear},
            "run": {"base_seed": self.base_seed},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScenarioConfig:
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

        def section(name: str, required: bool = True) -> dict[str, Any]:
            sec = data.get(name)
            if sec is None:
                if required:
                    raise ConfigError(f"missing section [{name}]")
                return {}
            if not isinstance(sec, dict):
                raise ConfigError(f"[{name}] must be a table")
            return sec

        def get(sec: dict[str, Any], sec_name: str, key: str, kind=float, default=None):
            if key not in sec:
                if default is None:
                    raise ConfigError(f"missing field {sec_name}.{key}")
                return default
            value = sec[key]
            try:
                if kind is int:
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise TypeError
                    return value
                if kind is str:
                    if not isinstance(value, str):
                        raise TypeError
                    return value
                if isinstance(value, bool):
                    raise TypeError
                return float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"field {sec_name}.{key} has invalid value {value!r}") from None

        osc = section("oscillator")
        om = section("omega_profile", required=False)
        fo = section("force_profile", required=False)
        noise = section("noise")
        tm = section("time")
        grid = section("grid", required=False)
        fk = section("feynman_kac", required=False)
        run = section("run", required=False)

        omega_profile = OmegaProfile(
            kind=get(om, "omega_profile", "kind", str, "constant"),
            t_jump=get(om, "omega_profile", "t_jump", float, 0.0),
            center=get(om, "omega_profile", "center", float, 0.0),
            width=get(om, "omega_profile", "width", float, 1.0),
        )
        force_profile = ForceProfile(
            kind=get(fo, "force_profile", "kind", str, "zero"),
            amplitude=get(fo, "force_profile", "amplitude", float, 0.0),
            center=get(fo, "force_profile", "center", float, 0.0),
            width=get(fo, "force_profile", "width", float, 1.0),
        )
        return cls(
            omega_in=get(osc, "oscillator", "omega_in"),
            omega_out=get(osc, "oscillator", "omega_out"),
            omega_profile=omega_profile,
            force_profile=force_profile,
            eps1=get(noise, "noise", "eps1"),
            eps2=get(noise, "noise", "eps2"),
            t1=get(noise, "noise", "t1"),
            t2=get(noise, "noise", "t2"),
            te=get(noise, "noise", "te"),
            t_start=get(tm, "time", "t_start"),
            t_end=get(tm, "time", "t_end"),
            dt=get(tm, "time", "dt"),
            base_seed=get(run, "run", "base_seed", int, 0),
            grid_nodes=get(grid, "grid", "nodes", int, 4096),
            grid_half_width=get(grid, "grid", "half_width", float, 12.0),
            launch_smear=get(fk, "feynman_kac", "launch_smear", float, 0.0),
            name=get(data, "top level", "name", str, "unnamed"),
        )

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def replace(self, **changes: Any) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    def deterministic(self) -> ScenarioConfig:
        """Same scenario with both noise channels switched off."""
        return self.replace(eps1=0.0, eps2=0.0)


def _validate(cfg: ScenarioConfig) -> None:
    if not cfg.omega_in > 0 or not cfg.omega_out > 0:
        raise ConfigError("omega_in and omega_out must be positive")
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive")
    if cfg.eps1 < 0 or cfg.eps2 < 0:
        raise ConfigError("noise powers eps1, eps2 must be nonnegative")
    if not (cfg.t_start < cfg.t1 <= cfg.t2 < cfg.te < cfg.t_end):
        raise ConfigError(
            "time ordering violated: need t_start < t1 <= t2 < te < t_end "
            f"(got {cfg.t_start}, {cfg.t1}, {cfg.t2}, {cfg.te}, {cfg.t_end})"
        )
    if cfg.omega_profile.kind not in OMEGA_KINDS:
        raise ConfigError(f"omega_profile.kind must be one of {OMEGA_KINDS}, got {cfg.omega_profile.kind!r}")
    if cfg.force_profile.kind not in FORCE_KINDS:
        raise ConfigError(f"force_profile.kind must be one of {FORCE_KINDS}, got {cfg.force_profile.kind!r}")
    if cfg.omega_profile.kind == "tanh" and not cfg.omega_profile.width > 0:
        raise ConfigError("omega_profile.width must be positive")
    if cfg.force_profile.kind == "gaussian" and not cfg.force_profile.width > 0:
        raise ConfigError("force_profile.width must be positive")
    if cfg.grid_nodes < 16 or cfg.grid_nodes & (cfg.grid_nodes - 1):
        raise ConfigError("grid.nodes must be a power of two >= 16")
    if not cfg.grid_half_width > 0:
        raise ConfigError("grid.half_width must be positive")
    if cfg.launch_smear < 0:
        raise ConfigError("feynman_kac.launch_smear must be nonnegative")
    if not 0 <= cfg.base_seed < 2**64:
        raise ConfigError("run.base_seed must be a 64-bit unsigned integer")

    n = (cfg.t_end - cfg.t_start) / cfg.dt
    if abs(n - round(n)) > _ALIGN_TOL * n:
        raise ConfigError("t_end - t_start must be an integer multiple of dt")
    for t in (cfg.t1, cfg.t2, cfg.te):
        cfg.step_index(t)
    if cfg.omega_profile.kind == "jump":
        if not cfg.t_start < cfg.omega_profile.t_jump < cfg.t_end:
            raise ConfigError("omega_profile.t_jump must lie inside (t_start, t_end)")
        cfg.step_index(cfg.omega_profile.t_jump)

    w0_start = math.sqrt(float(cfg.omega0_squared(cfg.t_start)))
    w0_end = math.sqrt(float(cfg.omega0_squared(cfg.t_end)))
    if abs(w0_start - cfg.omega_in) > _ASYMPTOTIC_RTOL * cfg.omega_in:
        raise ConfigError(f"Omega_0(t_start)={w0_start} has not settled to omega_in={cfg.omega_in}")
    if abs(w0_end - cfg.omega_out) > _ASYMPTOTIC_RTOL * cfg.omega_out:
        raise ConfigError(f"Omega_0(t_end)={w0_end} has not settled to omega_out={cfg.omega_out}")
    if cfg.force_profile.kind == "gaussian":
        peak = abs(cfg.force_profile.amplitude)
        bound = _ASYMPTOTIC_RTOL * max(1.0, peak)
        if abs(cfg.force0(cfg.t_start)) >= bound or abs(cfg.force0(cfg.t_end)) >= bound:
            raise ConfigError("F_0 has not decayed at the ends of the horizon")


# Module-level forms of the profile operations.


def omega0_squared(t, cfg: ScenarioConfig, side: int = 1):
    return cfg.omega0_squared(t, side)


def force0(t, cfg: ScenarioConfig):
    return cfg.force0(t)


def noise_window(t, i: int, cfg: ScenarioConfig):
    return cfg.noise_window(t, i)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a TOML scenario file. Parse errors carry line/column; missing fields are named."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return ScenarioConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.dumps(), encoding="utf-8")


# Shipped scenarios. All use t1 == t2.

_BUILTINS: dict[str, dict[str, Any]] = {
    "static": dict(
        omega_in=1.0, omega_out=1.0, t1=0.0, t2=0.0, te=5.0, t_start=-5.0, t_end=8.0, grid_nodes=512
    ),
    "forced": dict(
        omega_in=1.0,
        omega_out=1.0,
        force_profile=ForceProfile("gaussian", amplitude=0.5, center=0.0, width=1.0),
        t1=2.0, t2=2.0, te=6.0, t_start=-8.0, t_end=8.0, grid_nodes=512,
    ),
    "jump": dict(
        omega_in=1.0,
        omega_out=2.0,
        omega_profile=OmegaProfile("jump", t_jump=0.0),
        t1=1.0, t2=1.0, te=4.0, t_start=-4.0, t_end=6.0, grid_nodes=512,
    ),
    "tanh": dict(
        omega_in=1.0,
        omega_out=2.0,
        omega_profile=OmegaProfile("tanh", center=0.0, width=1.0),
        t1=0.0, t2=0.0, te=6.0, t_start=-10.0, t_end=10.0, grid_nodes=512,
    ),
    "noisy_static": dict(
        omega_in=1.0, omega_out=1.0, eps2=0.01, t1=0.0, t2=0.0, te=10.0, t_start=-2.0, t_end=12.0,
        grid_nodes=256, base_seed=20240611,
    ),
    "noisy_default": dict(
        omega_in=1.0,
        omega_out=1.5,
        omega_profile=OmegaProfile("tanh", center=0.0, width=1.0),
        eps1=0.01, eps2=0.01, t1=-2.0, t2=-2.0, te=6.0, t_start=-10.0, t_end=10.0,
        grid_nodes=512, base_seed=7,
    ),
    "noisy_forced": dict(
        omega_in=1.0,
        omega_out=1.5,
        omega_profile=OmegaProfile("tanh", center=0.0, width=1.0),
        force_profile=ForceProfile("gaussian", amplitude=0.5, center=-3.0, width=1.0),
        eps1=0.01, eps2=0.01, t1=-2.0, t2=-2.0, te=6.0, t_start=-10.0, t_end=10.0,
        grid_nodes=512, base_seed=11,
    ),
}


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)


def builtin(name: str, **overrides: Any) -> ScenarioConfig:
    try:
        params = dict(_BUILTINS[name])
    except KeyError:
        raise ConfigError(f"unknown builtin scenario {name!r}; choose from {builtin_names()}") from None
    params.update(overrides)
    params.setdefault("name", name)
    return ScenarioConfig(**params)
