"""Choosing the map from z(te) to the kernel variables by matching the weighted-path
route to the grid oracle on noise-free scenarios, and persisting that choice."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .amplitudes import CONVENTIONS, SUPPORTED_LEVELS, convention
from .scenario import SCHEMA_VERSION, ScenarioConfig, builtin

CALIBRATION_TOL = 1e-3
DEFAULT_FAMILY_SCENARIOS = ("static", "forced", "jump", "tanh")


class CalibrationError(RuntimeError):
    pass


@dataclass
class CalibrationRecord:
    convention: str
    families: list[str]
    scenarios: list[str]
    residuals: dict[str, dict[str, float]] = field(default_factory=dict)
    tolerance: float = CALIBRATION_TOL
    schema_version: int = SCHEMA_VERSION

    def covers(self, cfg: ScenarioConfig) -> bool:
        return cfg.family in self.families

    def require(self, cfg: ScenarioConfig) -> None:
        if not self.covers(cfg):
            raise CalibrationError(
                f"calibration record covers families {self.families}, not {cfg.family!r}; "
                f"run `noisyosc calibrate --scenario <{cfg.family} scenario>` first"
            )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> CalibrationRecord:
        path = Path(path)
        hint = f"delete it and rerun `noisyosc calibrate` to regenerate {path}"
        if not path.exists():
            raise CalibrationError(f"no calibration record at {path}; run `noisyosc calibrate` first")
        try:
            data = json.loads(path.read_text())
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CalibrationError(f"calibration record {path} is unreadable ({exc}); {hint}") from None
        if not isinstance(data, dict):
            raise CalibrationError(f"calibration record {path} is not a JSON object; {hint}")
        missing = [k for k in ("convention", "families", "scenarios", "residuals", "schema_version") if k not in data]
        if missing:
            raise CalibrationError(f"calibration record {path} lacks {', '.join(missing)}; {hint}")
        if data["schema_version"] != SCHEMA_VERSION:
            raise CalibrationError(f"calibration record {path} has schema {data['schema_version']!r}; {hint}")
        try:
            convention(data["convention"])
        except KeyError:
            raise CalibrationError(f"calibration record {path} names unknown convention {data['convention']!r}; {hint}") from None
        if not isinstance(data["families"], list) or not all(isinstance(f, str) for f in data["families"]):
            raise CalibrationError(f"calibration record {path} has malformed families; {hint}")
        tol = float(data.get("tolerance", CALIBRATION_TOL))
        chosen = data["residuals"].get(data["convention"]) if isinstance(data["residuals"], dict) else None
        if not isinstance(chosen, dict) or not chosen:
            raise CalibrationError(f"calibration record {path} has no residuals for its convention; {hint}")
        if any(not isinstance(v, (int, float)) or not (v <= tol) for v in chosen.values()):
            raise CalibrationError(f"calibration record {path} has residuals above {tol:g}; {hint}")
        return cls(
            convention=data["convention"],
            families=list(data["families"]),
            scenarios=list(data["scenarios"]),
            residuals={k: {kk: float(vv) for kk, vv in v.items()} for k, v in data["residuals"].items()},
            tolerance=tol,
            schema_version=int(data["schema_version"]),
        )


def reference_values(cfg: ScenarioConfig) -> dict[tuple[int, int], float]:
    """Noise-free oracle probabilities for every supported (n, m)."""
    from .estimators import oracle_estimates

    det = cfg.deterministic()
    out = {}
    for n in sorted({n for n, _ in SUPPORTED_LEVELS}):
        ms = [m for nn, m in SUPPORTED_LEVELS if nn == n]
        for m, est in oracle_estimates(n, ms, det, 1).items():
            out[(n, m)] = est.value
    return out


def convention_values(cfg: ScenarioConfig, name: str) -> dict[tuple[int, int], float]:
    """Weighted-path values on the noise-free limit, where a single path is exact."""
    from .estimators import feynman_kac_estimates

    det = cfg.deterministic()
    return {
        (n, m): est.value
        for n in sorted({n for n, _ in SUPPORTED_LEVELS})
        for m, est in feynman_kac_estimates(
            n, [m for nn, m in SUPPORTED_LEVELS if nn == n], det, 1, convention_name=name
        ).items()
    }


def calibrate(scenarios: list[ScenarioConfig] | None = None, tol: float = CALIBRATION_TOL) -> CalibrationRecord:
    """Return the first convention whose worst deviation from the oracle is below ``tol``
    on the noise-free limit of every given scenario.

    The shipped static, forced, jump and tanh scenarios are always included: without a
    displaced final state the candidate conventions cannot be told apart.
    """
    base = [builtin(name) for name in DEFAULT_FAMILY_SCENARIOS]
    extra = [cfg for cfg in scenarios or [] if cfg.name not in DEFAULT_FAMILY_SCENARIOS]
    scenarios = base + extra
    truth = {cfg.name: reference_values(cfg) for cfg in scenarios}
    residuals: dict[str, dict[str, float]] = {}
    for conv in CONVENTIONS:
        residuals[conv.name] = {}
        for cfg in scenarios:
            vals = convention_values(cfg, conv.name)
            residuals[conv.name][cfg.name] = max(abs(vals[k] - truth[cfg.name][k]) for k in vals)
    for conv in CONVENTIONS:
        if max(residuals[conv.name].values()) < tol:
            return CalibrationRecord(
                convention=conv.name,
                families=sorted({cfg.family for cfg in scenarios}),
                scenarios=[cfg.name for cfg in scenarios],
                residuals=residuals,
                tolerance=tol,
            )
    lines = [f"  {c}: " + ", ".join(f"{s}={r:.3g}" for s, r in res.items()) for c, res in residuals.items()]
    raise CalibrationError("no kernel convention reaches residual < %g:\n%s" % (tol, "\n".join(lines)))
