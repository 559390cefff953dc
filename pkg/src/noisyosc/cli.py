"""Command line runner: ``noisyosc run | calibrate | report | dump-scenario``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .amplitudes import SUPPORTED_LEVELS, UnsupportedLevelError
from .calibration import CalibrationError, CalibrationRecord, calibrate
from .estimators import (
    METHODS,
    TransitionEstimate,
    cross_validate,
    feynman_kac_estimates,
    functional_estimates,
    oracle_estimates,
    stationarity_check,
)
from .noise import NoiseBatch
from .oracle import NormDriftError, WaveGrid, evolve, initial_wave, write_snapshot
from .reference import AsymptoticFitError
from .scenario import SCHEMA_VERSION, ConfigError, ScenarioConfig, builtin, builtin_names, load_config
from .trajectory import Dense, DivergenceError, integrate_batch

log = logging.getLogger("noisyosc")

EXIT_OK, EXIT_CROSSCHECK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_SAMPLES = {"oracle": 200, "functional": 10_000, "feynman_kac": 10_000}
WNM_COLUMNS = ("n", "m", "method", "value", "stderr", "samples")


@dataclass
class RunManifest:
    scenario: str
    routes: list[str]
    levels: list[tuple[int, int]]
    samples: dict[str, int]
    workers: int = 1
    out: Path = Path("out")
    calibration: Path | None = None
    seed: int | None = None
    strict: bool = False
    emit_trajectories: int = 0
    emit_snapshots: list[float] = field(default_factory=list)
    stationarity: bool = False

    def validate(self) -> None:
        for r in self.routes:
            if r not in METHODS:
                raise ConfigError(f"unknown route {r!r}; choose from {', '.join(METHODS)}")
        for n, m in self.levels:
            if n < 0 or m < 0:
                raise ConfigError(f"levels must be nonnegative, got ({n}, {m})")
            if "feynman_kac" in self.routes and (n, m) not in SUPPORTED_LEVELS:
                raise ConfigError(f"route feynman_kac supports (n, m) in {list(SUPPORTED_LEVELS)}, not ({n}, {m})")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")
        for route, count in self.samples.items():
            if count < 2:
                raise ConfigError(f"--samples for {route} must be >= 2")
        self.out.mkdir(parents=True, exist_ok=True)


def resolve_scenario(spec: str) -> ScenarioConfig:
    """A TOML path, or the name of a builtin scenario."""
    path = Path(spec)
    if path.exists():
        return load_config(path)
    if spec in builtin_names():
        return builtin(spec)
    raise ConfigError(f"scenario {spec!r} is neither a file nor a builtin ({', '.join(builtin_names())})")


def parse_levels(items: list[str] | None) -> list[tuple[int, int]]:
    if not items:
        return [(0, 0), (0, 1)]
    out = []
    for item in items:
        for pair in item.split(";"):
            try:
                n, m = (int(v) for v in pair.split(","))
            except ValueError:
                raise ConfigError(f"--nm expects 'n,m', got {pair!r}") from None
            out.append((n, m))
    return out


def parse_samples(text: str | None, routes: list[str]) -> dict[str, int]:
    samples = {r: DEFAULT_SAMPLES[r] for r in routes}
    if not text:
        return samples
    for part in text.split(","):
        key, sep, value = part.partition("=")
        try:
            if sep:
                samples[key.strip()] = int(value)
            else:
                samples = {r: int(key) for r in routes}
        except ValueError:
            raise ConfigError(f"--samples expects N or route=N[,route=N], got {text!r}") from None
    return samples


# -- artifact writers / readers -----------------------------------------------


def write_wnm(path: Path, estimates: list[TransitionEstimate]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WNM_COLUMNS)
        for e in estimates:
            w.writerow([e.n, e.m, e.method, f"{e.value:.17g}", f"{e.stderr:.17g}", e.samples])


def read_wnm(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for r in rows:
        r.update(n=int(r["n"]), m=int(r["m"]), value=float(r["value"]), stderr=float(r["stderr"]), samples=int(r["samples"]))
    return rows


def write_trajectory(path: Path, dense: Dense, column: int = 0) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(Dense.COLUMNS)
        for t, row in zip(dense.t, dense.data[:, column]):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def read_trajectory(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)


def read_report(path: Path) -> dict:
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: unsupported report schema {data.get('schema_version')!r}")
    return data


# -- subcommands --------------------------------------------------------------


def _load_calibration(man: RunManifest, cfg: ScenarioConfig) -> CalibrationRecord:
    path = man.calibration or man.out / "calibration.json"
    record = CalibrationRecord.load(path)
    record.require(cfg)
    return record


def execute(man: RunManifest) -> int:
    man.validate()
    cfg = resolve_scenario(man.scenario)
    if man.seed is not None:
        cfg = cfg.replace(base_seed=man.seed)
    record = _load_calibration(man, cfg) if "feynman_kac" in man.routes else None
    started = time.perf_counter()

    by_n: dict[int, list[int]] = {}
    for n, m in man.levels:
        by_n.setdefault(n, []).append(m)
    estimates: list[TransitionEstimate] = []
    for route in man.routes:
        N = man.samples[route]
        for n, ms in sorted(by_n.items()):
            log.info("route %s, n=%d, m=%s, N=%d", route, n, ms, N)
            if route == "oracle":
                res = oracle_estimates(n, ms, cfg, N, man.workers)
            elif route == "functional":
                res = functional_estimates(n, ms, cfg, N, man.workers)
            else:
                res = feynman_kac_estimates(n, ms, cfg, N, man.workers, calibration=record)
            estimates.extend(res[m] for m in ms)

    comparisons = cross_validate(estimates) if len(man.routes) > 1 else None
    stationarity = []
    if man.stationarity:
        route = "functional" if "functional" in man.routes else man.routes[0]
        for n, m in man.levels:
            stationarity.append(
                stationarity_check(n, m, cfg, man.samples[route], route, man.workers, record).to_dict()
            )

    write_wnm(man.out / "wnm.csv", estimates)
    if man.emit_trajectories:
        final, dense = integrate_batch(cfg, NoiseBatch(cfg, range(man.emit_trajectories)), record_every=10)
        for i in range(man.emit_trajectories):
            write_trajectory(man.out / f"trajectory_{i:05d}.csv", dense, i)
    if man.emit_snapshots:
        steps = [cfg.step_index(t) for t in man.emit_snapshots]
        grid = WaveGrid.for_scenario(cfg)
        for n in sorted(by_n):
            _, snaps = evolve(initial_wave(n, cfg, grid), cfg, NoiseBatch(cfg, [0]), snapshot_steps=steps)
            for t, k in zip(man.emit_snapshots, steps):
                write_snapshot(man.out / f"snapshot_n{n}_t{t:g}.csv", grid, snaps[k][0])

    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "scenario": cfg.to_dict(),
        "fingerprint": cfg.fingerprint(),
        "routes": man.routes,
        "workers": man.workers,
        "calibration": record.convention if record else None,
        "estimates": [e.to_dict() for e in estimates],
        "cross_validation": comparisons.to_dict() if comparisons else None,
        "stationarity": stationarity,
        "divergent": {e.method: e.divergent for e in estimates},
        "seconds": time.perf_counter() - started,
    }
    (man.out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(format_report(report))
    if man.strict and comparisons is not None and not comparisons.passed:
        print("cross-validation failed", file=sys.stderr)
        return EXIT_CROSSCHECK
    return EXIT_OK


def format_report(report: dict) -> str:
    lines = [f"scenario {report['scenario']['name']} ({report['fingerprint']})"]
    for e in report["estimates"]:
        lines.append(f"  W[{e['n']},{e['m']}] {e['method']:<12} {e['value']:.6f} +- {e['stderr']:.2e}  (N={e['samples']})")
    cv = report.get("cross_validation")
    if cv:
        for p in cv["pairs"]:
            flag = "ok" if p["passed"] else "FAIL"
            lines.append(f"  W[{p['n']},{p['m']}] {p['a']} vs {p['b']}: z={p['z']:.2f} {flag}")
    for s in report.get("stationarity") or []:
        b = s["base"]
        lines.append(
            f"  W[{b['n']},{b['m']}] doubled noise window: z={s['z']:.2f} "
            + ("stationary" if s["stationary"] else "NOT stationary: increase te - t1")
        )
    return "\n".join(lines)


def cmd_calibrate(args) -> int:
    scenarios = [resolve_scenario(spec) for spec in args.scenario or []]
    try:
        record = calibrate(scenarios)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    record.save(out)
    print(f"convention {record.convention} for families {', '.join(record.families)} -> {out}")
    for name, res in record.residuals[record.convention].items():
        print(f"  {name}: residual {res:.2e}")
    return EXIT_OK


def cmd_report(args) -> int:
    print(format_report(read_report(Path(args.path))))
    return EXIT_OK


def cmd_dump(args) -> int:
    text = builtin(args.name).dumps()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="noisyosc", description="Transition probabilities of a noisy quantum oscillator.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="estimate W_nm by one or more routes")
    run.add_argument("--scenario", required=True, help="TOML file or builtin name")
    run.add_argument("--routes", default=",".join(METHODS), help="comma list of oracle, functional, feynman_kac")
    run.add_argument("--nm", action="append", help="level pair 'n,m' (repeatable)")
    run.add_argument("--samples", help="N for every route, or route=N,...")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--seed", type=int, help="override the scenario's base seed")
    run.add_argument("--strict", action="store_true", help="nonzero exit if any cross-route z-score >= 3")
    run.add_argument("--emit-trajectories", type=int, default=0, metavar="K", help="dump the first K trajectories")
    run.add_argument("--emit-snapshots", default="", metavar="T1,T2", help="dump oracle wave functions at these times")
    run.add_argument("--stationarity", action="store_true", help="also rerun with the noise window doubled")
    run.add_argument("--out", default="out")
    run.add_argument("--calibration", help="calibration record (default OUT/calibration.json)")

    cal = sub.add_parser("calibrate", help="fix the kernel convention against the oracle")
    cal.add_argument("--scenario", action="append", help="extra scenario whose noise-free limit is included")
    cal.add_argument("--out", default="out/calibration.json")

    rep = sub.add_parser("report", help="print a saved report")
    rep.add_argument("path")

    dump = sub.add_parser("dump-scenario", help="write a builtin scenario as TOML")
    dump.add_argument("name", choices=builtin_names())
    dump.add_argument("--out")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            routes = [r.strip() for r in args.routes.split(",") if r.strip()]
            man = RunManifest(
                scenario=args.scenario,
                routes=routes,
                levels=parse_levels(args.nm),
                samples=parse_samples(args.samples, routes),
                workers=args.workers,
                out=Path(args.out),
                calibration=Path(args.calibration) if args.calibration else None,
                seed=args.seed,
                strict=args.strict,
                emit_trajectories=args.emit_trajectories,
                emit_snapshots=[float(t) for t in args.emit_snapshots.split(",") if t.strip()],
                stationarity=args.stationarity,
            )
            return execute(man)
        if args.command == "calibrate":
            return cmd_calibrate(args)
        if args.command == "report":
            return cmd_report(args)
        return cmd_dump(args)
    except (ConfigError, UnsupportedLevelError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibrationError, DivergenceError, NormDriftError, AsymptoticFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
