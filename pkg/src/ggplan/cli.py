"""Command-line pipeline: sample, fit, check, plan, compare.

One YAML run config carries a section per subsystem (``sampling``, ``fit``,
``track``, ``obstacles``, ``planner``, ``bicycle``) next to ``vehicle``,
``seed`` and ``out``; command-line flags override the file.  All numeric
output is locale-independent with 9 significant digits, and equal seeds
reproduce every non-timing output byte for byte.

Exit codes: 0 ok, 1 infeasible or planner failure, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .dynamics import BodyState
from .envelope import (EnvelopeModel, FitConfig, FitError, build_envelope,
                       convex_hull_2d, hull_area)
from .integrator import ProjectionError, is_feasible
from .params import ConfigError, VehicleParams, berline_params, load_vehicle_params
from .planner import (BicycleConfig, PlanError, PlannerConfig, metrics,
                      run_closed_loop)
from .sampler import SamplingConfig, feasible_set, read_samples, write_samples
from .track import Obstacle, Track, TrackError, circular_track, stadium_track, \
    straight_track

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


# ---------------------------------------------------------------------------
# run configuration


def _load_raw_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"run config not found: {p}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {p}: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"run config {p} must be a mapping")
    return raw


def _from_mapping(cls, raw: dict | None, what: str):
    raw = dict(raw or {})
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what} config: {exc}") from None


def _sampling_config(raw: dict, seed_flag: int | None) -> SamplingConfig:
    section = dict(raw.get("sampling") or {})
    for key in ("v_x0", "v_y0", "mu"):
        if key in section:
            section[key] = tuple(np.atleast_1d(section[key]).astype(float))
    if "seed" not in section and "seed" in raw:
        section["seed"] = raw["seed"]
    if seed_flag is not None:
        section["seed"] = seed_flag
    return _from_mapping(SamplingConfig, section, "sampling")


def _fit_config(raw: dict) -> FitConfig:
    section = dict(raw.get("fit") or {})
    if "ax_quantiles" in section:
        section["ax_quantiles"] = tuple(section["ax_quantiles"])
    return _from_mapping(FitConfig, section, "fit")


def _planner_config(raw: dict) -> tuple[PlannerConfig, int]:
    section = dict(raw.get("planner") or {})
    ticks = section.pop("ticks", 400)
    if not isinstance(ticks, int) or ticks < 1:
        raise ConfigError("planner ticks must be a positive integer")
    return _from_mapping(PlannerConfig, section, "planner"), ticks


def _vehicle(raw: dict) -> VehicleParams:
    spec = raw.get("vehicle", "builtin")
    if spec in (None, "builtin"):
        return berline_params()
    return load_vehicle_params(spec)


_TRACK_BUILDERS = {"straight": straight_track, "circle": circular_track,
                   "stadium": stadium_track}


def _build_track(raw: dict) -> Track:
    section = dict(raw.get("track") or {"kind": "stadium"})
    kind = section.pop("kind", "stadium")
    if kind == "file":
        path = section.pop("path", None)
        if path is None or section:
            raise ConfigError("track kind 'file' takes exactly one key: path")
        try:
            return Track.load(path)
        except FileNotFoundError:
            raise ConfigError(f"track file not found: {path}") from None
    builder = _TRACK_BUILDERS.get(kind)
    if builder is None:
        raise ConfigError(f"unknown track kind {kind!r} "
                          f"(expected {sorted(_TRACK_BUILDERS)} or 'file')")
    try:
        return builder(**section)
    except TypeError as exc:
        raise ConfigError(f"bad track config: {exc}") from None


def _build_obstacles(raw: dict) -> list[Obstacle]:
    entries = raw.get("obstacles") or []
    if not isinstance(entries, list):
        raise ConfigError("'obstacles' must be a list of {center, radius}")
    obstacles = []
    for i, entry in enumerate(entries):
        try:
            center = np.asarray(entry["center"], dtype=float).reshape(2)
            obstacles.append(Obstacle(center=center,
                                      radius=float(entry["radius"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad obstacle entry {i}: {exc}") from None
    return obstacles


def _out_dir(raw: dict, args: argparse.Namespace) -> Path:
    out = Path(args.out if args.out is not None else raw.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_envelope(path: str | Path) -> EnvelopeModel:
    try:
        return EnvelopeModel.load(path)
    except FitError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def _sample_name(v_x0: float, v_y0: float, mu: float) -> str:
    return f"samples_vx{_fmt(v_x0)}_vy{_fmt(v_y0)}_mu{_fmt(mu)}.csv"


def _cmd_sample(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    params = _vehicle(raw)
    cfg = _sampling_config(raw, args.seed)
    out = _out_dir(raw, args)
    grid = list(itertools.product(cfg.v_x0, cfg.v_y0, cfg.mu))

    def one(job):
        i, (v_x0, v_y0, mu) = job
        # Offset seeds keep grid points decorrelated but reproducible.
        point_cfg = dataclasses.replace(cfg, seed=cfg.seed + i)
        point_params = dataclasses.replace(params, mu=mu)
        xi0 = BodyState.rolling(v_x0, v_y0, point_params)
        return feasible_set(xi0, point_cfg, point_params)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(one, enumerate(grid)))
    else:
        results = [one(job) for job in enumerate(grid)]

    for (v_x0, v_y0, mu), result in zip(grid, results):
        path = out / _sample_name(v_x0, v_y0, mu)
        write_samples(path, result)
        acc = result.accelerations
        area = hull_area(convex_hull_2d(acc[:, :2])) if len(acc) >= 3 else 0.0
        print(f"v_x0={_fmt(v_x0)} v_y0={_fmt(v_y0)} mu={_fmt(mu)}: "
              f"{len(result)} samples, hull area {_fmt(area)} -> {path}")
    return EXIT_OK


def _expand_sample_paths(entries: list[str]) -> list[Path]:
    paths = []
    for entry in entries:
        p = Path(entry)
        if p.is_dir():
            found = sorted(p.glob("*.csv"))
            if not found:
                raise ConfigError(f"no CSV files in {p}")
            paths.extend(found)
        elif p.exists():
            paths.append(p)
        else:
            raise ConfigError(f"sample file not found: {p}")
    return paths


def _cmd_fit(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    fit_cfg = _fit_config(raw)
    out = _out_dir(raw, args)
    try:
        tables = [read_samples(p) for p in _expand_sample_paths(args.samples)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    pooled = np.vstack(tables)
    per_speed = {float(v): pooled[pooled[:, 0] == v, 6:9]
                 for v in np.unique(pooled[:, 0])}
    try:
        model = build_envelope(per_speed, fit_cfg)
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = out / "envelope.json"
    model.save(path)
    print(f"envelope: alpha={_fmt(model.alpha)} beta={_fmt(model.beta)} "
          f"ax(0)=[{_fmt(model.ax_min(0.0))}, {_fmt(model.ax_max(0.0))}] "
          f"-> {path}")
    return EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    env = _load_envelope(args.envelope)
    accel = np.array(args.accel, dtype=float)
    report = is_feasible(env, accel, args.speed)
    if report:
        print("feasible")
        return EXIT_OK
    print(f"infeasible at v_x={_fmt(args.speed)}:")
    for name, slack in sorted(report.slacks.items(), key=lambda kv: kv[1]):
        if slack < 0.0:
            print(f"  {name} violated by {_fmt(-slack)}")
    return EXIT_INFEASIBLE


def _run_and_log(model: str, raw: dict, args: argparse.Namespace,
                 out: Path) -> tuple:
    track = _build_track(raw)
    obstacles = _build_obstacles(raw)
    plan_cfg, ticks = _planner_config(raw)
    bike_cfg = _from_mapping(BicycleConfig, raw.get("bicycle"), "bicycle")
    env = _load_envelope(args.envelope if args.envelope is not None
                         else out / "envelope.json")
    params = _vehicle(raw)
    log = run_closed_loop(model, track, obstacles, env, params, ticks=ticks,
                          cfg=plan_cfg, bike_cfg=bike_cfg)
    path = out / f"plan_{model}.csv"
    log.save(path)
    return log, metrics(log, track), path


def _metrics_row(model: str, log, m) -> str:
    lap = _fmt(log.lap_time) if log.lap_time is not None else "none"
    return (f"{model:<10} {_fmt(m.avg_solve_ms):>14} {_fmt(m.rms_lat_err):>14} "
            f"{_fmt(m.max_lat_err):>14} {lap:>10} {log.failures:>9}")


_METRICS_HEADER = (f"{'model':<10} {'avg_solve_ms':>14} {'rms_lat_m':>14} "
                   f"{'max_lat_m':>14} {'lap_s':>10} {'failures':>9}")


def _cmd_plan(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    out = _out_dir(raw, args)
    log, m, path = _run_and_log(args.model, raw, args, out)
    print(_METRICS_HEADER)
    print(_metrics_row(args.model, log, m))
    print(f"log -> {path}")
    return EXIT_OK if log.failures == 0 else EXIT_INFEASIBLE


def _cmd_compare(args: argparse.Namespace) -> int:
    raw = _load_raw_config(args.config)
    out = _out_dir(raw, args)
    track = _build_track(raw)

    rows = []
    profiles = {}
    failures = 0
    for model in ("envelope", "bicycle"):
        log, m, _ = _run_and_log(model, raw, args, out)
        rows.append(_metrics_row(model, log, m))
        profiles[model] = m.speed_by_arc
        failures += log.failures

    n = min(len(profiles["envelope"]), len(profiles["bicycle"]))
    table = np.column_stack([profiles["envelope"][:n, 0],
                             profiles["envelope"][:n, 1],
                             profiles["bicycle"][:n, 1]])
    speeds_path = out / "speeds.csv"
    np.savetxt(speeds_path, table, fmt="%.9g", delimiter=",",
               header="s,v_envelope,v_bicycle", comments="")

    print(_METRICS_HEADER)
    for row in rows:
        print(row)
    print(f"speed profiles -> {speeds_path}")
    return EXIT_OK if failures == 0 else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ggplan",
        description="Sample reachable accelerations, fit the envelope, "
                    "and plan over it.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sampling")

    p = sub.add_parser("sample", help="draw reachable-acceleration samples "
                                      "over the initial-condition grid")
    common(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", help="fit an envelope from sample CSVs")
    common(p)
    p.add_argument("samples", nargs="+",
                   help="sample CSV files or directories of them")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("check", help="test one acceleration against a "
                                     "fitted envelope")
    common(p)
    p.add_argument("--envelope", required=True, help="envelope JSON path")
    p.add_argument("--speed", type=float, required=True,
                   help="longitudinal speed v_x, m/s")
    p.add_argument("accel", type=float, nargs=3,
                   metavar=("A_X", "A_Y", "A_PSI"),
                   help="acceleration triple to test")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("plan", help="closed-loop run of one planner model")
    common(p)
    p.add_argument("--envelope", help="envelope JSON (default <out>/envelope.json)")
    p.add_argument("--model", choices=("envelope", "bicycle"),
                   default="envelope")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("compare", help="run both planner models and tabulate")
    common(p)
    p.add_argument("--envelope", help="envelope JSON (default <out>/envelope.json)")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TrackError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ProjectionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
