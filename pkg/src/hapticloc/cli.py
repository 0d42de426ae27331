"""Command-line experiment runner.

    hapticloc run --scenario terrain_course --seed 7 --out out/
    hapticloc simulate --scenario wall_probe --seed 3 --out sim/
    hapticloc localize --events sim/events.csv --map sim/map.xyz --seed 3 --out loc/
    hapticloc metrics --estimate loc/estimate.csv --truth loc/ground_truth.csv --out m/
    hapticloc rasterize --cloud room.xyz --resolution 0.02 --out room.txt

Exit status: 0 on success, 2 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import filter as flt
from .config import ConfigError, ExperimentConfig, MapSource, validate_config
from .eventlog import EventLog, EventLogFormatError, read_event_log, write_event_log
from .maps import (
    ElevationMap,
    MapFormatError,
    PointCloudMap,
    load_elevation_map,
    load_point_cloud,
    rasterize,
    save_elevation_map,
    save_point_cloud,
)
from .metrics import (
    TrajectoryFormatError,
    ate,
    read_trajectory,
    write_error_trace,
    write_report_json,
    write_trajectory,
)
from .se3 import Pose
from .simulator import (
    GaitSpec,
    build_terrain,
    course_waypoints,
    default_probe_script,
    default_terrain_course,
    room_cloud,
    simulate_probing,
    simulate_walk,
)

log = logging.getLogger("hapticloc")

EXIT_OK = 0
EXIT_INPUT = 2

PARTICLE_HEADER = ("step", "particle_id", "x", "y", "z", "yaw", "weight", "parent")


class InputError(Exception):
    """Bad configuration or unreadable input; reported with exit status 2."""


# --- pipeline pieces ----------------------------------------------------------


def load_map(src: MapSource):
    if src.generated == "terrain_course":
        return build_terrain(default_terrain_course(), src.resolution)
    if src.generated == "room":
        return room_cloud()
    path = Path(src.file)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read map file {path}: {exc.strerror or exc}") from None
    kind = src.kind
    if kind == "auto":
        first = next((ln.split()[0] for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")), "")
        kind = "elevation" if first == "resolution" else "point_cloud"
    try:
        return load_elevation_map(text) if kind == "elevation" else load_point_cloud(text)
    except MapFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (simulator, filter) generators derived from one seed."""
    sim, filt = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(sim), np.random.default_rng(filt)


def make_events(cfg: ExperimentConfig, prior, rng: np.random.Generator) -> EventLog:
    try:
        if cfg.scenario == "terrain_course":
            if not isinstance(prior, ElevationMap):
                raise InputError("terrain_course needs an elevation map")
            t = cfg.terrain
            wps = course_waypoints(default_terrain_course(), t.loops, t.lateral, t.lead)
            return simulate_walk(prior, GaitSpec(), cfg.noise_spec(), wps, rng)
        if cfg.scenario == "wall_probe":
            if not isinstance(prior, PointCloudMap):
                raise InputError("wall_probe needs a point cloud map")
            p = cfg.probing
            script = default_probe_script(p.lateral_steps, p.lateral_step)
            start = Pose.from_xyz_rpy(*p.start, 0.0, 0.0, 0.0)
            return simulate_probing(prior, script, cfg.noise_spec(), p.initial_offset, rng, start=start)
        path = Path(cfg.replay.events)
        try:
            return read_event_log(path.read_text())
        except OSError as exc:
            raise InputError(f"cannot read event log {path}: {exc.strerror or exc}") from None
        except EventLogFormatError as exc:
            raise InputError(f"{path}: {exc}") from None
    except ValueError as exc:  # simulator preconditions, e.g. waypoints off the map
        raise InputError(str(exc)) from None


def segment_labels(cfg: ExperimentConfig, events: EventLog) -> list[str]:
    """On/off-course tags over the generated course, else the event type."""
    if cfg.map.generated == "terrain_course":
        spec = default_terrain_course()
        xy = np.array([e.gt_pose.position[:2] for e in events])
        return ["on_course" if m else "flat" for m in spec.on_course(xy[:, 0], xy[:, 1])]
    return [e.kind for e in events]


def _write(path: Path, text: str):
    path.write_text(text)


def localize(cfg: ExperimentConfig, events: EventLog, prior, rng: np.random.Generator, out: Path) -> dict:
    """Run the filter over ``events`` and write trajectories, dumps and metrics."""
    if len(events) < 1:
        raise InputError("event log is empty")
    fcfg = cfg.filter_config()
    counts = {"resampled": 0, "all_outlier": 0}
    dump_file = open(out / "particles.csv", "w", newline="") if cfg.dump_particles else None
    writer = csv.writer(dump_file, lineterminator="\n") if dump_file else None
    if writer:
        writer.writerow(PARTICLE_HEADER)

    def on_step(res: flt.StepResult):
        counts["resampled"] += res.resampled
        counts["all_outlier"] += res.all_outlier
        if writer:
            for row in res.dump.rows():
                writer.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:7]] + [row[7]])

    try:
        fs = flt.run(events.measured(), prior, fcfg, rng, on_step=on_step)
    finally:
        if dump_file:
            dump_file.close()

    ts = [e.timestamp for e in events]
    gt, odom = events.gt_poses(), events.odom_poses()
    gated = flt.gated_trajectory(fs)
    best = flt.best_trajectory(fs)
    _write(out / "estimate.csv", write_trajectory(gated.poses, ts, gated.modes))
    _write(out / "best_trajectory.csv", write_trajectory(best.poses, ts))
    _write(out / "ground_truth.csv", write_trajectory(gt, ts))
    _write(out / "odometry.csv", write_trajectory(odom, ts))

    labels = segment_labels(cfg, events)
    reports = {
        "haptic": ate(gated, gt, labels, ts),
        "odometry": ate(odom, gt, labels, ts),
        "best_trajectory": ate(best, gt, labels, ts),
    }
    _write(out / "error_trace.csv", write_error_trace(reports["haptic"]))
    _write(out / "odometry_error_trace.csv", write_error_trace(reports["odometry"]))
    doc = json.loads(write_report_json(reports))
    doc["run"] = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "events": len(events),
        "particles": fcfg.particle_count,
        "full_pose_steps": gated.modes[1:].count(flt.FULL),
        "z_only_steps": gated.modes[1:].count(flt.Z_ONLY),
        "resampled_steps": counts["resampled"],
        "all_outlier_steps": counts["all_outlier"],
        "ate_ratio": reports["haptic"].ate_mean / reports["odometry"].ate_mean if reports["odometry"].ate_mean > 0 else None,
    }
    _write(out / "metrics.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    _write(out / "config.resolved.toml", cfg.to_toml())
    return out


def run_experiment(cfg: ExperimentConfig) -> dict:
    out = _prepare_out(cfg)
    prior = load_map(cfg.map)
    sim_rng, filter_rng = rng_streams(cfg.seed)
    events = make_events(cfg, prior, sim_rng)
    _write(out / "events.csv", write_event_log(events))
    return localize(cfg, events, prior, filter_rng, out)


def simulate_only(cfg: ExperimentConfig) -> EventLog:
    if cfg.scenario == "replay":
        raise InputError("simulate needs the terrain_course or wall_probe scenario")
    out = _prepare_out(cfg)
    prior = load_map(cfg.map)
    events = make_events(cfg, prior, rng_streams(cfg.seed)[0])
    _write(out / "events.csv", write_event_log(events))
    ts = [e.timestamp for e in events]
    _write(out / "ground_truth.csv", write_trajectory(events.gt_poses(), ts))
    _write(out / "odometry.csv", write_trajectory(events.odom_poses(), ts))
    if isinstance(prior, ElevationMap):
        _write(out / "map.txt", save_elevation_map(prior))
    else:
        _write(out / "map.xyz", save_point_cloud(prior))
    return events


# --- argument handling ----------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser, scenario: bool = True):
    p.add_argument("--config", type=Path, help="TOML experiment config")
    if scenario:
        p.add_argument("--scenario", choices=("terrain_course", "wall_probe", "replay"))
    p.add_argument("--seed", type=int, help="64-bit seed; overrides the config")
    p.add_argument("--out", help="output directory; overrides the config")
    p.add_argument("--particles", type=int, help="particle count; overrides the config")
    p.add_argument("--dump-particles", action="store_true", default=None, help="write particles.csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hapticloc", description="Haptic particle-filter localization experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("run", help="simulate (or replay) and localize"))
    _add_run_flags(sub.add_parser("simulate", help="write an event log, trajectories and the map"))

    p = sub.add_parser("localize", help="event log + map -> estimates and metrics")
    _add_run_flags(p, scenario=False)
    p.add_argument("--events", required=True, help="event log CSV")
    p.add_argument("--map", required=True, help="elevation grid or point cloud file")
    p.add_argument("--map-kind", choices=("auto", "elevation", "point_cloud"), default="auto")

    p = sub.add_parser("metrics", help="trajectory CSVs -> metrics.json and error trace")
    p.add_argument("--estimate", required=True, type=Path)
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("rasterize", help="point cloud -> elevation grid (per-cell max)")
    p.add_argument("--cloud", required=True, type=Path)
    p.add_argument("--resolution", required=True, type=float)
    p.add_argument("--out", required=True, type=Path)
    return ap


def _config_from_args(args, extra: Optional[dict] = None) -> ExperimentConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    overrides = {
        "scenario": getattr(args, "scenario", None),
        "seed": args.seed,
        "output_dir": args.out,
        "particles": args.particles,
        "dump_particles": args.dump_particles,
    }
    overrides.update(extra or {})
    return validate_config(text, overrides)


def _cmd_metrics(args) -> int:
    try:
        ts, est, modes = read_trajectory(args.estimate.read_text())
        ts_gt, gt, _ = read_trajectory(args.truth.read_text())
    except OSError as exc:
        raise InputError(f"cannot read trajectory: {exc}") from None
    except TrajectoryFormatError as exc:
        raise InputError(str(exc)) from None
    if len(est) != len(gt) or not np.array_equal(ts, ts_gt):
        raise InputError("estimate and ground truth must have the same timestamps")
    report = ate(est, gt, timestamps=ts)
    args.out.mkdir(parents=True, exist_ok=True)
    _write(args.out / "metrics.json", write_report_json({"estimate": report}))
    _write(args.out / "error_trace.csv", write_error_trace(report))
    print(f"ate_mean={report.ate_mean:.4f} ate_rmse={report.ate_rmse:.4f}")
    return EXIT_OK


def _cmd_rasterize(args) -> int:
    if not args.resolution > 0:
        raise InputError("--resolution must be positive")
    try:
        cloud = load_point_cloud(args.cloud.read_text())
    except OSError as exc:
        raise InputError(f"cannot read cloud {args.cloud}: {exc.strerror or exc}") from None
    except MapFormatError as exc:
        raise InputError(f"{args.cloud}: {exc}") from None
    _write(args.out, save_elevation_map(rasterize(cloud, args.resolution)))
    return EXIT_OK


def _summary(doc: dict) -> str:
    h, o = doc["haptic"], doc["odometry"]
    return f"haptic ATE {h['ate_mean']:.4f} m, odometry ATE {o['ate_mean']:.4f} m over {doc['run']['events']} events"


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "rasterize":
            return _cmd_rasterize(args)
        if args.command == "localize":
            cfg = _config_from_args(
                args,
                {"scenario": "replay", "replay": {"events": args.events}, "map": {"file": args.map, "kind": args.map_kind}},
            )
            print(_summary(run_experiment(cfg)))
            return EXIT_OK
        cfg = _config_from_args(args)
        if args.command == "simulate":
            events = simulate_only(cfg)
            print(f"wrote {len(events)} events to {cfg.output_dir}")
            return EXIT_OK
        print(_summary(run_experiment(cfg)))
        return EXIT_OK
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
