"""Trajectory error statistics against ground truth.

Errors are un-aligned: the initial pose is known, so estimate and truth share
a frame from the start and no registration is applied.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence

import numpy as np

from .se3 import Pose, wrap_angle

TRACE_HEADER = ("t", "ex", "ey", "ez", "eyaw")


@dataclass(frozen=True, eq=False)
class TrajectoryErrorReport:
    ate_mean: float
    ate_rmse: float
    t: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    eyaw: np.ndarray  # radians, wrapped to (-pi, pi]
    segments: dict[str, float] = field(default_factory=dict)

    @property
    def translation_error(self) -> np.ndarray:
        return np.sqrt(self.ex**2 + self.ey**2 + self.ez**2)

    def summary(self) -> dict:
        return {
            "ate_mean": self.ate_mean,
            "ate_rmse": self.ate_rmse,
            "steps": int(len(self.t)),
            "max_error": float(self.translation_error.max()),
            "final_error": [float(self.ex[-1]), float(self.ey[-1]), float(self.ez[-1])],
            "segments": dict(self.segments),
        }


def _poses(traj) -> list[Pose]:
    return list(traj.poses) if hasattr(traj, "poses") else list(traj)


def ate(
    est,
    gt: Sequence[Pose],
    labels: Optional[Sequence[str]] = None,
    timestamps: Optional[Sequence[float]] = None,
) -> TrajectoryErrorReport:
    """Per-step translation error of ``est`` (poses or a TrajectoryEstimate).

    ``labels`` tags every step with a segment name; segment means are reported
    for each distinct label.
    """
    est_poses, gt_poses = _poses(est), list(gt)
    n = len(gt_poses)
    if len(est_poses) != n:
        raise ValueError(f"length mismatch: {len(est_poses)} estimates vs {n} ground-truth poses")
    if n == 0:
        raise ValueError("empty trajectory")
    if labels is not None and len(labels) != n:
        raise ValueError("labels must match the trajectory length")
    t = np.arange(n, dtype=float) if timestamps is None else np.asarray(timestamps, dtype=float)
    if t.shape != (n,):
        raise ValueError("timestamps must match the trajectory length")

    e = np.array([p.position for p in est_poses]) - np.array([p.position for p in gt_poses])
    eyaw = np.array([wrap_angle(a.yaw - b.yaw) for a, b in zip(est_poses, gt_poses)])
    d = np.sqrt(np.sum(e * e, axis=1))
    segments = {}
    if labels is not None:
        lab = np.asarray(labels)
        for name in sorted(set(labels)):
            segments[str(name)] = float(d[lab == name].mean())
    return TrajectoryErrorReport(
        ate_mean=float(d.mean()),
        ate_rmse=float(math.sqrt(np.mean(d * d))),
        t=t,
        ex=e[:, 0],
        ey=e[:, 1],
        ez=e[:, 2],
        eyaw=eyaw,
        segments=segments,
    )


def write_report_json(reports: dict[str, TrajectoryErrorReport], dest: Optional[IO[str]] = None) -> str:
    """JSON document with one summary per named trajectory."""
    text = json.dumps({k: r.summary() for k, r in reports.items()}, indent=2, sort_keys=True) + "\n"
    if dest is not None:
        dest.write(text)
    return text


def write_error_trace(report: TrajectoryErrorReport, dest: Optional[IO[str]] = None) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for row in zip(report.t, report.ex, report.ey, report.ez, report.eyaw):
        w.writerow([repr(float(v)) for v in row])
    text = out.getvalue()
    if dest is not None:
        dest.write(text)
    return text


# --- trajectory files ---------------------------------------------------------

TRAJECTORY_HEADER = ("t", "x", "y", "z", "qw", "qx", "qy", "qz")


class TrajectoryFormatError(ValueError):
    pass


def write_trajectory(
    poses: Sequence[Pose],
    timestamps: Sequence[float],
    modes: Optional[Sequence[str]] = None,
    dest: Optional[IO[str]] = None,
) -> str:
    """CSV with ``t,x,y,z,qw,qx,qy,qz`` and an optional trailing ``mode``."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER + (("mode",) if modes is not None else ()))
    for i, (t, p) in enumerate(zip(timestamps, poses)):
        row = [repr(float(t))] + [repr(float(v)) for v in (*p.position, *p.quaternion)]
        if modes is not None:
            row.append(modes[i])
        w.writerow(row)
    text = out.getvalue()
    if dest is not None:
        dest.write(text)
    return text


def read_trajectory(source) -> tuple[np.ndarray, list[Pose], Optional[list[str]]]:
    """Returns (timestamps, poses, modes or None)."""
    text = source if isinstance(source, str) else source.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0][:8]) != TRAJECTORY_HEADER or len(rows[0]) not in (8, 9):
        raise TrajectoryFormatError("line 1: expected header " + ",".join(TRAJECTORY_HEADER) + "[,mode]")
    has_mode = len(rows[0]) == 9
    ts, poses, modes = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(rows[0]):
            raise TrajectoryFormatError(f"line {lineno}: expected {len(rows[0])} columns, got {len(row)}")
        try:
            v = [float(x) for x in row[:8]]
            poses.append(Pose(v[1:4], v[4:8]))
        except ValueError as exc:
            raise TrajectoryFormatError(f"line {lineno}: {exc}") from None
        ts.append(v[0])
        if has_mode:
            modes.append(row[8])
    return np.array(ts), poses, (modes if has_mode else None)
