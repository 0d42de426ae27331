"""Event logs: one record per filter trigger, with ground truth and odometry.

CSV columns, one row per event::

    k, type, gt_x gt_y gt_z gt_qw gt_qx gt_qy gt_qz,
    odom_x ... odom_qz, cov_x cov_y cov_z cov_roll cov_pitch cov_yaw,
    LF_x LF_y LF_z RF_x ... RH_z, c_LF c_RF c_LH c_RH

Floats are written with ``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import IO, Iterable, Sequence, Union

import numpy as np

from .filter import FOOT_NAMES, QuadrupedState
from .se3 import Covariance6, Pose

EVENT_KINDS = ("walk", "probe")
# nominal duration of one support phase; timestamps are k * PHASE_PERIOD
PHASE_PERIOD = 1.0

_POSE_COLS = ("x", "y", "z", "qw", "qx", "qy", "qz")
HEADER = (
    ["k", "type"]
    + [f"gt_{c}" for c in _POSE_COLS]
    + [f"odom_{c}" for c in _POSE_COLS]
    + [f"cov_{c}" for c in ("x", "y", "z", "roll", "pitch", "yaw")]
    + [f"{f}_{a}" for f in FOOT_NAMES for a in "xyz"]
    + [f"c_{f}" for f in FOOT_NAMES]
)


class EventLogFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Event:
    k: int
    kind: str
    gt_pose: Pose
    odom_pose: Pose
    cov_diag: np.ndarray
    foot_in_base: np.ndarray
    contact: tuple[bool, bool, bool, bool]

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event type {self.kind!r}")
        cov = np.array(self.cov_diag, dtype=float).reshape(6)
        feet = np.array(self.foot_in_base, dtype=float).reshape(4, 3)
        cov.setflags(write=False)
        feet.setflags(write=False)
        object.__setattr__(self, "cov_diag", cov)
        object.__setattr__(self, "foot_in_base", feet)
        object.__setattr__(self, "contact", tuple(bool(c) for c in self.contact))

    @property
    def timestamp(self) -> float:
        return self.k * PHASE_PERIOD

    def measured(self) -> QuadrupedState:
        """What the robot reports: odometry pose and covariance, kinematics."""
        return QuadrupedState(self.odom_pose, Covariance6.diag(self.cov_diag), self.foot_in_base, self.contact, self.timestamp)

    def truth(self) -> QuadrupedState:
        return QuadrupedState(self.gt_pose, Covariance6.zeros(), self.foot_in_base, self.contact, self.timestamp)


class EventLog(tuple):
    """Immutable sequence of :class:`Event`."""

    def __new__(cls, events: Iterable[Event] = ()):
        return super().__new__(cls, tuple(events))

    def measured(self) -> list[QuadrupedState]:
        return [e.measured() for e in self]

    def gt_poses(self) -> list[Pose]:
        return [e.gt_pose for e in self]

    def odom_poses(self) -> list[Pose]:
        return [e.odom_pose for e in self]


def _pose_fields(p: Pose) -> list[str]:
    return [repr(float(v)) for v in (*p.position, *p.quaternion)]


def write_event_log(log: Sequence[Event], dest: IO[str] | None = None) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(HEADER)
    for e in log:
        w.writerow(
            [str(e.k), e.kind]
            + _pose_fields(e.gt_pose)
            + _pose_fields(e.odom_pose)
            + [repr(float(v)) for v in e.cov_diag]
            + [repr(float(v)) for v in e.foot_in_base.ravel()]
            + ["1" if c else "0" for c in e.contact]
        )
    text = out.getvalue()
    if dest is not None:
        dest.write(text)
    return text


def read_event_log(source: Union[str, IO[str]]) -> EventLog:
    text = source if isinstance(source, str) else source.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != HEADER:
        raise EventLogFormatError("line 1: missing or unexpected header")
    events = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(HEADER):
            raise EventLogFormatError(f"line {lineno}: expected {len(HEADER)} columns, got {len(row)}")
        try:
            k = int(row[0])
            vals = [float(v) for v in row[2:-4]]
            contact = [int(v) for v in row[-4:]]
            if any(c not in (0, 1) for c in contact):
                raise ValueError("contact flags must be 0 or 1")
            events.append(
                Event(
                    k,
                    row[1],
                    Pose(vals[0:3], vals[3:7]),
                    Pose(vals[7:10], vals[10:14]),
                    vals[14:20],
                    vals[20:32],
                    tuple(bool(c) for c in contact),
                )
            )
        except ValueError as exc:
            raise EventLogFormatError(f"line {lineno}: {exc}") from None
    return EventLog(events)
