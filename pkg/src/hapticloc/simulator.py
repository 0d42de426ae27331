"""Deterministic scenario generation: terrain course walks and wall probing.

Kinematics are deliberately simple. Feet sit at nominal base-frame offsets
projected onto the terrain; one foot is re-placed per support phase. The base
height and roll/pitch follow a plane fitted through the four contacts.
Odometry integrates the true increments plus per-step Gaussian noise and a
deterministic bias on z and yaw; roll and pitch are copied from ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .eventlog import Event, EventLog
from .maps import ElevationMap, PointCloudMap
from .se3 import Covariance6, Pose, euler_to_quat, wrap_angle

# --- terrain ------------------------------------------------------------------


@dataclass(frozen=True)
class Flat:
    length: float
    height: float = 0.0  # absolute level of this segment


@dataclass(frozen=True)
class Ramp:
    length: float
    grade_deg: float  # positive climbs along +x


@dataclass(frozen=True)
class Chevron:
    """V-shaped raised strips on the current level, apex pointing along +x."""

    tooth_height: float
    tooth_pitch: float
    count: int
    arm_slope: float = 1.0

    @property
    def length(self) -> float:
        return self.tooth_pitch * self.count


@dataclass(frozen=True)
class BlockField:
    """Square blocks on the current level. ``heights[row][col]``: rows run
    along y from the course's low-y edge (tiled if short), cols along x."""

    cell_size: float
    heights: tuple[tuple[float, ...], ...]

    @property
    def length(self) -> float:
        return self.cell_size * len(self.heights[0])


Segment = Union[Flat, Ramp, Chevron, BlockField]


@dataclass(frozen=True)
class TerrainSpec:
    segments: tuple[Segment, ...]
    width: float = 2.0
    start_x: float = 0.0
    center_y: float = 0.0
    margin: float = 2.0
    # explicit segment start positions; None means back-to-back
    starts: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("terrain needs at least one segment")
        if self.width <= 0:
            raise ValueError("course width must be positive")
        for s in self.segments:
            if s.length <= 0:
                raise ValueError(f"segment {s} has non-positive length")
            if isinstance(s, BlockField) and (not s.heights or len({len(r) for r in s.heights}) != 1):
                raise ValueError("block field heights must be a non-empty rectangular grid")
        if self.starts is not None:
            if len(self.starts) != len(self.segments):
                raise ValueError("starts must match segments")
            end = self.starts[0]
            for s, x0 in zip(self.segments, self.starts):
                if x0 < end - 1e-12:
                    raise ValueError(f"segment starting at {x0} overlaps the previous one ending at {end}")
                if x0 > end + 1e-12:
                    raise ValueError(f"gap between {end} and {x0}; segments must be contiguous")
                end = x0 + s.length

    @property
    def x0(self) -> float:
        return self.starts[0] if self.starts is not None else self.start_x

    @property
    def length(self) -> float:
        return sum(s.length for s in self.segments)

    def layout(self) -> list[tuple[Segment, float, float, float]]:
        """(segment, x_start, x_end, level at start) for every segment."""
        out = []
        x, level = self.x0, 0.0
        for s in self.segments:
            out.append((s, x, x + s.length, level))
            if isinstance(s, Flat):
                level = s.height
            elif isinstance(s, Ramp):
                level = level + math.tan(math.radians(s.grade_deg)) * s.length
            x += s.length
        return out

    def on_course(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (x >= self.x0) & (x < self.x0 + self.length) & (np.abs(y - self.center_y) <= self.width / 2)

    def height(self, x, y) -> np.ndarray:
        """Analytic surface height; zero off the course."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h = np.zeros(np.broadcast(x, y).shape)
        lateral = np.abs(y - self.center_y) <= self.width / 2
        for s, xa, xb, level in self.layout():
            m = lateral & (x >= xa) & (x < xb)
            if isinstance(s, Flat):
                v = np.full(h.shape, s.height)
            elif isinstance(s, Ramp):
                v = level + math.tan(math.radians(s.grade_deg)) * (x - xa)
            elif isinstance(s, Chevron):
                u = (x - xa) - s.arm_slope * np.abs(y - self.center_y)
                tooth = np.mod(u, s.tooth_pitch) < s.tooth_pitch / 2
                v = level + np.where(tooth, s.tooth_height, 0.0)
            else:
                grid = np.asarray(s.heights, dtype=float)
                col = np.clip(np.floor((x - xa) / s.cell_size).astype(int), 0, grid.shape[1] - 1)
                row = np.floor((y - (self.center_y - self.width / 2)) / s.cell_size).astype(int) % grid.shape[0]
                v = level + grid[row, col]
            h = np.where(m, v, h)
        return h

    def extent(self) -> tuple[float, float, float, float]:
        m = self.margin
        half = self.width / 2
        return self.x0 - m, self.x0 + self.length + m, self.center_y - half - m, self.center_y + half + m


# Block heights (m, relative to the plateau) for the uneven block section.
# Not published; a fixed irregular pattern.
DEFAULT_BLOCK_HEIGHTS = (
    (0.00, 0.08, 0.03, 0.12),
    (0.05, 0.12, 0.00, 0.07),
    (0.11, 0.02, 0.09, 0.04),
    (0.07, 0.04, 0.13, 0.00),
    (0.02, 0.10, 0.05, 0.09),
    (0.12, 0.00, 0.08, 0.03),
    (0.04, 0.09, 0.01, 0.11),
    (0.09, 0.06, 0.12, 0.02),
)


def default_terrain_course() -> TerrainSpec:
    """4.2 m course: 12 deg ramp up, 13 cm chevrons, blocks, 12 deg ramp down."""
    return TerrainSpec(
        segments=(
            Ramp(1.0, 12.0),
            Chevron(0.13, 0.3, 4),
            BlockField(0.25, DEFAULT_BLOCK_HEIGHTS),
            Ramp(1.0, -12.0),
        ),
        width=2.0,
        start_x=0.0,
        center_y=0.0,
        margin=2.0,
    )


def _grid_for_extent(extent, resolution):
    xmin, xmax, ymin, ymax = extent
    cols = int(math.ceil((xmax - xmin) / resolution - 1e-9))
    rows = int(math.ceil((ymax - ymin) / resolution - 1e-9))
    xs = xmin + (np.arange(cols) + 0.5) * resolution
    ys = ymin + (np.arange(rows) + 0.5) * resolution
    return xs, ys


def sample_surface(fn, extent, resolution: float) -> ElevationMap:
    """Elevation map holding ``fn(x, y)`` at every cell centre."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    xs, ys = _grid_for_extent(extent, resolution)
    X, Y = np.meshgrid(xs, ys)
    return ElevationMap((extent[0], extent[2]), resolution, fn(X, Y))


def build_terrain(spec: TerrainSpec, resolution: float) -> ElevationMap:
    return sample_surface(spec.height, spec.extent(), resolution)


def course_waypoints(spec: TerrainSpec, loops: int = 2, lateral: float = 1.0, lead: float = 1.0) -> list[tuple[float, float]]:
    """Closed loop over the course: out along ``center_y + lateral/2``, back
    along ``center_y - lateral/2``, turning on flat ground ``lead`` metres
    beyond either end."""
    xa = spec.x0 - lead
    xb = spec.x0 + spec.length + lead
    y0 = spec.center_y + lateral / 2
    y1 = spec.center_y - lateral / 2
    corners = [(xb, y0), (xb, y1), (xa, y1), (xa, y0)]
    return [(xa, y0)] + corners * loops


# --- gait, noise, odometry ----------------------------------------------------

# Swing order of a crawl gait (indices into LF, RF, LH, RH).
SWING_ORDER = (2, 0, 3, 1)


@dataclass(frozen=True)
class GaitSpec:
    step_length: float = 0.05  # base advance per support phase
    stance_width: float = 0.4  # left-right foot distance
    stance_length: float = 0.6  # fore-hind foot distance
    body_height: float = 0.5
    turn_step: float = 0.15  # yaw per support phase when turning in place (rad)

    def __post_init__(self):
        if self.step_length <= 0:
            raise ValueError("step length must be positive")
        if self.turn_step <= 0:
            raise ValueError("turn step must be positive")

    @property
    def foot_offsets(self) -> np.ndarray:
        """Nominal base-frame foot positions, LF RF LH RH."""
        a, b, h = self.stance_length / 2, self.stance_width / 2, -self.body_height
        return np.array([[a, b, h], [a, -b, h], [-a, b, h], [-a, -b, h]])


@dataclass(frozen=True)
class NoiseSpec:
    std: tuple[float, float, float, float] = (0.005, 0.005, 0.002, 0.002)  # x y z yaw per step
    bias_z: float = 0.001  # m per step
    bias_yaw: float = 0.0005  # rad per step
    cov_inflation: float = 4.0  # reported variance / true per-step variance

    def __post_init__(self):
        if len(self.std) != 4 or any(s < 0 for s in self.std):
            raise ValueError("std must be four non-negative values")
        if self.cov_inflation < 0:
            raise ValueError("cov_inflation must be non-negative")

    def reported_cov_diag(self) -> np.ndarray:
        sx, sy, sz, syaw = self.std
        return self.cov_inflation * np.array([sx * sx, sy * sy, sz * sz, 0.0, 0.0, syaw * syaw])


ZERO_NOISE = NoiseSpec(std=(0.0, 0.0, 0.0, 0.0), bias_z=0.0, bias_yaw=0.0, cov_inflation=1.0)


class _Odometry:
    """Integrates true increments with noise and bias in world-aligned axes."""

    def __init__(self, noise: NoiseSpec, rng: np.random.Generator, gt0: Pose, offset=(0.0, 0.0, 0.0)):
        self.noise = noise
        self.rng = rng
        self.gt_prev = gt0
        self.pos = gt0.position + np.asarray(offset, dtype=float)
        self.yaw = gt0.yaw

    @property
    def pose(self) -> Pose:
        r, p, _ = self.gt_prev.rpy()
        return Pose(self.pos, euler_to_quat(r, p, self.yaw))

    def step(self, gt: Pose) -> Pose:
        n = self.rng.standard_normal(4) * np.asarray(self.noise.std)
        err = self.yaw - self.gt_prev.yaw
        c, s = math.cos(err), math.sin(err)
        d = gt.position - self.gt_prev.position
        self.pos = self.pos + np.array([c * d[0] - s * d[1] + n[0], s * d[0] + c * d[1] + n[1], d[2] + n[2] + self.noise.bias_z])
        self.yaw = float(wrap_angle(self.yaw + float(wrap_angle(gt.yaw - self.gt_prev.yaw)) + n[3] + self.noise.bias_yaw))
        self.gt_prev = gt
        return self.pose


def _rpy_from_normal(normal: np.ndarray, yaw: float) -> tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    nx = c * normal[0] + s * normal[1]
    ny = -s * normal[0] + c * normal[1]
    nz = normal[2]
    roll = -math.asin(max(-1.0, min(1.0, ny)))
    pitch = math.atan2(nx, nz)
    return roll, pitch


def _base_pose(xy, yaw: float, feet_world: np.ndarray, body_height: float) -> Pose:
    A = np.column_stack([feet_world[:, 0], feet_world[:, 1], np.ones(4)])
    (a, b, c), *_ = np.linalg.lstsq(A, feet_world[:, 2], rcond=None)
    normal = np.array([-a, -b, 1.0]) / math.sqrt(a * a + b * b + 1.0)
    roll, pitch = _rpy_from_normal(normal, yaw)
    z = a * xy[0] + b * xy[1] + c + body_height
    return Pose(np.array([xy[0], xy[1], z]), euler_to_quat(roll, pitch, yaw))


def _in_base(pose: Pose, world: np.ndarray) -> np.ndarray:
    return (world - pose.position) @ pose.rotation


def _cell_center_snap(emap: ElevationMap):
    """Moves a foothold to the centre of its map cell, so that rounding in the
    base-frame round trip can never carry it across a cell edge."""
    ox, oy = emap.origin
    r = emap.resolution

    def snap(x: float, y: float) -> tuple[float, float]:
        return ox + (math.floor((x - ox) / r) + 0.5) * r, oy + (math.floor((y - oy) / r) + 0.5) * r

    return snap


class _Walker:
    """Places feet on a height function and produces base poses."""

    def __init__(self, ground, gait: GaitSpec, xy, yaw: float, snap=None):
        self.ground = ground  # (x, y) arrays -> z array, NaN off-map
        self.snap = snap  # optional (x, y) -> (x, y) applied to footholds
        self.gait = gait
        self.xy = np.asarray(xy, dtype=float)
        self.yaw = float(yaw)
        self.swing = 0
        self.feet = np.array([self._placement(i) for i in range(4)])
        self.pose = _base_pose(self.xy, self.yaw, self.feet, gait.body_height)

    def _placement(self, i: int) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        ox, oy, _ = self.gait.foot_offsets[i]
        x = self.xy[0] + c * ox - s * oy
        y = self.xy[1] + s * ox + c * oy
        if self.snap is not None:
            x, y = self.snap(x, y)
        z = float(self.ground(np.array(x), np.array(y)))
        if math.isnan(z):
            raise ValueError(f"foot placement ({x:.3f}, {y:.3f}) is off the map")
        return np.array([x, y, z])

    def move(self, xy, yaw: float) -> Pose:
        self.xy = np.asarray(xy, dtype=float)
        self.yaw = float(wrap_angle(yaw))
        i = SWING_ORDER[self.swing % 4]
        self.swing += 1
        self.feet[i] = self._placement(i)
        self.pose = _base_pose(self.xy, self.yaw, self.feet, self.gait.body_height)
        return self.pose

    def feet_in_base(self) -> np.ndarray:
        return _in_base(self.pose, self.feet)


def _walk_targets(start_xy, start_yaw, waypoints, gait: GaitSpec):
    """Commanded (xy, yaw) per support phase: turn in place, then walk."""
    xy = np.asarray(start_xy, dtype=float)
    yaw = float(start_yaw)
    for wp in waypoints:
        wp = np.asarray(wp, dtype=float)
        d = wp - xy
        dist = float(np.hypot(*d))
        if dist < 1e-9:
            continue
        heading = math.atan2(d[1], d[0])
        while True:
            err = float(wrap_angle(heading - yaw))
            if abs(err) < 1e-12:
                break
            yaw = heading if abs(err) <= gait.turn_step else float(wrap_angle(yaw + math.copysign(gait.turn_step, err)))
            yield xy.copy(), yaw
        yaw = heading
        n = int(math.ceil(dist / gait.step_length - 1e-9))
        for j in range(1, n + 1):
            xy_j = wp if j == n else xy + d * (j * gait.step_length / dist)
            yield np.array(xy_j, dtype=float), yaw
        xy = wp.copy()


def simulate_walk(
    terrain: ElevationMap,
    gait: GaitSpec,
    noise: NoiseSpec,
    waypoints: Sequence[tuple[float, float]],
    rng: np.random.Generator,
    start_yaw: Optional[float] = None,
) -> EventLog:
    """One event per four-support phase along the waypoint path.

    The robot starts at ``waypoints[0]``; odometry starts at the true pose.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    for wp in waypoints:
        if not terrain.contains(*wp):
            raise ValueError(f"waypoint {tuple(wp)} is off the map")
    start = np.asarray(waypoints[0], dtype=float)
    if start_yaw is None:
        d = np.asarray(waypoints[1], dtype=float) - start
        start_yaw = math.atan2(d[1], d[0])
    walker = _Walker(terrain.heights_at, gait, start, start_yaw, snap=_cell_center_snap(terrain))
    odom = _Odometry(noise, rng, walker.pose)
    cov = noise.reported_cov_diag()
    contact = (True, True, True, True)
    events = [Event(0, "walk", walker.pose, odom.pose, cov, walker.feet_in_base(), contact)]
    for xy, yaw in _walk_targets(start, start_yaw, waypoints[1:], gait):
        gt = walker.move(xy, yaw)
        events.append(Event(len(events), "walk", gt, odom.step(gt), cov, walker.feet_in_base(), contact))
    return EventLog(events)


# --- bimodal chevron fixture --------------------------------------------------


@dataclass(frozen=True)
class PeriodicRidgeCourse:
    """Ramp along x with triangular ridges periodic in y, walked along
    ``walk_y``. Foot heights repeat every half period (up to a z shift), so the
    posterior over y splits into several clusters. Two incommensurate waves
    along x keep x observable. From ``disambiguation_x`` on, a raised strip
    lies under the true left foot line only; every shifted hypothesis misses
    it."""

    grade_deg: float = 12.0
    ridge_height: float = 0.06
    ridge_period: float = 0.3
    walk_y: float = 0.15
    x_wave_amplitude: float = 0.02
    x_wave_periods: tuple[float, float] = (0.37, 0.53)
    disambiguation_x: float = 2.0
    strip: tuple[float, float] = (0.30, 0.40)
    strip_height: float = 0.10
    extent: tuple[float, float, float, float] = (-1.5, 4.0, -2.0, 2.0)

    def height(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        phase = np.mod(y / self.ridge_period, 1.0)
        tri = 1.0 - np.abs(2.0 * phase - 1.0)
        h = math.tan(math.radians(self.grade_deg)) * x + self.ridge_height * tri
        for period in self.x_wave_periods:
            h = h + self.x_wave_amplitude * np.sin(2.0 * math.pi * x / period)
        on_strip = (x >= self.disambiguation_x) & (y >= self.strip[0]) & (y < self.strip[1])
        return h + np.where(on_strip, self.strip_height, 0.0)

    def build(self, resolution: float = 0.01) -> ElevationMap:
        return sample_surface(self.height, self.extent, resolution)

    def waypoints(self, start_x: float = 1.0, end_x: float = 3.5) -> list[tuple[float, float]]:
        return [(start_x, self.walk_y), (end_x, self.walk_y)]

    @staticmethod
    def init_cov() -> Covariance6:
        """Initial spread that is ambiguous in y only (0.2 m), tight elsewhere."""
        return Covariance6.diag([0.05**2, 0.2**2, 0.05**2, 0.0, 0.0, 0.05**2])


# --- wall probing -------------------------------------------------------------


def room_cloud(
    spacing: float = 0.01,
    front_x: float = 2.0,
    side_y: float = -1.5,
    x_min: float = 0.6,
    y_max: float = 0.8,
    wall_height: float = 0.6,
) -> PointCloudMap:
    """Floor (z = 0) plus a front wall at ``x = front_x`` and a side wall at
    ``y = side_y``, sampled on a lattice with the given spacing."""
    nx = int(round((front_x - x_min) / spacing))
    ny = int(round((y_max - side_y) / spacing))
    nz = int(round(wall_height / spacing))
    xs = x_min + np.arange(nx) * spacing  # stops short of the front wall
    ys = side_y + np.arange(1, ny + 1) * spacing  # starts past the side wall
    zs = np.arange(nz + 1) * spacing
    X, Y = np.meshgrid(xs, ys)
    floor = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    Y, Z = np.meshgrid(np.concatenate([[side_y], ys]), zs)
    front = np.column_stack([np.full(Y.size, front_x), Y.ravel(), Z.ravel()])
    X, Z = np.meshgrid(xs, zs)
    side = np.column_stack([X.ravel(), np.full(X.size, side_y), Z.ravel()])
    return PointCloudMap(np.vstack([floor, front, side]))


@dataclass(frozen=True)
class Walk:
    direction: tuple[float, float]  # base frame
    distance: float


@dataclass(frozen=True)
class Probe:
    foot: str  # LF RF LH RH
    direction: tuple[float, float, float]  # base frame


@dataclass(frozen=True)
class ProbeScript:
    steps: tuple[Union[Walk, Probe], ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("probe script must not be empty")


def default_probe_script(lateral_steps: int = 5, lateral_step: float = 0.2) -> ProbeScript:
    """Probe forward and to the right with RF, then sidestep right; repeat."""
    front = Probe("RF", (1.0, 0.0, 0.0))
    right = Probe("RF", (0.0, -1.0, 0.0))
    steps: list = []
    for _ in range(lateral_steps):
        steps += [front, right, Walk((0.0, -1.0), lateral_step)]
    steps += [front, right]
    return ProbeScript(tuple(steps))


@dataclass(frozen=True)
class ProbeSpec:
    reach: float = 0.6  # max probe travel from the hip
    probe_height: float = -0.25  # base-frame z of the probe ray
    contact_tolerance: float = 0.008
    ray_step: float = 0.002


def _cast_probe(cloud: PointCloudMap, origin: np.ndarray, direction: np.ndarray, spec: ProbeSpec):
    u = direction / np.linalg.norm(direction)
    s = np.arange(0.0, spec.reach + 1e-12, spec.ray_step)
    samples = origin + s[:, None] * u
    dist, idx = cloud.index.query(samples)
    hit = np.flatnonzero(dist <= spec.contact_tolerance)
    if not len(hit):
        return None
    return cloud.points[idx[hit[0]]].copy()


def simulate_probing(
    walls: PointCloudMap,
    script: ProbeScript,
    noise: NoiseSpec,
    initial_offset,
    rng: np.random.Generator,
    start: Pose = Pose.from_xyz_rpy(1.4, -0.2, 0.5),
    gait: GaitSpec = GaitSpec(step_length=0.05),
    probe: ProbeSpec = ProbeSpec(),
    floor_height: float = 0.0,
) -> EventLog:
    """Walk events on a flat floor interleaved with single-foot probe events.

    Odometry starts ``initial_offset`` (world frame) away from the truth.
    """
    names = ("LF", "RF", "LH", "RH")
    ground = lambda x, y: np.full(np.shape(x), floor_height)  # noqa: E731
    walker = _Walker(ground, gait, start.position[:2], start.yaw)
    odom = _Odometry(noise, rng, walker.pose, initial_offset)
    cov = noise.reported_cov_diag()
    four = (True, True, True, True)
    events = [Event(0, "walk", walker.pose, odom.pose, cov, walker.feet_in_base(), four)]

    for step in script.steps:
        if isinstance(step, Walk):
            d = np.asarray(step.direction, dtype=float)
            d = d / np.linalg.norm(d)
            c, s = math.cos(walker.yaw), math.sin(walker.yaw)
            world = np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])
            n = int(math.ceil(step.distance / gait.step_length - 1e-9))
            origin = walker.xy.copy()
            for j in range(1, n + 1):
                xy = origin + world * min(step.distance, j * gait.step_length)
                gt = walker.move(xy, walker.yaw)
                events.append(Event(len(events), "walk", gt, odom.step(gt), cov, walker.feet_in_base(), four))
        else:
            i = names.index(step.foot)
            gt = walker.pose
            hip = np.array([gait.foot_offsets[i][0], gait.foot_offsets[i][1], probe.probe_height])
            ray_origin = gt.position + gt.rotation @ hip
            ray_dir = gt.rotation @ np.asarray(step.direction, dtype=float)
            point = _cast_probe(walls, ray_origin, ray_dir, probe)
            feet = walker.feet_in_base()
            contact = [False] * 4
            if point is not None:
                feet[i] = _in_base(gt, point)
                contact[i] = True
            events.append(Event(len(events), "probe", gt, odom.step(gt), cov, feet, tuple(contact)))
    return EventLog(events)
