"""Rigid-body poses in SE(3) with Gaussian sampling restricted to x, y, z, yaw.

Orientation is a unit quaternion ``(w, x, y, z)``. Euler angles follow the
Z-Y-X convention (``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``) with yaw wrapped to
``(-pi, pi]``.

Sampling perturbs a pose in world-aligned axes: translation offsets are added
to the position and the yaw offset is added to the Z-Y-X yaw angle (a
left-multiplied rotation about world z). Left yaw rotations leave the Z-Y-X
roll and pitch untouched, so roll and pitch of the mean survive sampling
exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DIMS = ("x", "y", "z", "roll", "pitch", "yaw")
SAMPLEABLE = ("x", "y", "z", "yaw")
# Position of the sampleable dims inside a 6-vector ordered as DIMS.
_DIM_INDEX = {name: i for i, name in enumerate(DIMS)}


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


# --- quaternion / matrix / euler helpers -------------------------------------


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def euler_to_quat(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ]
    )


def euler_to_matrix(rpy: np.ndarray) -> np.ndarray:
    """Batch Z-Y-X Euler to rotation matrices: (..., 3) -> (..., 3, 3)."""
    rpy = np.asarray(rpy, dtype=float)
    cr, sr = np.cos(rpy[..., 0]), np.sin(rpy[..., 0])
    cp, sp = np.cos(rpy[..., 1]), np.sin(rpy[..., 1])
    cy, sy = np.cos(rpy[..., 2]), np.sin(rpy[..., 2])
    R = np.empty(rpy.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def matrix_to_euler(R: np.ndarray) -> np.ndarray:
    """Batch rotation matrices to Z-Y-X Euler (roll, pitch, yaw)."""
    R = np.asarray(R, dtype=float)
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    pitch = np.arcsin(np.clip(-R[..., 2, 0], -1.0, 1.0))
    yaw = wrap_angle(np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    return np.stack([roll, pitch, yaw], axis=-1)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# --- Pose ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping base-frame points into the world frame."""

    position: np.ndarray
    quaternion: np.ndarray
    # Euler angles a pose was sampled from; keeps roll/pitch bit-identical to
    # the mean through sample_pose. Never set by the public constructors.
    _rpy: tuple[float, float, float] | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if not np.all(np.isfinite(p)) or not math.isfinite(n) or n == 0.0:
            raise ValueError("pose must have finite position and a non-zero quaternion")
        if abs(n - 1.0) > 1e-15:
            q = q / n
        object.__setattr__(self, "position", _frozen(p))
        object.__setattr__(self, "quaternion", _frozen(q))

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_xyz_rpy(cls, x=0.0, y=0.0, z=0.0, roll=0.0, pitch=0.0, yaw=0.0) -> Pose:
        return cls(np.array([x, y, z], dtype=float), euler_to_quat(roll, pitch, yaw))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], matrix_to_quat(T[:3, :3]))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def rpy(self) -> np.ndarray:
        if self._rpy is not None:
            return np.array(self._rpy)
        return matrix_to_euler(self.rotation)

    @property
    def yaw(self) -> float:
        return float(self.rpy()[2])

    def xyz_rpy(self) -> np.ndarray:
        return np.concatenate([self.position, self.rpy()])

    def inverse(self) -> Pose:
        q_inv = self.quaternion * np.array([1.0, -1.0, -1.0, -1.0])
        return Pose(-(quat_to_matrix(q_inv) @ self.position), q_inv)

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __repr__(self) -> str:
        x, y, z = self.position
        r, p, yw = self.rpy()
        return f"Pose(xyz=({x:.4f}, {y:.4f}, {z:.4f}), rpy=({r:.4f}, {p:.4f}, {yw:.4f}))"


def translate(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> Pose:
    return Pose.from_xyz_rpy(x, y, z)


def compose(a: Pose, b: Pose) -> Pose:
    """Homogeneous product ``a * b``."""
    return Pose(a.position + a.rotation @ b.position, quat_multiply(a.quaternion, b.quaternion))


def relative(a: Pose, b: Pose) -> Pose:
    """Pose of ``b`` expressed in the frame of ``a`` (``a^-1 * b``)."""
    return compose(a.inverse(), b)


def transform_point(pose: Pose, point) -> np.ndarray:
    return pose.position + pose.rotation @ np.asarray(point, dtype=float)


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """Translation distance (m) and rotation angle (rad) between two poses."""
    d = relative(a, b)
    w = min(1.0, abs(float(d.quaternion[0])))
    return float(np.linalg.norm(d.position)), 2.0 * math.acos(w)


# --- covariance and sampling --------------------------------------------------


class Covariance6:
    """6x6 covariance over (x, y, z, roll, pitch, yaw); m^2 and rad^2."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.shape != (6, 6):
            raise ValueError(f"covariance must be 6x6, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("covariance has non-finite entries")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise ValueError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(m)) < -1e-12:
            raise ValueError("covariance is not positive semi-definite")
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def diag(cls, values: Sequence[float]) -> Covariance6:
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def zeros(cls) -> Covariance6:
        return cls(np.zeros((6, 6)))

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def __repr__(self) -> str:
        return f"Covariance6(diag={np.round(self.diagonal(), 8).tolist()})"


def as_covariance(cov) -> Covariance6:
    return cov if isinstance(cov, Covariance6) else Covariance6(cov)


@dataclass(frozen=True)
class SampleSpaceMask:
    """Dimensions perturbed when sampling. Roll and pitch are never sampled."""

    dims: frozenset = frozenset(SAMPLEABLE)

    def __post_init__(self):
        dims = frozenset(self.dims)
        bad = dims - set(SAMPLEABLE)
        if bad:
            raise ValueError(f"dimensions cannot be sampled: {sorted(bad)}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def of(cls, names: Iterable[str]) -> SampleSpaceMask:
        return cls(frozenset(names))

    def ordered(self) -> list[str]:
        return [d for d in SAMPLEABLE if d in self.dims]


FULL_MASK = SampleSpaceMask()


def perturbation_factor(cov, mask: SampleSpaceMask = FULL_MASK) -> np.ndarray:
    """Loading matrix ``L`` (4 x 4) with ``L @ n`` distributed as the masked
    covariance over (dx, dy, dz, dyaw) for ``n ~ N(0, I_4)``.

    Rows and columns of unsampled or zero-variance dims are exactly zero.
    """
    m = as_covariance(cov).matrix
    L = np.zeros((4, 4))
    active = [i for i, d in enumerate(SAMPLEABLE) if d in mask.dims and m[_DIM_INDEX[d], _DIM_INDEX[d]] > 0]
    if not active:
        return L
    idx = [_DIM_INDEX[SAMPLEABLE[i]] for i in active]
    sub = m[np.ix_(idx, idx)]
    try:
        Ls = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        # singular but PSD sub-block
        vals, vecs = np.linalg.eigh(sub)
        Ls = vecs * np.sqrt(np.clip(vals, 0.0, None))
    L[np.ix_(active, active)] = Ls
    return L


def draw_perturbations(L: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of (dx, dy, dz, dyaw). Always consumes ``4 n`` normals."""
    z = rng.standard_normal((n, 4))
    return z @ L.T


def apply_perturbation(position: np.ndarray, rpy: np.ndarray, delta: np.ndarray):
    """Add (dx, dy, dz, dyaw) rows to batched positions and Euler angles."""
    pos = position + delta[:, :3]
    out = rpy.copy()
    out[:, 2] = wrap_angle(rpy[:, 2] + delta[:, 3])
    return pos, out


def sample_pose(mean: Pose, cov, mask: SampleSpaceMask, rng: np.random.Generator) -> Pose:
    """One Gaussian draw around ``mean``; roll and pitch of ``mean`` are kept."""
    L = perturbation_factor(cov, mask)
    d = draw_perturbations(L, 1, rng)[0]
    if d[3] == 0.0:
        return Pose(mean.position + d[:3], mean.quaternion)
    r, p, y = (float(v) for v in mean.rpy())
    y = float(wrap_angle(y + d[3]))
    return Pose(mean.position + d[:3], euler_to_quat(r, p, y), _rpy=(r, p, y))


def sample_poses(mean: Pose, cov, mask: SampleSpaceMask, rng: np.random.Generator, n: int):
    """``n`` draws as (positions (n,3), rpy (n,3)). Same stream use as ``n``
    calls of :func:`sample_pose`."""
    L = perturbation_factor(cov, mask)
    d = draw_perturbations(L, n, rng)
    pos = np.tile(mean.position, (n, 1))
    rpy = np.tile(mean.rpy(), (n, 1))
    return apply_perturbation(pos, rpy, d)


def compose_batch(position: np.ndarray, rpy: np.ndarray, delta: Pose):
    """Right-compose every pose in a batch with ``delta``."""
    R = euler_to_matrix(rpy)
    pos = position + R @ delta.position
    return pos, matrix_to_euler(R @ delta.rotation)


def poses_from_arrays(position: np.ndarray, rpy: np.ndarray) -> list[Pose]:
    return [Pose(p, euler_to_quat(*e)) for p, e in zip(position, rpy)]
