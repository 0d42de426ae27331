"""Sequential Monte Carlo localization from foot contacts.

The filter is triggered once per support phase. Every particle is pushed
through the odometry increment, jittered with the odometry covariance in the
sampled dimensions, and reweighted by the likelihood of the feet currently in
contact. Weights are resampled (systematic) when their variance exceeds a
threshold, and the ancestry of every generation is kept so that the full past
trajectory of any particle can be recovered.

Particles are held as arrays: positions ``(N, 3)`` and Z-Y-X Euler angles
``(N, 3)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .likelihood import LikelihoodConfig, log_contact_likelihood, residuals
from .se3 import (
    FULL_MASK,
    Covariance6,
    Pose,
    SampleSpaceMask,
    as_covariance,
    apply_perturbation,
    compose,
    compose_batch,
    draw_perturbations,
    euler_to_matrix,
    euler_to_quat,
    perturbation_factor,
    relative,
    sample_poses,
)

log = logging.getLogger(__name__)

FOOT_NAMES = ("LF", "RF", "LH", "RH")
FULL = "full"
Z_ONLY = "z_only"

# Weight variance above which the particle set is resampled. Tuned once on the
# simulated terrain course at N=1000; equals an effective sample size of N/2
# there (var = (1/ESS - 1/N) / N).
DEFAULT_WEIGHT_VARIANCE_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class QuadrupedState:
    """Odometry pose and covariance, foot positions in the base frame (LF, RF,
    LH, RH) and contact flags at one filter trigger."""

    odom_pose: Pose
    odom_cov: Covariance6
    foot_in_base: np.ndarray
    contact: tuple[bool, bool, bool, bool]
    timestamp: float = 0.0

    def __post_init__(self):
        feet = np.array(self.foot_in_base, dtype=float).reshape(4, 3)
        if not np.all(np.isfinite(feet)):
            raise ValueError("foot positions must be finite")
        feet.setflags(write=False)
        object.__setattr__(self, "foot_in_base", feet)
        object.__setattr__(self, "odom_cov", as_covariance(self.odom_cov))
        object.__setattr__(self, "contact", tuple(bool(c) for c in self.contact))
        if len(self.contact) != 4:
            raise ValueError("contact must have four flags")


@dataclass(frozen=True)
class Particle:
    pose: Pose
    weight: float
    parent: int


@dataclass(frozen=True)
class FilterConfig:
    particle_count: int = 1000
    init_cov: Covariance6 = field(default_factory=lambda: Covariance6.diag([0.04, 0.04, 0.04, 0.0, 0.0, 0.01]))
    likelihood: LikelihoodConfig = field(default_factory=LikelihoodConfig)
    resample_weight_variance_threshold: float = DEFAULT_WEIGHT_VARIANCE_THRESHOLD
    xy_variance_gate_factor: float = 4.0
    sample_mask: SampleSpaceMask = FULL_MASK
    # Alternative trigger: resample when ESS < ess_fraction * N.
    use_ess_trigger: bool = False
    ess_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "init_cov", as_covariance(self.init_cov))
        errors = []
        if self.particle_count < 1:
            errors.append("particle_count must be >= 1")
        if not self.resample_weight_variance_threshold > 0:
            errors.append("resample_weight_variance_threshold must be > 0")
        if not self.xy_variance_gate_factor > 0:
            errors.append("xy_variance_gate_factor must be > 0")
        if not 0 < self.ess_fraction <= 1:
            errors.append("ess_fraction must be in (0, 1]")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass(frozen=True, eq=False)
class ParticleSet:
    position: np.ndarray  # (N, 3)
    rpy: np.ndarray  # (N, 3)
    weight: np.ndarray  # (N,), sums to 1
    parent: np.ndarray  # (N,), index into previous generation

    def __post_init__(self):
        for name in ("position", "rpy", "weight", "parent"):
            a = np.array(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.weight)

    def particles(self) -> list[Particle]:
        return [
            Particle(Pose(p, euler_to_quat(*e)), float(w), int(k))
            for p, e, w, k in zip(self.position, self.rpy, self.weight, self.parent)
        ]

    def take(self, idx: np.ndarray) -> ParticleSet:
        """Equal-weight copies of the chosen particles; ``parent`` becomes ``idx``."""
        n = len(idx)
        return ParticleSet(self.position[idx], self.rpy[idx], np.full(n, 1.0 / n), idx)


@dataclass(frozen=True, eq=False)
class ParticleDump:
    """Snapshot of the weighted particle set after the measurement update."""

    step: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    yaw: np.ndarray
    weight: np.ndarray
    parent: np.ndarray

    def rows(self):
        for i in range(len(self.weight)):
            yield (self.step, i, self.x[i], self.y[i], self.z[i], self.yaw[i], self.weight[i], int(self.parent[i]))


@dataclass(frozen=True, eq=False)
class StepResult:
    step: int
    estimate: Pose
    mode: str
    resampled: bool
    all_outlier: bool
    weight_variance: float
    ess: float
    dump: ParticleDump

    def same_as(self, other: StepResult) -> bool:
        """Bit-level equality, used for determinism checks."""
        a, b = self.dump, other.dump
        return (
            self.step == other.step
            and self.mode == other.mode
            and self.resampled == other.resampled
            and self.all_outlier == other.all_outlier
            and np.array_equal(self.estimate.position, other.estimate.position)
            and np.array_equal(self.estimate.quaternion, other.estimate.quaternion)
            and all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("x", "y", "z", "yaw", "weight", "parent"))
        )


@dataclass(frozen=True)
class TrajectoryEstimate:
    poses: tuple[Pose, ...]
    modes: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.poses)


class FilterState:
    """Mutable filter state; one writer at a time."""

    def __init__(self, cfg: FilterConfig, particles: ParticleSet, initial_pose: Pose):
        self.cfg = cfg
        self.particles = particles
        self.step = 0
        # one generation per step: the weighted set before resampling, with
        # parent indices into the previous generation
        self.history: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = [
            (particles.position, particles.rpy, particles.parent)
        ]
        self.estimates: list[Pose] = [initial_pose]
        self.modes: list[str] = [FULL]
        self.best_index = 0

    @property
    def estimate(self) -> Pose:
        return self.estimates[-1]


def init(cfg: FilterConfig, initial_pose: Pose, rng: np.random.Generator) -> FilterState:
    n = cfg.particle_count
    pos, rpy = sample_poses(initial_pose, cfg.init_cov, cfg.sample_mask, rng, n)
    ps = ParticleSet(pos, rpy, np.full(n, 1.0 / n), np.arange(n))
    return FilterState(cfg, ps, initial_pose)


def weight_variance(w: np.ndarray) -> float:
    return float(np.var(w))


def effective_sample_size(w: np.ndarray) -> float:
    return float(1.0 / np.sum(w * w))


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - np.max(logw))
    return w / np.sum(w)


def feet_in_world(position: np.ndarray, rpy: np.ndarray, feet_base: np.ndarray) -> np.ndarray:
    """(N, F, 3) world positions of base-frame feet for every particle."""
    R = euler_to_matrix(rpy)
    return position[:, None, :] + np.einsum("nij,fj->nfi", R, feet_base)


def estimate_gate(
    particles: ParticleSet,
    odom_var_xy: tuple[float, float],
    gate_factor: float,
    propagated: Pose,
) -> tuple[Pose, str]:
    """Weighted-mean pose when the particle cloud is tight in x and y.

    Otherwise returns ``propagated`` (the previous estimate moved by odometry)
    with only its z replaced by the weighted mean.
    """
    w = particles.weight
    pos = particles.position
    mean = w @ pos
    var = w @ (pos - mean) ** 2
    roll = float(w @ particles.rpy[:, 0])
    pitch = float(w @ particles.rpy[:, 1])
    yaw = math.atan2(float(w @ np.sin(particles.rpy[:, 2])), float(w @ np.cos(particles.rpy[:, 2])))
    if var[0] <= gate_factor * odom_var_xy[0] and var[1] <= gate_factor * odom_var_xy[1]:
        return Pose(mean, euler_to_quat(roll, pitch, yaw)), FULL
    p = propagated.position.copy()
    p[2] = mean[2]
    return Pose(p, propagated.quaternion), Z_ONLY


def systematic_resample(weights: np.ndarray, offset: float) -> np.ndarray:
    """Indices picked by pointers ``(offset + k) / N`` on the weight CDF.

    ``offset`` lies in [0, 1).
    """
    n = len(weights)
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    pointers = (offset + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, pointers, side="right"), n - 1)


def needs_resampling(weights: np.ndarray, cfg: FilterConfig) -> bool:
    if cfg.use_ess_trigger:
        return effective_sample_size(weights) < cfg.ess_fraction * len(weights)
    return weight_variance(weights) > cfg.resample_weight_variance_threshold


def maybe_resample(
    particles: ParticleSet, threshold: float, rng: np.random.Generator
) -> ParticleSet:
    """Systematic resampling when the weight variance exceeds ``threshold``.

    The resampled set records the chosen indices as ``parent``.
    """
    if weight_variance(particles.weight) <= threshold:
        return particles
    return particles.take(systematic_resample(particles.weight, rng.random()))


def update(
    state: FilterState,
    prev: QuadrupedState,
    curr: QuadrupedState,
    prior,
    rng: np.random.Generator,
) -> StepResult:
    cfg = state.cfg
    ps = state.particles
    n = len(ps)
    delta = relative(prev.odom_pose, curr.odom_pose)

    # propagate and jitter
    pos, rpy = compose_batch(ps.position, ps.rpy, delta)
    L = perturbation_factor(curr.odom_cov, cfg.sample_mask)
    pos, rpy = apply_perturbation(pos, rpy, draw_perturbations(L, n, rng))

    # weight
    in_contact = np.flatnonzero(curr.contact)
    all_outlier = False
    w = ps.weight
    if len(in_contact):
        feet = feet_in_world(pos, rpy, curr.foot_in_base[in_contact])
        r = residuals(prior, feet)
        ll = log_contact_likelihood(r, cfg.likelihood)
        informative = np.isfinite(r) & (ll > cfg.likelihood.log_rho)
        if np.any(np.isfinite(r)) and not np.any(informative):
            all_outlier = True
            log.warning("step %d: every contact is an outlier for every particle; weights reset", state.step + 1)
            w = np.full(n, 1.0 / n)
        else:
            with np.errstate(divide="ignore"):
                w = _normalize_log(np.log(ps.weight) + ll.sum(axis=1))
    weighted = ParticleSet(pos, rpy, w, ps.parent)

    # estimate
    propagated = compose(state.estimate, delta)
    var_xy = (curr.odom_cov.matrix[0, 0], curr.odom_cov.matrix[1, 1])
    est, mode = estimate_gate(weighted, var_xy, cfg.xy_variance_gate_factor, propagated)
    if all_outlier:
        p = propagated.position.copy()
        p[2] = est.position[2]
        est, mode = Pose(p, propagated.quaternion), Z_ONLY

    best = int(np.argmax(w))
    wvar = weight_variance(w)
    ess = effective_sample_size(w)
    step = state.step + 1
    dump = ParticleDump(step, pos[:, 0], pos[:, 1], pos[:, 2], rpy[:, 2], w, ps.parent)

    # resample; particle parents now index into this generation
    state.history.append((pos, rpy, ps.parent))
    resampled = needs_resampling(w, cfg)
    if resampled:
        state.particles = weighted.take(systematic_resample(w, rng.random()))
    else:
        state.particles = ParticleSet(pos, rpy, w, np.arange(n))
    state.estimates.append(est)
    state.modes.append(mode)
    state.best_index = best
    state.step = step
    return StepResult(step, est, mode, resampled, all_outlier, wvar, ess, dump)


def trajectory_of(state: FilterState, index: int) -> list[Pose]:
    """Ancestral path of particle ``index`` of the latest generation."""
    poses = []
    i = index
    for pos, rpy, parent in reversed(state.history):
        poses.append(Pose(pos[i], euler_to_quat(*rpy[i])))
        i = int(parent[i])
    return poses[::-1]


def best_trajectory(state: FilterState) -> TrajectoryEstimate:
    """Ancestry of the particle with the highest weight at the last update,
    root to present."""
    if state.step == 0:
        return TrajectoryEstimate((state.estimate,), (FULL,))
    return TrajectoryEstimate(tuple(trajectory_of(state, state.best_index)), tuple(state.modes))


def gated_trajectory(state: FilterState) -> TrajectoryEstimate:
    """Per-step gated estimates, including the initial pose."""
    return TrajectoryEstimate(tuple(state.estimates), tuple(state.modes))


def run(
    states: Sequence[QuadrupedState],
    prior,
    cfg: FilterConfig,
    rng: np.random.Generator,
    on_step=None,
) -> FilterState:
    """Initialize at the first state's odometry pose and process the rest."""
    fs = init(cfg, states[0].odom_pose, rng)
    for prev, curr in zip(states[:-1], states[1:]):
        res = update(fs, prev, curr, prior, rng)
        if on_step is not None:
            on_step(res)
    return fs
