"""Foot-contact measurement likelihoods against 2.5D and 3D prior maps.

Each contact contributes ``max(rho, N(residual; 0, sigma_z))``. The floor
``rho`` keeps a single outlier contact from wiping out a particle. Work is
done in log space; contacts over cells without data contribute a factor of 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .maps import ElevationMap, PointCloudMap, elevation_at, nearest

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# default floor, as a fraction of the Gaussian peak (~3.7 sigma cutoff)
DEFAULT_RHO_FRACTION = 1e-3


def gaussian_peak(sigma: float) -> float:
    return 1.0 / (math.sqrt(2.0 * math.pi) * sigma)


@dataclass(frozen=True)
class LikelihoodConfig:
    sigma_z: float = 0.01
    rho: Optional[float] = field(default=None)

    def __post_init__(self):
        if not (self.sigma_z > 0 and math.isfinite(self.sigma_z)):
            raise ValueError("sigma_z must be positive")
        if self.rho is None:
            object.__setattr__(self, "rho", DEFAULT_RHO_FRACTION * gaussian_peak(self.sigma_z))
        if not (0 < self.rho < gaussian_peak(self.sigma_z)):
            raise ValueError("rho must lie in (0, gaussian_peak(sigma_z))")

    @property
    def log_rho(self) -> float:
        return math.log(self.rho)

    @property
    def floor_residual(self) -> float:
        """|residual| at and beyond which the floor is active."""
        return self.sigma_z * math.sqrt(-2.0 * math.log(self.rho * self.sigma_z * math.sqrt(2.0 * math.pi)))


def log_contact_likelihood(residual, cfg: LikelihoodConfig) -> np.ndarray:
    """Log of the floored Gaussian likelihood. NaN residuals (no data) give 0."""
    r = np.asarray(residual, dtype=float)
    s = cfg.sigma_z
    logpdf = -0.5 * (r / s) ** 2 - math.log(s) - _LOG_SQRT_2PI
    out = np.maximum(logpdf, cfg.log_rho)
    return np.where(np.isnan(r), 0.0, out)


def contact_likelihood(residual: float, cfg: LikelihoodConfig) -> float:
    return float(np.exp(log_contact_likelihood(residual, cfg)))


def residual_2p5d(emap: ElevationMap, foot_world) -> Optional[float]:
    """Foot height minus map elevation under it; None off-map."""
    x, y, z = (float(v) for v in foot_world)
    h = elevation_at(emap, x, y)
    return None if h is None else z - h


def residual_3d(cloud: PointCloudMap, foot_world) -> float:
    """Distance from the foot to its nearest map point."""
    return nearest(cloud, foot_world)[1]


def residuals(prior, feet_world: np.ndarray) -> np.ndarray:
    """Batched residuals for feet of shape (..., 3); NaN marks no-data."""
    feet = np.asarray(feet_world, dtype=float)
    if isinstance(prior, ElevationMap):
        return feet[..., 2] - prior.heights_at(feet[..., 0], feet[..., 1])
    if isinstance(prior, PointCloudMap):
        return prior.distances(feet.reshape(-1, 3)).reshape(feet.shape[:-1])
    raise TypeError(f"unsupported map type {type(prior).__name__}")
