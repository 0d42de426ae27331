"""Prior maps: 2.5D elevation grids and 3D point clouds.

Grid file format (ASCII)::

    resolution 0.02
    origin -2.0 -3.0
    size 300 410
    0.0 0.0 ...        # rows*cols heights, row-major, ``nan`` = invalid

Row ``r`` / column ``c`` covers ``x in [ox + c*res, ox + (c+1)*res)`` and
``y in [oy + r*res, oy + (r+1)*res)``; row 0 is the lowest ``y``.

Point cloud file format: one ``x y z`` triple per line. Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import IO, Optional, Union

import numpy as np

from .kdtree import KdTree

Source = Union[str, bytes, IO]


class MapFormatError(ValueError):
    """Raised for malformed map files; message carries the line number."""


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


# --- elevation grid -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ElevationMap:
    origin: tuple[float, float]
    resolution: float
    heights: np.ndarray  # (rows, cols); NaN marks invalid cells

    def __post_init__(self):
        h = np.array(self.heights, dtype=float)
        if h.ndim != 2 or h.size == 0:
            raise ValueError("heights must be a non-empty 2D grid")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValueError("resolution must be positive")
        if np.any(np.isinf(h)):
            raise ValueError("heights must be finite or NaN")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def rows(self) -> int:
        return self.heights.shape[0]

    @property
    def cols(self) -> int:
        return self.heights.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.heights)

    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the covered area."""
        ox, oy = self.origin
        return ox, ox + self.cols * self.resolution, oy, oy + self.rows * self.resolution

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        ox, oy = self.origin
        return ox + (col + 0.5) * self.resolution, oy + (row + 0.5) * self.resolution

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ox, oy = self.origin
        xs = ox + (np.arange(self.cols) + 0.5) * self.resolution
        ys = oy + (np.arange(self.rows) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def heights_at(self, x, y) -> np.ndarray:
        """Vectorized nearest-cell lookup; NaN where there is no data."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ox, oy = self.origin
        c = np.floor((x - ox) / self.resolution)
        r = np.floor((y - oy) / self.resolution)
        inside = (c >= 0) & (c < self.cols) & (r >= 0) & (r < self.rows)
        ci = np.where(inside, c, 0).astype(np.int64)
        ri = np.where(inside, r, 0).astype(np.int64)
        return np.where(inside, self.heights[ri, ci], np.nan)

    def contains(self, x: float, y: float) -> bool:
        xmin, xmax, ymin, ymax = self.extent()
        return xmin <= x < xmax and ymin <= y < ymax


def elevation_at(emap: ElevationMap, x: float, y: float) -> Optional[float]:
    """Height of the cell containing (x, y), or None when off-grid or invalid."""
    h = float(emap.heights_at(x, y))
    return None if math.isnan(h) else h


def save_elevation_map(emap: ElevationMap, dest: Optional[IO[str]] = None) -> str:
    out = io.StringIO()
    out.write(f"resolution {emap.resolution!r}\n")
    out.write(f"origin {emap.origin[0]!r} {emap.origin[1]!r}\n")
    out.write(f"size {emap.rows} {emap.cols}\n")
    for row in emap.heights:
        out.write(" ".join("nan" if math.isnan(v) else repr(float(v)) for v in row))
        out.write("\n")
    text = out.getvalue()
    if dest is not None:
        dest.write(text)
    return text


def _header_value(lines, lineno: int, key: str, count: int) -> list[str]:
    if lineno >= len(lines):
        raise MapFormatError(f"line {lineno + 1}: missing '{key}' header")
    parts = lines[lineno].split()
    if not parts or parts[0] != key or len(parts) != count + 1:
        raise MapFormatError(f"line {lineno + 1}: expected '{key}' followed by {count} value(s)")
    return parts[1:]


def load_elevation_map(source: Source) -> ElevationMap:
    lines = _read_text(source).splitlines()
    try:
        (res,) = _header_value(lines, 0, "resolution", 1)
        ox, oy = _header_value(lines, 1, "origin", 2)
        rows, cols = _header_value(lines, 2, "size", 2)
        resolution = float(res)
        origin = (float(ox), float(oy))
        nrows, ncols = int(rows), int(cols)
    except MapFormatError:
        raise
    except ValueError as exc:
        raise MapFormatError(f"header: {exc}") from None
    if not (resolution > 0 and math.isfinite(resolution)):
        raise MapFormatError("line 1: resolution must be positive and finite")
    if not all(math.isfinite(v) for v in origin):
        raise MapFormatError("line 2: origin must be finite")
    if nrows <= 0 or ncols <= 0:
        raise MapFormatError("line 3: size must be positive")

    values: list[float] = []
    expected = nrows * ncols
    for lineno in range(3, len(lines)):
        for tok in lines[lineno].split():
            if len(values) >= expected:
                raise MapFormatError(f"line {lineno + 1}: more than {expected} height values")
            if tok == "nan":
                values.append(math.nan)
                continue
            try:
                v = float(tok)
            except ValueError:
                raise MapFormatError(f"line {lineno + 1}: bad height token {tok!r}") from None
            if not math.isfinite(v):
                raise MapFormatError(f"line {lineno + 1}: non-finite height {tok!r}")
            values.append(v)
    if len(values) != expected:
        raise MapFormatError(f"size mismatch: header declares {expected} cells, found {len(values)}")
    return ElevationMap(origin, resolution, np.array(values).reshape(nrows, ncols))


# --- point cloud --------------------------------------------------------------


class PointCloudMap:
    """Immutable 3D point cloud with an exact k-d tree index."""

    def __init__(self, points, leaf_size: int = 16):
        self.index = KdTree(points, leaf_size=leaf_size)
        self.points = self.index.points

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, q) -> tuple[np.ndarray, float]:
        return nearest(self, q)

    def distances(self, queries) -> np.ndarray:
        return self.index.query(np.asarray(queries, dtype=float).reshape(-1, 3))[0]


def nearest(cloud: PointCloudMap, q) -> tuple[np.ndarray, float]:
    """Exact nearest map point to ``q`` and its Euclidean distance."""
    if len(cloud) == 0:
        raise ValueError("empty map")
    d, i = cloud.index.query(np.asarray(q, dtype=float).reshape(3))
    return cloud.points[i].copy(), float(d)


def save_point_cloud(cloud, dest: Optional[IO[str]] = None) -> str:
    pts = cloud.points if isinstance(cloud, PointCloudMap) else np.asarray(cloud, dtype=float)
    text = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
    if dest is not None:
        dest.write(text)
    return text


def load_point_cloud(source: Source) -> PointCloudMap:
    rows = []
    for lineno, line in enumerate(_read_text(source).splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MapFormatError(f"line {lineno}: expected 3 values, got {len(parts)}")
        try:
            xyz = [float(p) for p in parts]
        except ValueError:
            raise MapFormatError(f"line {lineno}: non-numeric value in {s!r}") from None
        if not all(math.isfinite(v) for v in xyz):
            raise MapFormatError(f"line {lineno}: non-finite coordinate")
        rows.append(xyz)
    if not rows:
        raise MapFormatError("point cloud contains no points")
    return PointCloudMap(np.array(rows))


def voxel_downsample(points, spacing: float = 0.01) -> np.ndarray:
    """Keep the first point (in input order) falling in each cubic voxel."""
    pts = np.asarray(points, dtype=float)
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    keys = np.floor(pts / spacing).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return pts[np.sort(first)]


def rasterize(
    cloud,
    resolution: float,
    origin: Optional[tuple[float, float]] = None,
    shape: Optional[tuple[int, int]] = None,
) -> ElevationMap:
    """Per-cell maximum height of a point cloud; empty cells become invalid.

    Without ``origin``/``shape`` the grid is snapped to multiples of
    ``resolution`` and sized to cover every point.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    pts = cloud.points if isinstance(cloud, PointCloudMap) else np.asarray(cloud, dtype=float)
    if origin is None:
        origin = (
            math.floor(pts[:, 0].min() / resolution) * resolution,
            math.floor(pts[:, 1].min() / resolution) * resolution,
        )
    ox, oy = origin
    c = np.floor((pts[:, 0] - ox) / resolution).astype(np.int64)
    r = np.floor((pts[:, 1] - oy) / resolution).astype(np.int64)
    if shape is None:
        shape = (int(r.max()) + 1, int(c.max()) + 1)
    rows, cols = shape
    inside = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
    flat = np.full(rows * cols, -np.inf)
    np.maximum.at(flat, r[inside] * cols + c[inside], pts[inside, 2])
    flat[np.isneginf(flat)] = np.nan
    return ElevationMap((ox, oy), resolution, flat.reshape(rows, cols))


PriorMap = Union[ElevationMap, PointCloudMap]
