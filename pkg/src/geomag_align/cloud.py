"""Point-cloud transforms, merge scoring and ASCII XYZ/PLY files."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .errors import ContractViolation
from .geometry import is_rotation, vec3
from .io import atomic_write_text


@dataclass(frozen=True)
class PointCloud:
    points: NDArray[np.float64]
    sensor_id: str = "0"
    t: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ContractViolation("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)


def transform_cloud(cloud: PointCloud, pose: tuple[ArrayLike, ArrayLike]) -> PointCloud:
    """Map every point ``p`` to ``R p + T``."""
    R, T = np.asarray(pose[0], dtype=float), vec3(pose[1])
    if not is_rotation(R, tol=1e-9):
        raise ContractViolation("pose rotation is not a rotation matrix")
    return PointCloud(cloud.points @ R.T + T, cloud.sensor_id, cloud.t)


@dataclass(frozen=True)
class MergeError:
    rmse: float
    d_ab: NDArray[np.float64]
    d_ba: NDArray[np.float64]

    @property
    def distances(self) -> NDArray[np.float64]:
        return np.concatenate([self.d_ab, self.d_ba])

    def histogram(self, bins: int = 20, max_distance: float | None = None) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        d = self.distances
        hi = float(d.max()) if max_distance is None else max_distance
        return np.histogram(d, bins=bins, range=(0.0, hi if hi > 0 else 1.0))


def nearest_distances(src: ArrayLike, dst: ArrayLike) -> NDArray[np.float64]:
    """Distance from each point of ``src`` to its nearest neighbour in ``dst``."""
    d, _ = cKDTree(np.asarray(dst, dtype=float)).query(np.asarray(src, dtype=float), k=1)
    return np.asarray(d, dtype=float)


def merge_error(a: PointCloud, b: PointCloud) -> MergeError:
    """Symmetric nearest-neighbour RMSE over both directions (a→b and b→a)."""
    if len(a) == 0 or len(b) == 0:
        raise ContractViolation("merge_error needs two non-empty clouds")
    d_ab = nearest_distances(a.points, b.points)
    d_ba = nearest_distances(b.points, a.points)
    rmse = float(np.sqrt((np.sum(d_ab**2) + np.sum(d_ba**2)) / (len(d_ab) + len(d_ba))))
    return MergeError(rmse, d_ab, d_ba)


def merge_clouds(clouds: list[PointCloud], sensor_id: str = "merged") -> PointCloud:
    return PointCloud(np.vstack([c.points for c in clouds]), sensor_id, min(c.t for c in clouds))


# --- benchmark scene --------------------------------------------------------


def grid_scene(extent: float = 8.0, spacing: float = 1.0, height: float = 0.0) -> NDArray[np.float64]:
    """Sparse world-frame landmark grid: a floor plus two walls, ``spacing`` apart."""
    ticks = np.arange(0.0, extent + 1e-9, spacing)
    floor = np.array([[x, y, height] for x in ticks for y in ticks])
    wall_x = np.array([[0.0, y, height + z] for y in ticks for z in ticks[1:]])
    wall_y = np.array([[x, 0.0, height + z] for x in ticks[1:] for z in ticks[1:]])
    return np.vstack([floor, wall_x, wall_y])


def observe_scene(
    world_points: ArrayLike,
    pose: tuple[ArrayLike, ArrayLike],
    sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    sensor_id: str = "0",
) -> PointCloud:
    """Sensor-frame cloud of ``world_points`` seen from ``pose`` (sensor→world).

    ``sigma`` is the RMS length of the 3D noise displacement added to each
    point (per-axis standard deviation ``sigma / sqrt(3)``).
    """
    R, T = np.asarray(pose[0], dtype=float), vec3(pose[1])
    local = (np.asarray(world_points, dtype=float) - T) @ R
    if sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        local = local + rng.standard_normal(local.shape) * (sigma / np.sqrt(3.0))
    return PointCloud(local, sensor_id)


# --- files ------------------------------------------------------------------


def _rows(points: NDArray[np.float64]) -> str:
    return "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in points.tolist())


def format_xyz(cloud: PointCloud) -> str:
    return _rows(cloud.points)


def format_ply(cloud: PointCloud) -> str:
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property double x\nproperty double y\nproperty double z\nend_header\n"
    )
    return header + _rows(cloud.points)


def write_xyz(path: str | Path, cloud: PointCloud) -> None:
    atomic_write_text(path, format_xyz(cloud))


def read_xyz(path: str | Path, sensor_id: str = "0") -> PointCloud:
    pts = np.loadtxt(path, dtype=float, ndmin=2, comments="#")
    if pts.size and pts.shape[1] != 3:
        raise ContractViolation(f"{path}: expected 3 columns, found {pts.shape[1]}")
    return PointCloud(pts.reshape(-1, 3), sensor_id)


def write_ply(path: str | Path, cloud: PointCloud) -> None:
    atomic_write_text(path, format_ply(cloud))


def read_ply(path: str | Path, sensor_id: str = "0") -> PointCloud:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ContractViolation(f"{path}: not a PLY file")
    n = None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:1] == ["format"] and parts[1] != "ascii":
            raise ContractViolation(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        if line.strip() == "end_header":
            body = lines[i + 1 : i + 1 + (n or 0)]
            break
    else:
        raise ContractViolation(f"{path}: missing end_header")
    if n is None:
        raise ContractViolation(f"{path}: no vertex element")
    pts = np.array([[float(v) for v in row.split()[:3]] for row in body]).reshape(-1, 3)
    return PointCloud(pts, sensor_id)


def read_cloud(path: str | Path, sensor_id: str = "0") -> PointCloud:
    return read_ply(path, sensor_id) if str(path).lower().endswith(".ply") else read_xyz(path, sensor_id)


def write_cloud(path: str | Path, cloud: PointCloud) -> None:
    if str(path).lower().endswith(".ply"):
        write_ply(path, cloud)
    else:
        write_xyz(path, cloud)
