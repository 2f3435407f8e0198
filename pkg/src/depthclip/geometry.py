"""Point-cloud container, unit-sphere normalization and farthest-point sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (n, 3) float64
    id: str = ""

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInput(f"points must have shape (n, 3), got {pts.shape}")
        if len(pts) == 0:
            raise InvalidInput("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("point cloud has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def max_norm(self) -> float:
        return float(np.sqrt(np.max(np.sum(self.points**2, axis=1))))


def normalize(cloud: PointCloud) -> PointCloud:
    """Center on the centroid and scale so the furthest point sits at radius 1.

    A cloud whose points all coincide collapses onto the origin with scale 1.
    """
    pts = cloud.points - cloud.points.mean(axis=0)
    radius = np.sqrt(np.max(np.sum(pts**2, axis=1)))
    # centering identical points leaves rounding residue, not a shape
    if radius <= 1e-12 * max(1.0, float(np.abs(cloud.points).max())):
        return PointCloud(np.zeros_like(pts), cloud.id)
    pts = pts / radius
    return PointCloud(pts, cloud.id)


def farthest_point_sample(cloud: PointCloud, k: int) -> PointCloud:
    """Greedy FPS seeded at index 0; ties go to the lowest index."""
    if k < 1:
        raise InvalidInput("k must be >= 1")
    chosen = _fps_indices(cloud.points, min(k, len(cloud)))
    return PointCloud(cloud.points[chosen], cloud.id)


@numba.njit(cache=True)
def _fps_indices(pts, k):
    n = pts.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    dist = np.full(n, np.inf)
    chosen[0] = 0
    dist[0] = -1.0  # selected points are never reselected, even among duplicates
    last = 0
    for i in range(1, k):
        best = -1
        best_d = -np.inf
        for j in range(n):
            dx = pts[j, 0] - pts[last, 0]
            dy = pts[j, 1] - pts[last, 1]
            dz = pts[j, 2] - pts[last, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < dist[j]:
                dist[j] = d
            if dist[j] > best_d:  # strict: the lowest index wins ties
                best_d = dist[j]
                best = j
        last = best
        dist[last] = -1.0
        chosen[i] = last
    return chosen
