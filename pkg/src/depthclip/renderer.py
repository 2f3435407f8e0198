"""Point-cloud to depth-map projection with dilated splatting.

Every projected point claims an R x R block of pixels: pixel ``(u, v)``
matches a point whose projection is ``(px, py)`` when
``u - R/2 <= px < u + R/2`` and likewise for ``v``.  Each matched pixel
keeps the nearest depth (``minimum`` rule) or the ratio
``sum(z / (z + eps)) / sum(1 / z)`` (``weighted`` rule).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInput
from .geometry import PointCloud
from .views import CameraView, ViewSet

DEPTH_RULES = ("minimum", "weighted")
NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RenderConfig:
    resolution: int = 224
    dilation: int = 2
    depth_rule: str = "minimum"
    focal: float = 180.0
    # camera-to-origin length is camera_scale * view.distance
    camera_scale: float = 2.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.resolution < 8:
            raise InvalidInput("resolution must be >= 8")
        if self.dilation < 1:
            raise InvalidInput("dilation must be >= 1")
        if self.depth_rule not in DEPTH_RULES:
            raise InvalidInput(f"depth_rule must be one of {DEPTH_RULES}")
        if not (self.focal > 0 and self.camera_scale > 0 and self.epsilon > 0):
            raise InvalidInput("focal, camera_scale and epsilon must be positive")


def dense_config(cfg: RenderConfig) -> RenderConfig:
    """The richer render used as the frozen tower's input."""
    return replace(cfg, dilation=4, depth_rule="weighted")


@dataclass(frozen=True, eq=False)
class DepthMap:
    depth: np.ndarray  # (H, W), camera-space z of the winning point, 0 where empty
    occupied: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @classmethod
    def empty(cls, height: int, width: int | None = None) -> DepthMap:
        width = height if width is None else width
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool))


def camera_basis(view: CameraView) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(right, down, forward) rows of the world-to-camera rotation."""
    forward = view.direction()
    right = np.array([math.cos(view.azimuth), 0.0, -math.sin(view.azimuth)])
    down = np.cross(forward, right)
    return right, down, forward


def to_camera(points: np.ndarray, view: CameraView, cfg: RenderConfig) -> np.ndarray:
    """World points to camera space: +x right, +y down the image, +z into the screen."""
    right, down, forward = camera_basis(view)
    eye = -forward * (view.distance * cfg.camera_scale)
    rel = points - eye
    return np.stack([rel @ right, rel @ down, rel @ forward], axis=1)


def project_point(p, cfg: RenderConfig) -> tuple[int, int] | None:
    """Pixel of a camera-space point, or None when it lies behind the camera.

    Out-of-frame pixels are returned unclipped.
    """
    x, y, z = (float(c) for c in p)
    if z <= 0:
        return None
    half = cfg.resolution / 2
    return math.ceil(cfg.focal * x / z + half), math.ceil(cfg.focal * y / z + half)


def _projected(cam: np.ndarray, cfg: RenderConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = cam[:, 2]
    front = z > 0
    zf = np.where(front, z, 1.0)
    half = cfg.resolution / 2
    margin = cfg.dilation + 2
    lo, hi = -margin, cfg.resolution + margin
    # clipping far outside the frame cannot change which in-frame pixels match
    px = np.clip(np.ceil(cfg.focal * cam[:, 0] / zf + half), lo, hi).astype(np.int64)
    py = np.clip(np.ceil(cfg.focal * cam[:, 1] / zf + half), lo, hi).astype(np.int64)
    return px[front], py[front], z[front]


def splat_offsets(dilation: int) -> np.ndarray:
    """Integer offsets o with -R/2 <= -o < R/2, i.e. the pixels a point claims."""
    return np.arange(1 - (dilation + 1) // 2, dilation // 2 + 1)


def _check_normalized(cloud: PointCloud) -> None:
    if cloud.max_norm() > 1 + NORM_TOLERANCE:
        raise InvalidInput(f"cloud {cloud.id!r} is not unit-sphere normalized")


def render(cloud: PointCloud, view: CameraView, cfg: RenderConfig) -> DepthMap:
    _check_normalized(cloud)
    size = cfg.resolution
    px, py, z = _projected(to_camera(cloud.points, view, cfg), cfg)
    offs = splat_offsets(cfg.dilation)
    # point-major order, so per-pixel accumulation follows point index order
    xs = (px[:, None, None] + offs[None, None, :]).repeat(len(offs), axis=1)
    ys = (py[:, None, None] + offs[None, :, None]).repeat(len(offs), axis=2)
    zs = np.broadcast_to(z[:, None, None], xs.shape)
    inside = (xs >= 0) & (xs < size) & (ys >= 0) & (ys < size)
    flat = (ys * size + xs)[inside]
    zs = zs[inside]
    if cfg.depth_rule == "minimum":
        depth = np.full(size * size, np.inf)
        np.minimum.at(depth, flat, zs)
        occupied = np.isfinite(depth)
        depth[~occupied] = 0.0
    else:
        num = np.bincount(flat, weights=zs / (zs + cfg.epsilon), minlength=size * size)
        den = np.bincount(flat, weights=1.0 / zs, minlength=size * size)
        occupied = den > 0
        depth = np.zeros(size * size)
        depth[occupied] = num[occupied] / den[occupied]
    return DepthMap(depth.reshape(size, size), occupied.reshape(size, size))


def render_views(cloud: PointCloud, views: ViewSet, cfg: RenderConfig, threads: int = 1) -> list[DepthMap]:
    if threads <= 1:
        return [render(cloud, v, cfg) for v in views]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda v: render(cloud, v, cfg), views))


# -- reference path -----------------------------------------------------------

def matching_set(cam_points: np.ndarray, pixel: tuple[int, int], dilation: int, cfg: RenderConfig) -> np.ndarray:
    """Indices of camera-space points whose projection falls in the pixel's dilated window."""
    u, v = pixel
    half = dilation / 2
    members = []
    for i, p in enumerate(cam_points):
        proj = project_point(p, cfg)
        if proj is None:
            continue
        if u - half <= proj[0] < u + half and v - half <= proj[1] < v + half:
            members.append(i)
    return np.array(members, dtype=np.int64)


def render_reference(cloud: PointCloud, view: CameraView, cfg: RenderConfig) -> DepthMap:
    """Per-pixel evaluation of the matching-set rule, one image row at a time.

    Independent of the splatting arithmetic in :func:`render`; used as its oracle.
    """
    _check_normalized(cloud)
    size = cfg.resolution
    cam = to_camera(cloud.points, view, cfg)
    cam = cam[cam[:, 2] > 0]
    z = cam[:, 2]
    half = size / 2
    fx = np.ceil(cfg.focal * cam[:, 0] / z + half)
    fy = np.ceil(cfg.focal * cam[:, 1] / z + half)
    r = cfg.dilation / 2
    pixels = np.arange(size, dtype=np.float64)
    # col_match[u, j]: point j satisfies the column inequality for pixel column u
    col_match = (pixels[:, None] - r <= fx[None, :]) & (fx[None, :] < pixels[:, None] + r)
    order = np.argsort(fy, kind="stable")
    fy_sorted = fy[order]
    depth = np.zeros((size, size))
    occupied = np.zeros((size, size), dtype=bool)
    if cfg.depth_rule == "minimum":
        val = z
    else:
        val = z / (z + cfg.epsilon)
        inv = 1.0 / z
    for row in range(size):
        lo = np.searchsorted(fy_sorted, row - r, side="left")
        hi = np.searchsorted(fy_sorted, row + r, side="left")
        if lo == hi:
            continue
        in_row = np.sort(order[lo:hi])
        match = col_match[:, in_row]
        hit = match.any(axis=1)
        if cfg.depth_rule == "minimum":
            depth[row] = np.where(match, val[in_row], np.inf).min(axis=1)
        else:
            num = np.where(match, val[in_row], 0.0).sum(axis=1)
            den = np.where(match, inv[in_row], 0.0).sum(axis=1)
            depth[row] = num / np.where(hit, den, 1.0)
        depth[row, ~hit] = 0.0
        occupied[row] = hit
    return DepthMap(depth, occupied)
