"""Camera view sets and the distance jitter used for paired depth renders.

Axis convention: right-handed, +Y up.  A view at azimuth ``a`` and elevation
``e`` places the camera at ``distance * (cos e sin a, sin e, cos e cos a)``
looking at the origin, so azimuth 0 / elevation 0 looks down -Z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import tomli

from .errors import ConfigError, InvalidInput

JITTER_LOW = 0.9
JITTER_HIGH = 1.1
CORNER_ELEVATION = math.pi / 6


@dataclass(frozen=True)
class CameraView:
    azimuth: float
    elevation: float
    distance: float = 1.0

    def __post_init__(self):
        for name in ("azimuth", "elevation", "distance"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.distance > 0:
            raise InvalidInput(f"view distance must be positive, got {self.distance}")
        if not -math.pi / 2 <= self.elevation <= math.pi / 2:
            raise InvalidInput(f"elevation {self.elevation} outside [-pi/2, pi/2]")

    def direction(self) -> np.ndarray:
        """Unit vector from the camera toward the origin."""
        ce = math.cos(self.elevation)
        pos = np.array([ce * math.sin(self.azimuth), math.sin(self.elevation), ce * math.cos(self.azimuth)])
        return -pos / np.linalg.norm(pos)

    def with_distance(self, distance: float) -> CameraView:
        return CameraView(self.azimuth, self.elevation, distance)


@dataclass(frozen=True)
class ViewSet:
    views: tuple[CameraView, ...]
    kind: str

    def __post_init__(self):
        expected = {"orthogonal6": 6, "spherical10": 10}
        if self.kind in expected and len(self.views) != expected[self.kind]:
            raise InvalidInput(f"{self.kind} needs {expected[self.kind]} views, got {len(self.views)}")
        if not self.views:
            raise InvalidInput("empty view set")

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    def __getitem__(self, i):
        return self.views[i]

    def to_toml(self) -> str:
        lines = [f'kind = "{self.kind}"', ""]
        for v in self.views:
            lines += ["[[views]]", f"azimuth = {v.azimuth!r}", f"elevation = {v.elevation!r}",
                      f"distance = {v.distance!r}", ""]
        return "\n".join(lines)

    @classmethod
    def from_toml(cls, text: str) -> ViewSet:
        try:
            doc = tomli.loads(text)
            views = tuple(CameraView(float(v["azimuth"]), float(v["elevation"]), float(v.get("distance", 1.0)))
                          for v in doc["views"])
            return cls(views, str(doc.get("kind", "custom")))
        except (tomli.TOMLDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad view set: {exc}") from exc


def orthogonal_views(distance: float = 1.0) -> ViewSet:
    """Front, back, left, right, top, bottom."""
    half = math.pi / 2
    angles = [(0.0, 0.0), (math.pi, 0.0), (half, 0.0), (-half, 0.0), (0.0, half), (0.0, -half)]
    return ViewSet(tuple(CameraView(a, e, distance) for a, e in angles), "orthogonal6")


def spherical_views(distance: float = 1.0, corner_elevation: float = CORNER_ELEVATION) -> ViewSet:
    """The six orthogonal views followed by four raised corner views."""
    q = math.pi / 4
    corners = tuple(CameraView(a, corner_elevation, distance) for a in (q, 3 * q, -3 * q, -q))
    return ViewSet(orthogonal_views(distance).views + corners, "spherical10")


def view_set(name: str) -> ViewSet:
    if name in ("orth6", "orthogonal6"):
        return orthogonal_views()
    if name in ("sph10", "spherical10"):
        return spherical_views()
    raise ConfigError(f"unknown view set {name!r}")


def _draw_distance(rng: np.random.Generator) -> float:
    d = JITTER_LOW + (JITTER_HIGH - JITTER_LOW) * rng.random()
    # rounding can land exactly on the open upper bound
    return d if d < JITTER_HIGH else math.nextafter(JITTER_HIGH, 0.0)


def jitter_distance(view: CameraView, rng: np.random.Generator) -> tuple[CameraView, CameraView]:
    """Two copies of ``view`` with independent distances in [0.9, 1.1)."""
    d1 = _draw_distance(rng)
    d2 = _draw_distance(rng)
    return view.with_distance(d1), view.with_distance(d2)
