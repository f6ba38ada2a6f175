"""Orbit cameras, pinhole projection, per-pixel rays and Plucker ray maps.

Coordinate conventions (fixed so goldens are stable):
  * world frame is right-handed with +y up;
  * azimuth rotates about +y, elevation is measured from the equatorial
    plane, so a camera on an orbit sits at
    (r cos(e) sin(a), r sin(e), r cos(e) cos(a));
  * every camera looks at the world origin with zero roll (up = +y);
  * camera frame is the usual vision one: x right, y down, z forward;
  * image origin is the top-left corner, rays go through pixel centers
    (px + 0.5, py + 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .util import read_json, write_json

DEFAULT_RADIUS = 2.0
DEFAULT_FOV_DEG = 50.0
DEFAULT_SIZE = 64

# depth at or below this counts as behind the camera
MIN_DEPTH = 1e-8


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera on an object-centric orbit, looking at the origin."""

    azimuth_deg: float
    elevation_deg: float
    radius: float
    fov_deg: float
    width: int
    height: int
    world_to_cam: np.ndarray = field(init=False, repr=False, compare=False)
    position: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1 pixel")
        if abs(self.elevation_deg) >= 90.0:
            raise ValueError("elevation_deg must be in (-90, 90); the up vector degenerates at the poles")
        a = math.radians(self.azimuth_deg)
        e = math.radians(self.elevation_deg)
        pos = self.radius * np.array([math.cos(e) * math.sin(a), math.sin(e), math.cos(e) * math.cos(a)])
        fwd = -pos / np.linalg.norm(pos)            # z_cam: toward the origin
        up = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)              # x_cam
        down = np.cross(fwd, right)                 # y_cam: image-down
        rot = np.stack([right, down, fwd])          # rows map world -> camera
        w2c = np.concatenate([rot, (-rot @ pos)[:, None]], axis=1)
        object.__setattr__(self, "world_to_cam", w2c)
        object.__setattr__(self, "position", pos)

    @property
    def focal(self) -> float:
        """Focal length in pixels: f = height / (2 tan(fov/2))."""
        return self.height / (2.0 * math.tan(math.radians(self.fov_deg) / 2.0))

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    def to_dict(self) -> dict:
        return {
            "azimuth_deg": self.azimuth_deg,
            "elevation_deg": self.elevation_deg,
            "radius": self.radius,
            "fov_deg": self.fov_deg,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(
            azimuth_deg=float(d["azimuth_deg"]),
            elevation_deg=float(d["elevation_deg"]),
            radius=float(d["radius"]),
            fov_deg=float(d["fov_deg"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True)
class RayMap:
    """Per-pixel Plucker 6-vectors (d, o x d), unit direction first."""

    width: int
    height: int
    data: np.ndarray  # (height, width, 6)


def make_orbit_cameras(
    n_views: int,
    elevation_deg: float,
    radius: float = DEFAULT_RADIUS,
    fov_deg: float = DEFAULT_FOV_DEG,
    width: int = DEFAULT_SIZE,
    height: int = DEFAULT_SIZE,
) -> list[CameraPose]:
    """Cameras at azimuths 360*i/n_views sharing elevation, radius and fov."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    return [
        CameraPose(360.0 * i / n_views, elevation_deg, radius, fov_deg, width, height)
        for i in range(n_views)
    ]


def project_points(cam: CameraPose, points: np.ndarray):
    """Vectorized pinhole projection of an (N, 3) array of world points.

    Returns (pixels (N, 2), depths (N,), in_front (N,)); pixel values for
    behind-camera points are unusable and masked out by in_front.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rot = cam.world_to_cam[:, :3]
    trans = cam.world_to_cam[:, 3]
    pc = pts @ rot.T + trans
    depth = pc[:, 2]
    in_front = depth > MIN_DEPTH
    safe = np.where(in_front, depth, 1.0)
    f = cam.focal
    cx, cy = cam.principal_point
    pix = np.stack([f * pc[:, 0] / safe + cx, f * pc[:, 1] / safe + cy], axis=1)
    return pix, depth, in_front


def project(cam: CameraPose, point) -> Optional[tuple[np.ndarray, float]]:
    """Project one world point; None marks a point at or behind the camera."""
    pix, depth, ok = project_points(cam, np.asarray(point, dtype=float)[None, :])
    if not ok[0]:
        return None
    return pix[0], float(depth[0])


def pixel_ray(cam: CameraPose, px) -> Ray:
    """World-space ray through the center of pixel px = (x, y)."""
    x, y = float(px[0]), float(px[1])
    if not (0 <= x < cam.width and 0 <= y < cam.height):
        raise ValueError(f"pixel {px} outside [0,{cam.width})x[0,{cam.height})")
    f = cam.focal
    cx, cy = cam.principal_point
    d_cam = np.array([(x + 0.5 - cx) / f, (y + 0.5 - cy) / f, 1.0])
    rot = cam.world_to_cam[:, :3]
    d_world = rot.T @ d_cam
    d_world /= np.linalg.norm(d_world)
    return Ray(origin=cam.position.copy(), direction=d_world)


def plucker_map(cam: CameraPose) -> RayMap:
    """Ray map of (direction, origin x direction) for every pixel."""
    f = cam.focal
    cx, cy = cam.principal_point
    xs = (np.arange(cam.width) + 0.5 - cx) / f
    ys = (np.arange(cam.height) + 0.5 - cy) / f
    gx, gy = np.meshgrid(xs, ys)
    d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
    rot = cam.world_to_cam[:, :3]
    d_world = d_cam @ rot
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    moment = np.cross(np.broadcast_to(cam.position, d_world.shape), d_world)
    return RayMap(width=cam.width, height=cam.height, data=np.concatenate([d_world, moment], axis=-1))


def save_cameras(path, cams: Sequence[CameraPose]) -> None:
    """Serialize a camera set as a JSON array; derived matrices are not stored."""
    write_json(path, [c.to_dict() for c in cams])


def load_cameras(path) -> list[CameraPose]:
    return [CameraPose.from_dict(d) for d in read_json(path)]
