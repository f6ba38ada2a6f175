"""Deterministic multi-view fusion: silhouettes, voxel carving,
visibility-aware median colorization and Gaussian emission.

This is the feed-forward path that turns a stack of (possibly inconsistent)
view images into one global 3D model. Carving tolerates a fraction of bad
silhouettes via min_views; colorization uses per-channel medians so a few
corrupted views cannot drag a voxel color.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import backend
from .geometry import CameraPose, project_points
from .gsplat import GaussianCloud, Image

GRID_EXTENT = 1.0    # grid spans [-extent, extent]^3


@dataclass
class OccupancyGrid:
    """res^3 boolean occupancy over [-1, 1]^3 with per-voxel colors."""

    res: int
    occupied: np.ndarray   # (res, res, res) bool, axes (x, y, z)
    color: np.ndarray      # (res, res, res, 3), defined where occupied

    def __post_init__(self):
        if self.res < 2:
            raise ValueError("grid resolution must be >= 2")

    @property
    def voxel_size(self) -> float:
        return 2.0 * GRID_EXTENT / self.res

    def centers(self, mask: np.ndarray | None = None) -> np.ndarray:
        """World centers of voxels selected by mask (all occupied if None)."""
        if mask is None:
            mask = self.occupied
        idx = np.argwhere(mask)
        return -GRID_EXTENT + (idx + 0.5) * self.voxel_size


@dataclass(frozen=True)
class ReconConfig:
    tau: float = 0.08
    res: int = 64
    min_views_frac: float = 0.9
    background: tuple = (0.5, 0.5, 0.5)

    def min_views(self, n_views: int) -> int:
        return max(1, math.ceil(self.min_views_frac * n_views))


def silhouette(img: Image, background, tau: float) -> np.ndarray:
    """Foreground mask: max-channel |pixel - background| > tau."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    bg = np.asarray(background, dtype=float)
    return np.max(np.abs(img.pixels - bg), axis=2) > tau


def _grid_centers(res: int) -> np.ndarray:
    """(res^3, 3) voxel centers in C index order, axes (x, y, z)."""
    ax = -GRID_EXTENT + (np.arange(res) + 0.5) * (2.0 * GRID_EXTENT / res)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)


def carve(masks: Sequence[np.ndarray], cams: Sequence[CameraPose], res: int,
          min_views: int) -> OccupancyGrid:
    """Occupy voxels whose centers land inside >= min_views foreground masks."""
    if len(masks) != len(cams):
        raise ValueError("need one mask per camera")
    if not 1 <= min_views <= len(cams):
        raise ValueError(f"min_views must lie in [1, {len(cams)}]")
    centers = _grid_centers(res)
    votes = np.zeros(centers.shape[0], dtype=np.int32)
    for mask, cam in zip(masks, cams):
        pix, _depth, in_front = project_points(cam, centers)
        px = np.floor(pix[:, 0]).astype(np.int64)
        py = np.floor(pix[:, 1]).astype(np.int64)
        inside = in_front & (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
        hit = np.zeros(centers.shape[0], dtype=bool)
        sel = np.nonzero(inside)[0]
        hit[sel] = mask[py[sel], px[sel]]
        votes += hit
    occupied = (votes >= min_views).reshape(res, res, res)
    return OccupancyGrid(res=res, occupied=occupied, color=np.zeros((res, res, res, 3)))


def colorize(grid: OccupancyGrid, images: Sequence[Image],
             cams: Sequence[CameraPose]) -> OccupancyGrid:
    """Median color over the views that see each voxel.

    A view sees a voxel when ray samples every half voxel from the camera
    to the voxel center hit no other occupied voxel first. Voxels seen by
    no view inherit the mean color of the seen ones.
    """
    res = grid.res
    occ_flat = np.ascontiguousarray(grid.occupied.reshape(-1).astype(np.uint8))
    idx = np.argwhere(grid.occupied)
    n = idx.shape[0]
    color = np.zeros((res, res, res, 3))
    if n == 0:
        return OccupancyGrid(res=res, occupied=grid.occupied.copy(), color=color)
    centers = np.ascontiguousarray(grid.centers())
    flat_idx = np.ascontiguousarray((idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2])
    step = grid.voxel_size / 2.0

    samples = np.full((len(cams), n, 3), np.nan)
    for vi, (img, cam) in enumerate(zip(images, cams)):
        visible = backend.march_visibility(
            np.ascontiguousarray(cam.position), centers, flat_idx, occ_flat, res, step
        ).astype(bool)
        pix, _depth, in_front = project_points(cam, centers)
        px = np.floor(pix[:, 0]).astype(np.int64)
        py = np.floor(pix[:, 1]).astype(np.int64)
        ok = visible & in_front & (px >= 0) & (px < cam.width) & (py >= 0) & (py < cam.height)
        sel = np.nonzero(ok)[0]
        samples[vi, sel] = img.pixels[py[sel], px[sel]]

    seen = ~np.isnan(samples[:, :, 0]).all(axis=0)
    med = np.zeros((n, 3))
    if seen.any():
        med[seen] = np.nanmedian(samples[:, seen], axis=0)
        med[~seen] = med[seen].mean(axis=0)
    color[idx[:, 0], idx[:, 1], idx[:, 2]] = med
    return OccupancyGrid(res=res, occupied=grid.occupied.copy(), color=color)


SURFACE_SCALE = 0.7      # Gaussian scale as a fraction of the voxel size
SURFACE_ALPHA = 0.8


def to_gaussians(grid: OccupancyGrid) -> GaussianCloud:
    """One isotropic Gaussian per occupied surface voxel (interior skipped)."""
    occ = grid.occupied
    if not occ.any():
        return GaussianCloud.empty()
    padded = np.pad(occ, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1, 1:-1] & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1] & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2] & padded[1:-1, 1:-1, 2:]
    )
    surface = occ & ~interior
    idx = np.argwhere(surface)
    if idx.shape[0] == 0:
        return GaussianCloud.empty()
    centers = grid.centers(surface)
    colors = np.clip(grid.color[idx[:, 0], idx[:, 1], idx[:, 2]], 0.0, 1.0)
    n = idx.shape[0]
    s = SURFACE_SCALE * grid.voxel_size
    quat = np.zeros((n, 4))
    quat[:, 0] = 1.0
    return GaussianCloud(
        p=centers,
        s=np.full((n, 3), s),
        q=quat,
        alpha=np.full(n, SURFACE_ALPHA),
        c=colors,
    )


def reconstruct(images: Sequence[Image], cams: Sequence[CameraPose],
                cfg: ReconConfig = ReconConfig()) -> GaussianCloud:
    """silhouette -> carve -> colorize -> to_gaussians, fully deterministic."""
    if len(images) != len(cams):
        raise ValueError("need one image per camera")
    masks = [silhouette(img, cfg.background, cfg.tau) for img in images]
    grid = carve(masks, cams, cfg.res, cfg.min_views(len(cams)))
    if not grid.occupied.any():
        return GaussianCloud.empty()
    grid = colorize(grid, images, cams)
    return to_gaussians(grid)


def save_grid(path, grid: OccupancyGrid) -> None:
    """Debug dump: one JSON header line, then the raw occupancy bytes
    (uint8 per voxel, C order) and float32 colors of occupied voxels."""
    occ = grid.occupied.astype(np.uint8)
    colors = grid.color[grid.occupied].astype("<f4")
    header = json.dumps({"res": grid.res, "extent": GRID_EXTENT}).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(occ.tobytes())
        fh.write(colors.tobytes())


def load_grid(path) -> OccupancyGrid:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        res = int(header["res"])
        occ = np.frombuffer(fh.read(res**3), dtype=np.uint8).reshape(res, res, res).astype(bool)
        colors = np.frombuffer(fh.read(), dtype="<f4").reshape(-1, 3)
    grid = OccupancyGrid(res=res, occupied=occ, color=np.zeros((res, res, res, 3)))
    grid.color[occ] = colors.astype(float)
    return grid
