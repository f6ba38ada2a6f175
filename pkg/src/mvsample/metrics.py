"""Image fidelity and multi-view consistency metrics.

PSNR and SSIM are the standard formulations with peak 1.0; cross-view
consistency uses exhaustive integer block matching plus nearest-pixel
warping, which is deterministic and has no learned components. Flat
background regions carry no matching signal, so blocks below a foreground
fraction are excluded, mirroring the reconstruction silhouette rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gsplat import Image
from .recon import OccupancyGrid

PSNR_CAP = 99.0
DEFAULT_BLOCK = 8
DEFAULT_RADIUS = 4
FOREGROUND_TAU = 0.08
MIN_FOREGROUND_FRAC = 0.25


@dataclass(frozen=True)
class FlowField:
    """Per-pixel integer displacements estimated per block."""

    width: int
    height: int
    dx: np.ndarray      # (H, W) int
    dy: np.ndarray      # (H, W) int
    valid: np.ndarray   # (H, W) bool


def _check_dims(a: Image, b: Image) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(f"image dimensions differ: {(a.width, a.height)} vs {(b.width, b.height)}")


def psnr(a: Image, b: Image) -> float:
    """10 log10(1 / MSE) in dB over all channels, capped at 99 for identical inputs."""
    _check_dims(a, b)
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _local_mean(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Valid-mode weighted local means via sliding windows."""
    k = window.shape[0]
    views = np.lib.stride_tricks.sliding_window_view(x, (k, k))
    return np.einsum("ijkl,kl->ij", views, window)


def ssim(a: Image, b: Image, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma 1.5, valid region only."""
    _check_dims(a, b)
    if a.width < 11 or a.height < 11:
        raise ValueError("ssim needs images at least 11x11")
    window = _gaussian_window()
    c1 = k1 * k1
    c2 = k2 * k2
    vals = []
    for ch in range(3):
        x = a.pixels[:, :, ch]
        y = b.pixels[:, :, ch]
        mx = _local_mean(x, window)
        my = _local_mean(y, window)
        sxx = _local_mean(x * x, window) - mx * mx
        syy = _local_mean(y * y, window) - my * my
        sxy = _local_mean(x * y, window) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def _foreground(pixels: np.ndarray, background) -> np.ndarray:
    bg = np.asarray(background, dtype=float)
    return np.max(np.abs(pixels - bg), axis=2) > FOREGROUND_TAU


def block_flow(src: Image, dst: Image, block: int = DEFAULT_BLOCK,
               radius: int = DEFAULT_RADIUS, background=(0.5, 0.5, 0.5),
               tau: float = FOREGROUND_TAU) -> FlowField:
    """Exhaustive integer block matching from src to dst.

    Per block the (dx, dy) minimizing the sum of squared differences wins;
    ties break toward the smallest displacement norm, then lexicographic
    (dx, dy). Blocks whose foreground fraction is below 0.25 are invalid,
    as are candidate displacements that leave the image.
    """
    _check_dims(src, dst)
    h, w = src.height, src.width
    n_by, n_bx = h // block, w // block
    hb, wb = n_by * block, n_bx * block
    fg = np.max(np.abs(src.pixels - np.asarray(background, dtype=float)), axis=2) > tau
    fg_frac = fg[:hb, :wb].reshape(n_by, block, n_bx, block).mean(axis=(1, 3))
    active = fg_frac >= MIN_FOREGROUND_FRAC

    # candidates sorted by (norm^2, dx, dy); first strict SSD improvement wins
    cands = sorted(
        ((dx, dy) for dx in range(-radius, radius + 1) for dy in range(-radius, radius + 1)),
        key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
    )
    best_ssd = np.full((n_by, n_bx), np.inf)
    best_dx = np.zeros((n_by, n_bx), dtype=np.int32)
    best_dy = np.zeros((n_by, n_bx), dtype=np.int32)
    sq = np.empty((h, w))
    for dx, dy in cands:
        sq.fill(np.inf)
        ys0, ys1 = max(0, -dy), min(h, h - dy)
        xs0, xs1 = max(0, -dx), min(w, w - dx)
        if ys0 >= ys1 or xs0 >= xs1:
            continue
        d = src.pixels[ys0:ys1, xs0:xs1] - dst.pixels[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
        sq[ys0:ys1, xs0:xs1] = np.sum(d * d, axis=2)
        ssd = sq[:hb, :wb].reshape(n_by, block, n_bx, block).sum(axis=(1, 3))
        better = active & (ssd < best_ssd)
        best_ssd[better] = ssd[better]
        best_dx[better] = dx
        best_dy[better] = dy

    found = active & np.isfinite(best_ssd)
    dx_out = np.zeros((h, w), dtype=np.int32)
    dy_out = np.zeros((h, w), dtype=np.int32)
    valid = np.zeros((h, w), dtype=bool)
    expand = lambda a: np.repeat(np.repeat(a, block, axis=0), block, axis=1)
    dx_out[:hb, :wb] = expand(np.where(found, best_dx, 0))
    dy_out[:hb, :wb] = expand(np.where(found, best_dy, 0))
    valid[:hb, :wb] = expand(found)
    return FlowField(width=w, height=h, dx=dx_out, dy=dy_out, valid=valid)


def _warp_residual(src: Image, dst: Image, flow: FlowField, background) -> Optional[tuple[float, int]]:
    """Sum of squared residuals between src and dst warped back by flow."""
    h, w = src.height, src.width
    ys, xs = np.mgrid[0:h, 0:w]
    ty = ys + flow.dy
    tx = xs + flow.dx
    ok = flow.valid & (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
    ok &= _foreground(src.pixels, background)
    if not ok.any():
        return None
    diff = src.pixels[ok] - dst.pixels[ty[ok], tx[ok]]
    return float(np.sum(diff * diff)), int(diff.size)


def warp_rmse(frames: Sequence[Image], interval: int = 1,
              background=(0.5, 0.5, 0.5)) -> Optional[float]:
    """Mean warping RMSE over cyclic frame pairs (i, i + interval).

    Flow is estimated per pair with block_flow, the later frame is warped
    back by nearest-pixel displacement, and the RMSE runs over valid
    foreground pixels. None when no pair has any valid pixel.
    """
    n = len(frames)
    if n < 2 and interval != 0:
        raise ValueError("need at least 2 frames")
    rmses = []
    for i in range(n):
        j = (i + interval) % n
        flow = block_flow(frames[i], frames[j], background=background)
        res = _warp_residual(frames[i], frames[j], flow, background)
        if res is None:
            continue
        sq, cnt = res
        rmses.append(math.sqrt(sq / cnt))
    if not rmses:
        return None
    return float(np.mean(rmses))


def chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between point sets, halved."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("chamfer distance needs non-empty point sets")
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    fwd = np.sqrt(d2.min(axis=1)).mean()
    rev = np.sqrt(d2.min(axis=0)).mean()
    return float(0.5 * (fwd + rev))


def volume_iou(a: OccupancyGrid, b: OccupancyGrid) -> float:
    """Intersection over union of occupancy; two empty grids count as 1."""
    if a.res != b.res:
        raise ValueError(f"grid resolutions differ: {a.res} vs {b.res}")
    inter = int(np.sum(a.occupied & b.occupied))
    union = int(np.sum(a.occupied | b.occupied))
    if union == 0:
        return 1.0
    return inter / union
