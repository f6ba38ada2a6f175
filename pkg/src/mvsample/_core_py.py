"""Pure-numpy implementations of the hot kernels.

These are the reference semantics for the compiled extension in _core.pyx;
mvsample.backend picks whichever is available at import time. Both process
splats in the caller-supplied order, so per-pixel compositing order (and
therefore the output) does not depend on the backend or on how rows are
banded across threads.
"""

from __future__ import annotations

import numpy as np

ALPHA_MIN = 1.0 / 255.0
ALPHA_CAP = 0.99


def composite_splats(means, conics, depths, alphas, colors, bounds,
                     out_color, out_trans, out_depth, row0, row1):
    """Front-to-back alpha compositing of pre-sorted splats into rows [row0, row1).

    means   (N, 2) pixel-space splat centers
    conics  (N, 3) packed inverse 2x2 covariance (a, b, c) for [[a, b], [b, c]]
    bounds  (N, 4) int32 half-open pixel rects (x0, x1, y0, y1)
    out_color (H, W, 3) premultiplied color accumulator (zeros on entry)
    out_trans (H, W) transmittance accumulator (ones on entry)
    out_depth (H, W) alpha-weighted depth accumulator (zeros on entry)
    """
    n = means.shape[0]
    for i in range(n):
        x0, x1, y0, y1 = bounds[i]
        y0 = max(int(y0), row0)
        y1 = min(int(y1), row1)
        if y0 >= y1 or x0 >= x1:
            continue
        xs = np.arange(x0, x1) + 0.5 - means[i, 0]
        ys = np.arange(y0, y1) + 0.5 - means[i, 1]
        dx = xs[None, :]
        dy = ys[:, None]
        ca, cb, cc = conics[i]
        q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
        ap = alphas[i] * np.exp(-0.5 * q)
        np.minimum(ap, ALPHA_CAP, out=ap)
        ap[ap < ALPHA_MIN] = 0.0
        t = out_trans[y0:y1, x0:x1]
        w = ap * t
        out_color[y0:y1, x0:x1] += w[:, :, None] * colors[i]
        out_depth[y0:y1, x0:x1] += depths[i] * w
        t *= 1.0 - ap


def march_visibility(origin, targets, target_idx, occupancy, res, step):
    """Visibility of target voxel centers from a camera origin.

    A target is visible when ray samples at distances k*step (k >= 1,
    k*step < distance to the center) hit no occupied voxel other than the
    target itself. occupancy is a flat uint8 view of a (res, res, res)
    grid over [-1, 1]^3, C-order with axes (x, y, z).
    """
    targets = np.asarray(targets, dtype=float)
    m = targets.shape[0]
    visible = np.ones(m, dtype=np.uint8)
    if m == 0:
        return visible
    delta = targets - origin[None, :]
    dist = np.sqrt(np.sum(delta * delta, axis=1))
    unit = delta / dist[:, None]
    half_res = res / 2.0
    max_k = int(np.ceil(dist.max() / step))
    occ = occupancy
    for k in range(1, max_k):
        t = k * step
        live = (visible == 1) & (t < dist)
        if not live.any():
            break
        p = origin[None, :] + t * unit[live]
        ix = np.floor((p[:, 0] + 1.0) * half_res).astype(np.int64)
        iy = np.floor((p[:, 1] + 1.0) * half_res).astype(np.int64)
        iz = np.floor((p[:, 2] + 1.0) * half_res).astype(np.int64)
        inside = (
            (ix >= 0) & (ix < res) & (iy >= 0) & (iy < res) & (iz >= 0) & (iz < res)
        )
        flat = (ix * res + iy) * res + iz
        blocked = np.zeros(len(flat), dtype=bool)
        safe = np.where(inside, flat, 0)
        hits = inside & (occ[safe] != 0) & (safe != target_idx[live])
        blocked |= hits
        idx_live = np.nonzero(live)[0]
        visible[idx_live[blocked]] = 0
    return visible
