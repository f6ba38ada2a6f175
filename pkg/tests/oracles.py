"""Independent reference implementations used as test oracles.

Everything here is written from first principles (scalar loops, no shared
helpers from the package) so the fast paths are checked against a second
route, not against themselves.
"""

import math

import numpy as np


def quat_rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def brute_force_render(cloud, cam, background):
    """Per-pixel compositor evaluating every splat with no screen bound."""
    f = cam.height / (2.0 * math.tan(math.radians(cam.fov_deg) / 2.0))
    cx, cy = cam.width / 2.0, cam.height / 2.0
    rot = cam.world_to_cam[:, :3]
    trans = cam.world_to_cam[:, 3]

    splats = []
    for i in range(len(cloud)):
        p_cam = rot @ cloud.p[i] + trans
        depth = p_cam[2]
        if depth <= 0.05:
            continue
        r3 = quat_rot(cloud.q[i])
        sigma = r3 @ np.diag(cloud.s[i] ** 2) @ r3.T
        cov_cam = rot @ sigma @ rot.T
        x, y, z = p_cam
        jac = np.array([[f / z, 0.0, -f * x / z**2], [0.0, f / z, -f * y / z**2]])
        cov2 = jac @ cov_cam @ jac.T + 0.3 * np.eye(2)
        mean = np.array([f * x / z + cx, f * y / z + cy])
        splats.append((depth, i, mean, np.linalg.inv(cov2), float(cloud.alpha[i]), cloud.c[i]))
    splats.sort(key=lambda s: (s[0], s[1]))

    img = np.zeros((cam.height, cam.width, 3))
    for py in range(cam.height):
        for px in range(cam.width):
            t = 1.0
            acc = np.zeros(3)
            for depth, _i, mean, conic, alpha, color in splats:
                d = np.array([px + 0.5 - mean[0], py + 0.5 - mean[1]])
                ap = min(0.99, alpha * math.exp(-0.5 * float(d @ conic @ d)))
                if ap < 1.0 / 255.0:
                    continue
                acc = acc + color * (ap * t)
                t *= 1.0 - ap
            img[py, px] = acc + t * np.asarray(background, dtype=float)
    return np.clip(img, 0.0, 1.0)


def scalar_block_flow(src, dst, block, radius, background, tau):
    """Naive per-block exhaustive search; returns (dx, dy, valid) block grids."""
    h, w = src.shape[0], src.shape[1]
    n_by, n_bx = h // block, w // block
    bg = np.asarray(background, dtype=float)
    dx_out = np.zeros((n_by, n_bx), dtype=int)
    dy_out = np.zeros((n_by, n_bx), dtype=int)
    valid = np.zeros((n_by, n_bx), dtype=bool)
    cands = sorted(
        ((dx, dy) for dx in range(-radius, radius + 1) for dy in range(-radius, radius + 1)),
        key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
    )
    for by in range(n_by):
        for bx in range(n_bx):
            y0, x0 = by * block, bx * block
            tile = src[y0:y0 + block, x0:x0 + block]
            fg = np.max(np.abs(tile - bg), axis=2) > tau
            if fg.mean() < 0.25:
                continue
            best, best_ssd = None, math.inf
            for dx, dy in cands:
                sy, sx = y0 + dy, x0 + dx
                if sy < 0 or sx < 0 or sy + block > h or sx + block > w:
                    continue
                diff = tile - dst[sy:sy + block, sx:sx + block]
                ssd = float(np.sum(diff * diff))
                if ssd < best_ssd:
                    best_ssd, best = ssd, (dx, dy)
            if best is not None:
                dx_out[by, bx], dy_out[by, bx] = best
                valid[by, bx] = True
    return dx_out, dy_out, valid


def ssim_reference(a, b, k1=0.01, k2=0.03):
    """Scalar valid-region SSIM with an 11x11 sigma-1.5 Gaussian window."""
    ax = np.arange(11) - 5.0
    g = np.exp(-(ax**2) / (2.0 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    h, w = a.shape[0], a.shape[1]
    vals = []
    for ch in range(3):
        x, y = a[:, :, ch], b[:, :, ch]
        for iy in range(h - 10):
            for ix in range(w - 10):
                px = x[iy:iy + 11, ix:ix + 11]
                py = y[iy:iy + 11, ix:ix + 11]
                mx = float((win * px).sum())
                my = float((win * py).sum())
                sxx = float((win * px * px).sum()) - mx * mx
                syy = float((win * py * py).sum()) - my * my
                sxy = float((win * px * py).sum()) - mx * my
                num = (2 * mx * my + k1 * k1) * (2 * sxy + k2 * k2)
                den = (mx * mx + my * my + k1 * k1) * (sxx + syy + k2 * k2)
                vals.append(num / den)
    return float(np.mean(vals))
