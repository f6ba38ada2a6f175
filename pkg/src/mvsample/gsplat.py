"""3D Gaussians, EWA-style perspective projection and a deterministic
front-to-back splat compositor.

The renderer works in double precision and composites splats in a global
order (ascending camera depth, ties by cloud index), so its output is
bit-stable across runs, thread counts and row bandings.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import backend
from .geometry import CameraPose
from .util import read_json, thread_count, write_json

CULL_DEPTH = 0.05
COV2_DILATION = 0.3        # low-pass term added to every projected covariance
SCALE_MIN, SCALE_MAX = 1e-6, 10.0


@dataclass(frozen=True)
class Gaussian:
    """One anisotropic 3D Gaussian: center, scale, rotation, opacity, color."""

    p: np.ndarray
    s: np.ndarray
    q: np.ndarray       # unit quaternion (w, x, y, z)
    alpha: float
    c: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        s = np.asarray(self.s, dtype=float)
        q = np.asarray(self.q, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError("quaternion must be unit length")
        if np.any(s < SCALE_MIN) or np.any(s > SCALE_MAX):
            raise ValueError(f"scales must lie in [{SCALE_MIN}, {SCALE_MAX}]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("color channels must lie in [0, 1]")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class GaussianCloud:
    """Array-backed collection of Gaussians (the global 3D model)."""

    p: np.ndarray       # (N, 3)
    s: np.ndarray       # (N, 3)
    q: np.ndarray       # (N, 4)
    alpha: np.ndarray   # (N,)
    c: np.ndarray       # (N, 3)

    def __len__(self) -> int:
        return self.p.shape[0]

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(self.p[i], self.s[i], self.q[i], float(self.alpha[i]), self.c[i])

    @classmethod
    def empty(cls) -> "GaussianCloud":
        z = np.zeros((0, 3))
        return cls(p=z, s=z.copy(), q=np.zeros((0, 4)), alpha=np.zeros(0), c=z.copy())

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[Gaussian]) -> "GaussianCloud":
        if not gaussians:
            return cls.empty()
        return cls(
            p=np.array([g.p for g in gaussians], dtype=float),
            s=np.array([g.s for g in gaussians], dtype=float),
            q=np.array([g.q for g in gaussians], dtype=float),
            alpha=np.array([g.alpha for g in gaussians], dtype=float),
            c=np.array([g.c for g in gaussians], dtype=float),
        )

    def validate(self) -> None:
        if len(self) == 0:
            return
        if not np.all(np.isfinite(self.p)) or not np.all(np.isfinite(self.s)):
            raise ValueError("cloud contains non-finite values")
        if np.any(np.abs(np.linalg.norm(self.q, axis=1) - 1.0) > 1e-6):
            raise ValueError("cloud contains non-unit quaternions")
        if np.any(self.s < SCALE_MIN) or np.any(self.s > SCALE_MAX):
            raise ValueError("cloud contains out-of-range scales")
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise ValueError("cloud contains out-of-range opacities")
        if np.any(self.c < 0) or np.any(self.c > 1):
            raise ValueError("cloud contains out-of-range colors")


@dataclass(frozen=True)
class Splat2D:
    mean: np.ndarray    # (2,) pixels
    cov2: np.ndarray    # (2, 2)
    depth: float
    alpha: float
    color: np.ndarray


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) in [0, 1]


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions (w, x, y, z); shape (..., 3, 3)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def covariance3(s, q) -> np.ndarray:
    """World-space covariance R diag(s)^2 R^T of one Gaussian."""
    rot = quat_to_rot(np.asarray(q, dtype=float))
    d = np.asarray(s, dtype=float) ** 2
    return (rot * d[None, :]) @ rot.T


def project_gaussian(cam: CameraPose, g: Gaussian) -> Optional[Splat2D]:
    """EWA projection of one Gaussian; None marks a frustum-culled splat."""
    cloud = GaussianCloud.from_gaussians([g])
    splats = _project_cloud(cam, cloud)
    if splats is None or not splats["keep"][0]:
        return None
    return Splat2D(
        mean=splats["means"][0],
        cov2=np.array([[splats["cov"][0, 0], splats["cov"][0, 1]],
                       [splats["cov"][0, 1], splats["cov"][0, 2]]]),
        depth=float(splats["depths"][0]),
        alpha=float(splats["alphas"][0]),
        color=splats["colors"][0],
    )


def _project_cloud(cam: CameraPose, cloud: GaussianCloud):
    """Project every Gaussian; returns packed splat arrays in cloud order."""
    n = len(cloud)
    if n == 0:
        return None
    rot = cam.world_to_cam[:, :3]
    trans = cam.world_to_cam[:, 3]
    pc = cloud.p @ rot.T + trans
    depth = pc[:, 2]
    keep = depth > CULL_DEPTH

    f = cam.focal
    cx, cy = cam.principal_point
    z = np.where(keep, depth, 1.0)
    means = np.stack([f * pc[:, 0] / z + cx, f * pc[:, 1] / z + cy], axis=1)

    # cov2 = J W Sigma W^T J^T + dilation, J the pinhole Jacobian at the center
    rmat = quat_to_rot(cloud.q)
    sigma = np.einsum("nij,nj,nkj->nik", rmat, cloud.s**2, rmat)
    m = np.einsum("ij,njk->nik", rot, sigma)
    cov_cam = np.einsum("nij,kj->nik", m, rot)
    inv_z = 1.0 / z
    inv_z2 = inv_z * inv_z
    zeros = np.zeros(n)
    jx = np.stack([f * inv_z, zeros, -f * pc[:, 0] * inv_z2], axis=1)
    jy = np.stack([zeros, f * inv_z, -f * pc[:, 1] * inv_z2], axis=1)
    a = np.einsum("ni,nij,nj->n", jx, cov_cam, jx) + COV2_DILATION
    b = np.einsum("ni,nij,nj->n", jx, cov_cam, jy)
    c = np.einsum("ni,nij,nj->n", jy, cov_cam, jy) + COV2_DILATION

    return {
        "means": means,
        "cov": np.stack([a, b, c], axis=1),
        "depths": depth,
        "alphas": cloud.alpha.astype(float),
        "colors": cloud.c.astype(float),
        "keep": keep,
    }


def _splat_arrays(cam: CameraPose, cloud: GaussianCloud):
    """Sorted, culled, bounded splat arrays ready for the compositor."""
    packed = _project_cloud(cam, cloud)
    if packed is None:
        return None
    keep = packed["keep"] & (packed["alphas"] >= backend.ALPHA_MIN)
    if not keep.any():
        return None
    means = packed["means"][keep]
    cov = packed["cov"][keep]
    depths = packed["depths"][keep]
    alphas = packed["alphas"][keep]
    colors = packed["colors"][keep]

    order = np.argsort(depths, kind="stable")
    means, cov, depths = means[order], cov[order], depths[order]
    alphas, colors = alphas[order], colors[order]

    a, b, c = cov[:, 0], cov[:, 1], cov[:, 2]
    det = a * c - b * b
    conics = np.stack([c / det, -b / det, a / det], axis=1)

    # Cutoff radius where alpha * exp(-q/2) drops below 1/255: everything
    # outside the rect is skipped by the compositing formula itself, so the
    # rect bound is lossless.
    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    m2 = 2.0 * np.log(np.minimum(alphas, backend.ALPHA_CAP) * 255.0)
    radius = np.sqrt(np.maximum(m2, 0.0) * lam_max)

    x0 = np.maximum(np.floor(means[:, 0] - radius - 0.5), 0).astype(np.int32)
    x1 = np.minimum(np.ceil(means[:, 0] + radius + 0.5), cam.width).astype(np.int32)
    y0 = np.maximum(np.floor(means[:, 1] - radius - 0.5), 0).astype(np.int32)
    y1 = np.minimum(np.ceil(means[:, 1] + radius + 0.5), cam.height).astype(np.int32)
    bounds = np.stack([x0, x1, y0, y1], axis=1)

    nonempty = (x1 > x0) & (y1 > y0)
    return {
        "means": np.ascontiguousarray(means[nonempty]),
        "conics": np.ascontiguousarray(conics[nonempty]),
        "depths": np.ascontiguousarray(depths[nonempty]),
        "alphas": np.ascontiguousarray(alphas[nonempty]),
        "colors": np.ascontiguousarray(colors[nonempty]),
        "bounds": np.ascontiguousarray(bounds[nonempty]),
    }


def _composite(cloud: GaussianCloud, cam: CameraPose):
    """Run the active compositing kernel; returns (color, trans, depth_sum)."""
    h, w = cam.height, cam.width
    out_color = np.zeros((h, w, 3))
    out_trans = np.ones((h, w))
    out_depth = np.zeros((h, w))
    splats = _splat_arrays(cam, cloud)
    if splats is None:
        return out_color, out_trans, out_depth

    args = (splats["means"], splats["conics"], splats["depths"],
            splats["alphas"], splats["colors"], splats["bounds"])
    n_threads = min(thread_count(), h)
    if n_threads <= 1:
        backend.composite_splats(*args, out_color, out_trans, out_depth, 0, h)
    else:
        # Rows are independent given the global splat order, so banding
        # cannot change the result, only the wall time.
        edges = np.linspace(0, h, n_threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futs = [
                pool.submit(backend.composite_splats, *args,
                            out_color, out_trans, out_depth, int(r0), int(r1))
                for r0, r1 in zip(edges[:-1], edges[1:])
                if r1 > r0
            ]
            for f in futs:
                f.result()
    return out_color, out_trans, out_depth


def render(cloud: GaussianCloud, cam: CameraPose, background) -> Image:
    """Alpha-composite a cloud over a constant background color."""
    bg = np.asarray(background, dtype=float)
    color, trans, _ = _composite(cloud, cam)
    pixels = color + trans[:, :, None] * bg
    np.clip(pixels, 0.0, 1.0, out=pixels)
    return Image(width=cam.width, height=cam.height, pixels=pixels)


def expected_depth(cloud: GaussianCloud, cam: CameraPose):
    """Alpha-weighted mean splat depth per pixel.

    Returns (depth (H, W), mask (H, W)); mask is true where the accumulated
    alpha reaches 0.5, depth is zero elsewhere.
    """
    _, trans, depth_sum = _composite(cloud, cam)
    acc = 1.0 - trans
    mask = acc >= 0.5
    depth = np.where(mask, depth_sum / np.where(acc > 0, acc, 1.0), 0.0)
    return depth, mask


def write_ppm(path, image: Image) -> None:
    """Binary PPM (P6, maxval 255, top-left origin); quantization round(v*255)."""
    data = np.rint(np.clip(image.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> Image:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM file")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError(f"{path}: expected maxval 255, got {maxval}")
        raw = fh.read(width * height * 3)
        data = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return Image(width=width, height=height, pixels=data.astype(float) / 255.0)


def save_cloud(path, cloud: GaussianCloud) -> None:
    """Cloud as a JSON array of {p, s, q, alpha, c} objects."""
    write_json(
        path,
        [
            {
                "p": [float(v) for v in cloud.p[i]],
                "s": [float(v) for v in cloud.s[i]],
                "q": [float(v) for v in cloud.q[i]],
                "alpha": float(cloud.alpha[i]),
                "c": [float(v) for v in cloud.c[i]],
            }
            for i in range(len(cloud))
        ],
    )


def load_cloud(path) -> GaussianCloud:
    rows = read_json(path)
    if not rows:
        return GaussianCloud.empty()
    cloud = GaussianCloud(
        p=np.array([r["p"] for r in rows], dtype=float),
        s=np.array([r["s"] for r in rows], dtype=float),
        q=np.array([r["q"] for r in rows], dtype=float),
        alpha=np.array([r["alpha"] for r in rows], dtype=float),
        c=np.array([r["c"] for r in rows], dtype=float),
    )
    cloud.validate()
    return cloud
