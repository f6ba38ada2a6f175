"""Procedural ground-truth scenes and dataset rendering.

Scenes are Gaussian clouds themselves, so the artifact's own renderer is
an exact oracle for them: no model mismatch between ground truth and what
reconstruction can represent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .diffusion import MultiViewLatent
from .geometry import CameraPose, save_cameras
from .gsplat import GaussianCloud, render, save_cloud, write_ppm
from .util import write_json

SCENE_KINDS = ("blob-cluster", "ring", "box-stack")

DEFAULT_PALETTE = (
    (0.85, 0.25, 0.2),
    (0.2, 0.65, 0.3),
    (0.25, 0.4, 0.85),
    (0.9, 0.75, 0.2),
    (0.65, 0.3, 0.8),
    (0.2, 0.7, 0.7),
)


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    n_primitives: int = 6
    palette: tuple = DEFAULT_PALETTE
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}, expected one of {SCENE_KINDS}")
        if self.n_primitives < 1:
            raise ValueError("n_primitives must be >= 1")
        if not self.palette:
            raise ValueError("palette must not be empty")


def _palette_colors(spec: SceneSpec) -> np.ndarray:
    return np.array([spec.palette[i % len(spec.palette)] for i in range(spec.n_primitives)], dtype=float)


def generate_scene(spec: SceneSpec) -> GaussianCloud:
    """Deterministic cloud from the spec; all centers stay inside ||x|| <= 0.8."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_primitives
    colors = _palette_colors(spec)
    alphas = rng.uniform(0.7, 1.0, size=n)
    quat = np.zeros((n, 4))
    quat[:, 0] = 1.0

    if spec.kind == "blob-cluster":
        # rejection-free ball sampling: direction * radius^(1/3) scaling
        dirs = rng.standard_normal((n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = 0.55 * rng.uniform(0.0, 1.0, size=n) ** (1.0 / 3.0)
        centers = dirs * radii[:, None]
        scales = np.repeat(rng.uniform(0.14, 0.24, size=n)[:, None], 3, axis=1)
    elif spec.kind == "ring":
        angles = 2.0 * math.pi * np.arange(n) / n
        centers = 0.5 * np.stack([np.sin(angles), np.zeros(n), np.cos(angles)], axis=1)
        scales = np.repeat(rng.uniform(0.12, 0.2, size=n)[:, None], 3, axis=1)
    else:  # box-stack
        if n == 1:
            ys = np.array([0.0])
        else:
            ys = np.linspace(-0.45, 0.45, n)
        jitter = 0.08 * rng.uniform(-1.0, 1.0, size=(n, 2))
        centers = np.stack([jitter[:, 0], ys, jitter[:, 1]], axis=1)
        scales = np.stack([
            rng.uniform(0.22, 0.3, size=n),
            rng.uniform(0.06, 0.1, size=n),
            rng.uniform(0.16, 0.24, size=n),
        ], axis=1)

    return GaussianCloud(p=centers, s=scales, q=quat, alpha=alphas, c=colors)


def render_views(cloud: GaussianCloud, cams: Sequence[CameraPose], background):
    return [render(cloud, cam, background) for cam in cams]


def render_dataset(cloud: GaussianCloud, cams: Sequence[CameraPose], background,
                   out_dir, seed: int | None = None) -> dict:
    """Write view_###.ppm, cameras.json, scene.json and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images = render_views(cloud, cams, background)
    for i, img in enumerate(images):
        write_ppm(out / f"view_{i:03d}.ppm", img)
    save_cameras(out / "cameras.json", cams)
    save_cloud(out / "scene.json", cloud)
    manifest = {
        "f": len(cams),
        "width": cams[0].width,
        "height": cams[0].height,
        "background": [float(v) for v in background],
        "seed": seed,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def scene_latents(cloud: GaussianCloud, cams: Sequence[CameraPose], codec,
                  background) -> MultiViewLatent:
    """Canonical ground-truth z0: encode the per-view renders."""
    return codec.encode(render_views(cloud, cams, background))
