"""DDIM sampling loops: plain, and 3D-aware with reconstructed-z0 substitution.

The 3D-aware loop periodically decodes the current clean-signal estimate,
fuses all views into one Gaussian cloud, renders that cloud back at every
camera and feeds the re-encoded renders into the DDIM update in place of
the predicted clean signal. The substitution only replaces the first term
of the update; the direction term keeps the raw noise prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diffusion import (
    ConditionVector,
    Denoiser,
    MultiViewLatent,
    NoiseSchedule,
    ddim_step,
    predict_z0,
)
from .geometry import CameraPose
from .gsplat import GaussianCloud, Image, render
from .recon import ReconConfig, reconstruct
from .util import parallel_map


class IdentityCodec:
    """Latents are images up to the affine map [-1, 1] <-> [0, 1]."""

    name = "identity"
    scale = 1

    def latent_dims(self, width: int, height: int) -> tuple[int, int]:
        return height, width

    def decode(self, z: MultiViewLatent) -> list[Image]:
        imgs = np.clip((z.data + 1.0) / 2.0, 0.0, 1.0)
        f, h, w, _ = z.shape
        return [Image(width=w, height=h, pixels=imgs[i]) for i in range(f)]

    def encode(self, images: Sequence[Image]) -> MultiViewLatent:
        data = np.stack([img.pixels for img in images]) * 2.0 - 1.0
        return MultiViewLatent(data)


def _upsample2_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Bilinear 2x upsampling along one axis (half-pixel aligned)."""
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    prev = np.concatenate([a[:1], a[:-1]], axis=0)
    nxt = np.concatenate([a[1:], a[-1:]], axis=0)
    out = np.empty((2 * n,) + a.shape[1:], dtype=a.dtype)
    out[0::2] = 0.75 * a + 0.25 * prev
    out[1::2] = 0.75 * a + 0.25 * nxt
    return np.moveaxis(out, 0, axis)


class AvgPool2Codec:
    """Images are 2x the latent resolution: bilinear up on decode,
    2x2 mean pooling on encode."""

    name = "avgpool2"
    scale = 2

    def latent_dims(self, width: int, height: int) -> tuple[int, int]:
        if width % 2 or height % 2:
            raise ValueError("avgpool2 needs even image dimensions")
        return height // 2, width // 2

    def decode(self, z: MultiViewLatent) -> list[Image]:
        imgs = (z.data + 1.0) / 2.0
        imgs = _upsample2_axis(_upsample2_axis(imgs, 1), 2)
        np.clip(imgs, 0.0, 1.0, out=imgs)
        f = z.F
        return [Image(width=imgs.shape[2], height=imgs.shape[1], pixels=imgs[i]) for i in range(f)]

    def encode(self, images: Sequence[Image]) -> MultiViewLatent:
        data = np.stack([img.pixels for img in images])
        f, h, w, c = data.shape
        if h % 2 or w % 2:
            raise ValueError("avgpool2 needs even image dimensions")
        pooled = data.reshape(f, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))
        return MultiViewLatent(pooled * 2.0 - 1.0)


def identity_codec() -> IdentityCodec:
    return IdentityCodec()


def avgpool2_codec() -> AvgPool2Codec:
    return AvgPool2Codec()


def make_codec(name: str):
    if name == "identity":
        return identity_codec()
    if name == "avgpool2":
        return avgpool2_codec()
    raise ValueError(f"unknown codec {name!r} (expected identity or avgpool2)")


@dataclass(frozen=True)
class SamplerConfig:
    n_steps: int = 50
    eta: float = 0.0
    t_s: int = 700            # negative disables substitution entirely
    k: int = 10
    codec: str = "identity"
    seed: int = 0
    background: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")


@dataclass
class TraceRecord:
    t: int
    substituted: bool
    z0_rmse: Optional[float] = None
    gaussian_count: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "substituted": self.substituted,
            "z0_rmse": self.z0_rmse,
            "gaussian_count": self.gaussian_count,
        }


@dataclass
class SampleTrace:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def write_jsonl(self, path) -> None:
        import json

        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_dict()) + "\n")


def _rmse(a: MultiViewLatent, b: MultiViewLatent) -> float:
    return float(np.sqrt(np.mean((a.data - b.data) ** 2)))


def _latent_shape(cams: Sequence[CameraPose], codec) -> tuple:
    h, w = codec.latent_dims(cams[0].width, cams[0].height)
    return (len(cams), h, w, 3)


def sample_plain(denoiser: Denoiser, cams: Sequence[CameraPose], y: ConditionVector,
                 sched: NoiseSchedule, cfg: SamplerConfig,
                 z0_ref: MultiViewLatent | None = None):
    """DDIM sampling with no substitution; returns (latent, trace)."""
    codec = make_codec(cfg.codec)
    shape = _latent_shape(cams, codec)
    rng = np.random.default_rng(cfg.seed)
    z = MultiViewLatent(rng.standard_normal(shape))
    trace = SampleTrace()
    steps = sched.sample_steps
    n = len(steps)
    for i in range(n):
        t = int(steps[i])
        t_prev = int(steps[i + 1]) if i + 1 < n else -1
        eps_hat = denoiser(z, t, cams, y)
        rec = TraceRecord(t=t, substituted=False)
        if z0_ref is not None:
            rec.z0_rmse = _rmse(predict_z0(z, eps_hat, t, sched), z0_ref)
        trace.records.append(rec)
        noise = MultiViewLatent(rng.standard_normal(shape)) if cfg.eta > 0 else None
        z = ddim_step(z, eps_hat, t, t_prev, cfg.eta, sched, noise=noise)
    return z, trace


def sample_3d_aware(denoiser: Denoiser, cams: Sequence[CameraPose], y: ConditionVector,
                    sched: NoiseSchedule, cfg: SamplerConfig,
                    recon_cfg: ReconConfig | None = None,
                    z0_ref: MultiViewLatent | None = None):
    """DDIM sampling with reconstructed-z0 substitution.

    Substitution happens at every k-th eligible iteration (those with
    t <= t_s) and is forced at the final iteration; a negative t_s turns
    it off completely, making the loop bit-identical to sample_plain.
    Returns (latent, cloud, trace).
    """
    codec = make_codec(cfg.codec)
    if recon_cfg is None:
        recon_cfg = ReconConfig(background=cfg.background)
    shape = _latent_shape(cams, codec)
    rng = np.random.default_rng(cfg.seed)
    z = MultiViewLatent(rng.standard_normal(shape))
    trace = SampleTrace()
    cloud = GaussianCloud.empty()
    steps = sched.sample_steps
    n = len(steps)
    eligible_idx = 0
    for i in range(n):
        t = int(steps[i])
        t_prev = int(steps[i + 1]) if i + 1 < n else -1
        eps_hat = denoiser(z, t, cams, y)

        enabled = cfg.t_s >= 0
        eligible = enabled and t <= cfg.t_s
        want_sub = enabled and ((eligible and eligible_idx % cfg.k == 0) or i == n - 1)
        if eligible:
            eligible_idx += 1

        rec = TraceRecord(t=t, substituted=False)
        z0_hat = predict_z0(z, eps_hat, t, sched)
        if z0_ref is not None:
            rec.z0_rmse = _rmse(z0_hat, z0_ref)

        z0_override = None
        if want_sub:
            images = codec.decode(z0_hat)
            new_cloud = reconstruct(images, cams, recon_cfg)
            rec.gaussian_count = len(new_cloud)
            if len(new_cloud) > 0:
                renders = parallel_map(
                    lambda cam: render(new_cloud, cam, cfg.background), list(cams)
                )
                z0_override = codec.encode(renders)
                rec.substituted = True
                cloud = new_cloud
        trace.records.append(rec)

        noise = MultiViewLatent(rng.standard_normal(shape)) if cfg.eta > 0 else None
        z = ddim_step(z, eps_hat, t, t_prev, cfg.eta, sched, noise=noise,
                      z0_override=z0_override)
    return z, cloud, trace
