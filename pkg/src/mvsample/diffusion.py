"""Noise schedule, forward diffusion, DDIM stepping, conditioning embeddings
and the three denoisers (exact oracle, jittered oracle, closed-form ridge).

A denoiser is any callable (z_t, t, cams, y) -> predicted noise with the
same shape as z_t; everything downstream treats it as a black box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import CameraPose
from .util import read_json, write_json

ALPHA_BAR_MAX = 1.0 - 1e-8


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta DDPM tables plus the DDIM sampling sub-sequence."""

    T: int
    betas: np.ndarray
    alpha_bars: np.ndarray
    sample_steps: np.ndarray   # strictly decreasing ints

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal level; t = -1 denotes the clean endpoint."""
        if t < 0:
            return 1.0
        return float(self.alpha_bars[t])


@dataclass(frozen=True)
class MultiViewLatent:
    """F x h x w x C stack of per-view latents."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError(f"latent data must be 4D (F,h,w,C), got shape {self.data.shape}")

    @property
    def F(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def C(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ConditionVector:
    """Opaque stand-in for the prompt condition; may be empty."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(0))


Denoiser = Callable[[MultiViewLatent, int, Sequence[CameraPose], ConditionVector], MultiViewLatent]


def make_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02,
                  n_sample_steps: int = 50) -> NoiseSchedule:
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    if not 1 <= n_sample_steps <= T:
        raise ValueError(f"n_sample_steps must lie in [1, T], got {n_sample_steps}")
    if T < 2:
        raise ValueError("T must be >= 2")
    betas = beta_min + np.arange(T) * (beta_max - beta_min) / (T - 1)
    alpha_bars = np.minimum(np.cumprod(1.0 - betas), ALPHA_BAR_MAX)
    steps = np.round(np.linspace(T - 1, 0, n_sample_steps)).astype(np.int64)
    return NoiseSchedule(T=T, betas=betas, alpha_bars=alpha_bars, sample_steps=steps)


def _check_shapes(a: MultiViewLatent, b: MultiViewLatent, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def diffuse(z0: MultiViewLatent, t: int, eps: MultiViewLatent, sched: NoiseSchedule) -> MultiViewLatent:
    """Forward noising: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps."""
    _check_shapes(z0, eps, "diffuse")
    ab = sched.alpha_bar(t)
    return MultiViewLatent(math.sqrt(ab) * z0.data + math.sqrt(1.0 - ab) * eps.data)


def predict_z0(z_t: MultiViewLatent, eps_hat: MultiViewLatent, t: int, sched: NoiseSchedule) -> MultiViewLatent:
    """Clean-signal estimate (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)."""
    _check_shapes(z_t, eps_hat, "predict_z0")
    ab = sched.alpha_bar(t)
    return MultiViewLatent((z_t.data - math.sqrt(1.0 - ab) * eps_hat.data) / math.sqrt(ab))


def ddim_step(z_t: MultiViewLatent, eps_hat: MultiViewLatent, t: int, t_prev: int,
              eta: float, sched: NoiseSchedule, noise: MultiViewLatent | None = None,
              z0_override: MultiViewLatent | None = None) -> MultiViewLatent:
    """One DDIM update from t to t_prev (t_prev = -1 lands on the clean signal).

    z0_override replaces the predicted clean signal in the first term only;
    the direction term keeps the raw noise prediction.
    """
    if t_prev >= t:
        raise ValueError(f"t_prev must be < t, got {t_prev} >= {t}")
    _check_shapes(z_t, eps_hat, "ddim_step")
    ab_t = sched.alpha_bar(t)
    ab_p = sched.alpha_bar(t_prev)
    sigma = eta * math.sqrt((1.0 - ab_p) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_p)
    dir_sq = 1.0 - ab_p - sigma * sigma
    if dir_sq < -1e-12:
        raise ValueError(f"direction term is imaginary (eta={eta} too large)")
    z0 = z0_override if z0_override is not None else predict_z0(z_t, eps_hat, t, sched)
    _check_shapes(z_t, z0, "ddim_step z0")
    out = math.sqrt(ab_p) * z0.data + math.sqrt(max(dir_sq, 0.0)) * eps_hat.data
    if eta > 0.0:
        if noise is None:
            raise ValueError("eta > 0 requires a noise latent")
        _check_shapes(z_t, noise, "ddim_step noise")
        out = out + sigma * noise.data
    return MultiViewLatent(out)


def time_embedding(t: float, E: int) -> np.ndarray:
    """Sinusoidal embedding, interleaved (sin, cos) per frequency."""
    if E % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {E}")
    i = np.arange(E // 2)
    freq = 10000.0 ** (-2.0 * i / E)
    emb = np.empty(E)
    emb[0::2] = np.sin(t * freq)
    emb[1::2] = np.cos(t * freq)
    return emb


@dataclass(frozen=True)
class CameraMLP:
    """Two-layer perceptron mapping a 16-float camera description to an
    E-dim residual on the time embedding."""

    w1: np.ndarray   # (2E, 16)
    b1: np.ndarray   # (2E,)
    w2: np.ndarray   # (E, 2E)
    b2: np.ndarray   # (E,)

    @property
    def E(self) -> int:
        return self.w2.shape[0]


def make_camera_mlp(E: int, seed: int) -> CameraMLP:
    rng = np.random.default_rng(seed)
    return CameraMLP(
        w1=rng.standard_normal((2 * E, 16)) / math.sqrt(16.0),
        b1=np.zeros(2 * E),
        w2=rng.standard_normal((E, 2 * E)) / math.sqrt(2.0 * E),
        b2=np.zeros(E),
    )


def camera_features(cam: CameraPose) -> np.ndarray:
    """16 floats: flattened world_to_cam plus the four orbit scalars."""
    return np.concatenate([
        cam.world_to_cam.reshape(-1),
        [cam.azimuth_deg, cam.elevation_deg, cam.radius, cam.fov_deg],
    ])


def camera_embedding(cam: CameraPose, weights: CameraMLP, E: int) -> np.ndarray:
    if weights.E != E or weights.w1.shape != (2 * E, 16):
        raise ValueError(f"weights shaped for E={weights.E}, requested E={E}")
    x = camera_features(cam)
    h = np.maximum(weights.w1 @ x + weights.b1, 0.0)
    return weights.w2 @ h + weights.b2


def oracle_denoiser(z0: MultiViewLatent, sched: NoiseSchedule) -> Denoiser:
    """Exact noise predictor for a known clean latent; the test oracle."""

    def denoise(z_t: MultiViewLatent, t: int, cams, y) -> MultiViewLatent:
        _check_shapes(z_t, z0, "oracle_denoiser")
        ab = sched.alpha_bar(t)
        return MultiViewLatent((z_t.data - math.sqrt(ab) * z0.data) / math.sqrt(1.0 - ab))

    return denoise


def jittered_oracle_denoiser(z0: MultiViewLatent, gamma: float, seed: int,
                             sched: NoiseSchedule) -> Denoiser:
    """Oracle for z0 plus a frozen per-view noise field: each view pulls
    toward a slightly different target, modelling cross-view inconsistency."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal(z0.shape)
    target = MultiViewLatent(z0.data + gamma * eta)
    return oracle_denoiser(target, sched)


def _bucket_of(bounds: np.ndarray, t: int) -> int:
    b = int(np.searchsorted(bounds, t, side="right")) - 1
    return min(max(b, 0), len(bounds) - 2)


def _view_features(z_view: np.ndarray, t: int, cam: CameraPose, E: int,
                   cam_mlp: CameraMLP) -> np.ndarray:
    return np.concatenate([
        z_view.reshape(-1),
        time_embedding(t, E),
        camera_embedding(cam, cam_mlp, E),
        [1.0],
    ])


@dataclass(frozen=True)
class LinearDenoiser:
    """Per-timestep-bucket ridge regression from view features to noise.

    Feature vector per view: [flatten(z_t view), time_embedding(t),
    camera_embedding(cam)] plus an unpenalized intercept column.
    """

    bucket_bounds: np.ndarray        # (B + 1,) ints partitioning [0, T)
    weights: list                    # B arrays of shape (in_dim + 1, out_dim)
    E: int
    cam_mlp: CameraMLP
    latent_shape: tuple              # (h, w, C)

    @property
    def B(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        h, w, c = self.latent_shape
        return h * w * c + 2 * self.E

    @property
    def out_dim(self) -> int:
        h, w, c = self.latent_shape
        return h * w * c

    def __call__(self, z_t: MultiViewLatent, t: int, cams, y) -> MultiViewLatent:
        if z_t.data.shape[1:] != self.latent_shape:
            raise ValueError(f"latent shape {z_t.data.shape[1:]} does not match fit {self.latent_shape}")
        w = self.weights[_bucket_of(self.bucket_bounds, t)]
        out = np.empty_like(z_t.data)
        for v in range(z_t.F):
            x = _view_features(z_t.data[v], t, cams[v], self.E, self.cam_mlp)
            out[v] = (x @ w).reshape(self.latent_shape)
        return MultiViewLatent(out)


def fit_linear_denoiser(dataset, sched: NoiseSchedule, B: int, lam: float,
                        n_draws: int, seed: int, E: int = 16) -> LinearDenoiser:
    """Ridge fit of the noise-prediction objective over sampled (t, eps) pairs.

    dataset: sequence of (z0: MultiViewLatent, cams, y) with a shared shape.
    Normal equations per bucket; the intercept column is not penalized, so
    lam -> inf drives predictions to the per-bucket mean noise.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    if B < 1 or n_draws < 1:
        raise ValueError("B and n_draws must be >= 1")
    z0_0, cams_0, _ = dataset[0]
    latent_shape = z0_0.data.shape[1:]
    h_lat, w_lat, c_lat = latent_shape
    out_dim = h_lat * w_lat * c_lat
    bounds = np.round(np.linspace(0, sched.T, B + 1)).astype(np.int64)
    cam_mlp = make_camera_mlp(E, seed)

    rng = np.random.default_rng(seed)
    rows: list[list[np.ndarray]] = [[] for _ in range(B)]
    targets: list[list[np.ndarray]] = [[] for _ in range(B)]
    for z0, cams, _y in dataset:
        if z0.data.shape[1:] != latent_shape:
            raise ValueError("all scenes in the dataset must share a latent shape")
        for _ in range(n_draws):
            t = int(rng.integers(0, sched.T))
            eps = rng.standard_normal(z0.shape)
            z_t = math.sqrt(sched.alpha_bar(t)) * z0.data + math.sqrt(1 - sched.alpha_bar(t)) * eps
            b = _bucket_of(bounds, t)
            for v in range(z0.F):
                rows[b].append(_view_features(z_t[v], t, cams[v], E, cam_mlp))
                targets[b].append(eps[v].reshape(-1))

    d = out_dim + 2 * E + 1
    weights = []
    for b in range(B):
        if rows[b]:
            x = np.asarray(rows[b])
            y = np.asarray(targets[b])
            g = x.T @ x
            h = x.T @ y
        else:
            g = np.zeros((d, d))
            h = np.zeros((d, out_dim))
        penalty = lam * np.eye(d)
        penalty[-1, -1] = 0.0    # intercept stays unpenalized
        g = g + penalty
        g[-1, -1] += 1e-12       # keep the solve well-posed for empty buckets
        weights.append(np.linalg.solve(g, h))
    return LinearDenoiser(bucket_bounds=bounds, weights=weights, E=E,
                          cam_mlp=cam_mlp, latent_shape=latent_shape)


def epsilon_mse(denoiser: Denoiser, dataset, sched: NoiseSchedule,
                n_draws: int, seed: int) -> tuple[float, float]:
    """Held-out noise-prediction MSE of a denoiser and of the zero predictor."""
    rng = np.random.default_rng(seed)
    se = 0.0
    se_zero = 0.0
    count = 0
    for z0, cams, y in dataset:
        for _ in range(n_draws):
            t = int(rng.integers(0, sched.T))
            eps = rng.standard_normal(z0.shape)
            z_t = diffuse(z0, t, MultiViewLatent(eps), sched)
            pred = denoiser(z_t, t, cams, y)
            se += float(np.sum((pred.data - eps) ** 2))
            se_zero += float(np.sum(eps**2))
            count += eps.size
    return se / count, se_zero / count


def save_latent(path_stem, z: MultiViewLatent) -> None:
    """Raw little-endian float32 blob plus a JSON shape sidecar."""
    data = z.data.astype("<f4")
    with open(str(path_stem) + ".bin", "wb") as fh:
        fh.write(data.tobytes())
    write_json(str(path_stem) + ".json", {"F": z.F, "h": z.h, "w": z.w, "C": z.C})


def load_latent(path_stem) -> MultiViewLatent:
    meta = read_json(str(path_stem) + ".json")
    shape = (meta["F"], meta["h"], meta["w"], meta["C"])
    with open(str(path_stem) + ".bin", "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f4").reshape(shape)
    return MultiViewLatent(data.astype(float))


def save_linear_denoiser(path_stem, model: LinearDenoiser) -> None:
    """Raw little-endian float64 weight blob plus a JSON sidecar."""
    blob = [model.cam_mlp.w1, model.cam_mlp.b1, model.cam_mlp.w2, model.cam_mlp.b2]
    blob += model.weights
    flat = np.concatenate([a.reshape(-1) for a in blob]).astype("<f8")
    with open(str(path_stem) + ".bin", "wb") as fh:
        fh.write(flat.tobytes())
    h, w, c = model.latent_shape
    write_json(str(path_stem) + ".json", {
        "B": model.B,
        "bucket_bounds": [int(v) for v in model.bucket_bounds],
        "in_dim": model.in_dim,
        "out_dim": model.out_dim,
        "E": model.E,
        "latent_shape": [h, w, c],
    })


def load_linear_denoiser(path_stem) -> LinearDenoiser:
    meta = read_json(str(path_stem) + ".json")
    E = meta["E"]
    h, w, c = meta["latent_shape"]
    in_dim, out_dim, B = meta["in_dim"], meta["out_dim"], meta["B"]
    with open(str(path_stem) + ".bin", "rb") as fh:
        flat = np.frombuffer(fh.read(), dtype="<f8")
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = flat[pos:pos + n].reshape(shape).copy()
        pos += n
        return out

    mlp = CameraMLP(w1=take((2 * E, 16)), b1=take((2 * E,)),
                    w2=take((E, 2 * E)), b2=take((E,)))
    weights = [take((in_dim + 1, out_dim)) for _ in range(B)]
    if pos != flat.size:
        raise ValueError("weight blob size does not match the sidecar")
    return LinearDenoiser(bucket_bounds=np.asarray(meta["bucket_bounds"], dtype=np.int64),
                          weights=weights, E=E, cam_mlp=mlp, latent_shape=(h, w, c))
