"""Batch command-line surface for reproducible experiments.

Every command resolves its configuration (JSON config file, overridden by
flags), writes it to <out>/resolved_config.json and produces outputs only
under --out, so identical configs and seeds give bit-identical runs.

Exit codes: 0 success, 2 bad arguments, 3 runtime or file errors.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path

import numpy as np

from . import diffusion, geometry, gsplat, metrics, recon, sampler, scenes
from .util import parallel_map, read_json, write_json


def _resolve(args: argparse.Namespace, keys: list[str]) -> dict:
    """Merge config-file values with flag overrides (flags win)."""
    cfg = {}
    if getattr(args, "config", None):
        cfg.update(read_json(args.config))
    for key in keys:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            cfg[key] = val
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out

def _write_resolved(out: Path, command: str, cfg: dict) -> None:
    # the experiment is the config minus where it happens to be written
    resolved = {k: v for k, v in cfg.items() if k not in ("out", "config")}
    write_json(out / "resolved_config.json", {"command": command, **resolved})


def _load_dataset(path) -> tuple:
    """Images + cameras (+ scene cloud and manifest when present)."""
    d = Path(path)
    cams = geometry.load_cameras(d / "cameras.json")
    images = [gsplat.read_ppm(d / f"view_{i:03d}.ppm") for i in range(len(cams))]
    cloud = gsplat.load_cloud(d / "scene.json") if (d / "scene.json").exists() else None
    manifest = read_json(d / "manifest.json") if (d / "manifest.json").exists() else {}
    return images, cams, cloud, manifest


def _make_denoiser(spec: str, z0: diffusion.MultiViewLatent,
                   sched: diffusion.NoiseSchedule, seed: int):
    if spec == "oracle":
        return diffusion.oracle_denoiser(z0, sched)
    if spec.startswith("jitter:"):
        gamma = float(spec.split(":", 1)[1])
        return diffusion.jittered_oracle_denoiser(z0, gamma, seed, sched)
    if spec.startswith("linear:"):
        return diffusion.load_linear_denoiser(spec.split(":", 1)[1])
    raise SystemExit2(f"unknown denoiser {spec!r}: expected oracle, jitter:G or linear:PATH")


class SystemExit2(Exception):
    """Argument-level error discovered after argparse."""


def _replace_background(rcfg: recon.ReconConfig, background) -> recon.ReconConfig:
    return recon.ReconConfig(tau=rcfg.tau, res=rcfg.res,
                             min_views_frac=rcfg.min_views_frac, background=background)


def cmd_gen_scene(args) -> int:
    cfg = _resolve(args, ["kind", "n", "seed", "out"])
    cfg.setdefault("kind", "blob-cluster")
    cfg.setdefault("n", 6)
    cfg.setdefault("seed", 0)
    out = _out_dir(cfg)
    spec = scenes.SceneSpec(kind=cfg["kind"], n_primitives=int(cfg["n"]), seed=int(cfg["seed"]))
    cloud = scenes.generate_scene(spec)
    gsplat.save_cloud(out / "scene.json", cloud)
    _write_resolved(out, "gen-scene", cfg)
    return 0


def _cameras_from_cfg(cfg: dict) -> list:
    return geometry.make_orbit_cameras(
        n_views=int(cfg.get("views", 24)),
        elevation_deg=float(cfg.get("elevation", 20.0)),
        radius=float(cfg.get("radius", geometry.DEFAULT_RADIUS)),
        fov_deg=float(cfg.get("fov", geometry.DEFAULT_FOV_DEG)),
        width=int(cfg.get("size", geometry.DEFAULT_SIZE)),
        height=int(cfg.get("size", geometry.DEFAULT_SIZE)),
    )


def cmd_render(args) -> int:
    cfg = _resolve(args, ["scene", "views", "elevation", "radius", "fov", "size",
                          "background", "seed", "out"])
    cfg.setdefault("background", [0.5, 0.5, 0.5])
    out = _out_dir(cfg)
    cloud = gsplat.load_cloud(cfg["scene"])
    cams = _cameras_from_cfg(cfg)
    scenes.render_dataset(cloud, cams, cfg["background"], out, seed=cfg.get("seed"))
    _write_resolved(out, "render", cfg)
    return 0


def cmd_fit_denoiser(args) -> int:
    cfg = _resolve(args, ["dataset", "buckets", "lam", "draws", "codec",
                          "emb-dim", "seed", "out"])
    cfg.setdefault("buckets", 4)
    cfg.setdefault("lam", 5.0)
    cfg.setdefault("draws", 120)
    cfg.setdefault("codec", "identity")
    cfg.setdefault("emb-dim", 16)
    cfg.setdefault("seed", 0)
    out = _out_dir(cfg)
    codec = sampler.make_codec(cfg["codec"])
    datasets = cfg["dataset"] if isinstance(cfg["dataset"], list) else [cfg["dataset"]]
    sched = diffusion.make_schedule()
    fitset = []
    for path in datasets:
        images, cams, _cloud, _m = _load_dataset(path)
        fitset.append((codec.encode(images), cams, diffusion.ConditionVector()))
    model = diffusion.fit_linear_denoiser(
        fitset, sched, B=int(cfg["buckets"]), lam=float(cfg["lam"]),
        n_draws=int(cfg["draws"]), seed=int(cfg["seed"]), E=int(cfg["emb-dim"]),
    )
    diffusion.save_linear_denoiser(out / "denoiser", model)
    mse, zero_mse = diffusion.epsilon_mse(model, fitset, sched, n_draws=24,
                                          seed=int(cfg["seed"]) + 1)
    write_json(out / "fit_report.json", {"held_out_mse": mse, "zero_predictor_mse": zero_mse})
    _write_resolved(out, "fit-denoiser", cfg)
    return 0


def _recon_cfg_from(cfg: dict, background) -> recon.ReconConfig:
    return recon.ReconConfig(
        tau=float(cfg.get("tau", 0.08)),
        res=int(cfg.get("res", 64)),
        min_views_frac=float(cfg.get("min-views-frac", 0.9)),
        background=background,
    )


def _run_sample(dataset, denoiser_spec, mode, sampler_cfg: sampler.SamplerConfig,
                out: Path | None, recon_cfg: recon.ReconConfig | None = None):
    """Shared sampling runner; returns (images, cloud, trace, z0)."""
    images, cams, _cloud, manifest = _load_dataset(dataset)
    codec = sampler.make_codec(sampler_cfg.codec)
    background = tuple(manifest.get("background", sampler_cfg.background))
    sampler_cfg = sampler.SamplerConfig(
        n_steps=sampler_cfg.n_steps, eta=sampler_cfg.eta, t_s=sampler_cfg.t_s,
        k=sampler_cfg.k, codec=sampler_cfg.codec, seed=sampler_cfg.seed,
        background=background,
    )
    z0 = codec.encode(images)
    sched = diffusion.make_schedule(n_sample_steps=sampler_cfg.n_steps)
    den = _make_denoiser(denoiser_spec, z0, sched, seed=sampler_cfg.seed)
    y = diffusion.ConditionVector()
    if mode == "plain":
        z, trace = sampler.sample_plain(den, cams, y, sched, sampler_cfg, z0_ref=z0)
        cloud = None
    elif mode == "aware":
        if recon_cfg is None:
            recon_cfg = recon.ReconConfig(background=background)
        else:
            recon_cfg = _replace_background(recon_cfg, background)
        z, cloud, trace = sampler.sample_3d_aware(den, cams, y, sched, sampler_cfg,
                                                  recon_cfg, z0_ref=z0)
    else:
        raise SystemExit2(f"unknown mode {mode!r}: expected plain or aware")
    out_images = codec.decode(z)
    if out is not None:
        for i, img in enumerate(out_images):
            gsplat.write_ppm(out / f"view_{i:03d}.ppm", img)
        geometry.save_cameras(out / "cameras.json", cams)
        diffusion.save_latent(out / "latent", z)
        trace.write_jsonl(out / "trace.jsonl")
        if cloud is not None:
            gsplat.save_cloud(out / "cloud.json", cloud)
    return out_images, cloud, trace, z0, cams, background


def cmd_sample(args) -> int:
    cfg = _resolve(args, ["dataset", "denoiser", "mode", "steps", "eta", "ts", "k",
                          "codec", "seed", "out"])
    cfg.setdefault("denoiser", "oracle")
    cfg.setdefault("mode", "plain")
    cfg.setdefault("steps", 50)
    cfg.setdefault("eta", 0.0)
    cfg.setdefault("ts", 700)
    cfg.setdefault("k", 10)
    cfg.setdefault("codec", "identity")
    cfg.setdefault("seed", 0)
    if cfg["mode"] not in ("plain", "aware"):
        raise SystemExit2(f"unknown mode {cfg['mode']!r}: expected plain or aware")
    out = _out_dir(cfg)
    scfg = sampler.SamplerConfig(n_steps=int(cfg["steps"]), eta=float(cfg["eta"]),
                                 t_s=int(cfg["ts"]), k=int(cfg["k"]),
                                 codec=cfg["codec"], seed=int(cfg["seed"]))
    rcfg = _recon_cfg_from(cfg, scfg.background)
    _run_sample(cfg["dataset"], cfg["denoiser"], cfg["mode"], scfg, out, rcfg)
    _write_resolved(out, "sample", cfg)
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _resolve(args, ["images", "tau", "res", "min-views-frac", "background", "out"])
    cfg.setdefault("tau", 0.08)
    cfg.setdefault("res", 64)
    cfg.setdefault("min-views-frac", 0.9)
    out = _out_dir(cfg)
    images, cams, _cloud, manifest = _load_dataset(cfg["images"])
    background = tuple(cfg.get("background") or manifest.get("background", (0.5, 0.5, 0.5)))
    rcfg = recon.ReconConfig(tau=float(cfg["tau"]), res=int(cfg["res"]),
                             min_views_frac=float(cfg["min-views-frac"]),
                             background=background)
    masks = [recon.silhouette(img, background, rcfg.tau) for img in images]
    grid = recon.carve(masks, cams, rcfg.res, rcfg.min_views(len(cams)))
    if grid.occupied.any():
        grid = recon.colorize(grid, images, cams)
        cloud = recon.to_gaussians(grid)
    else:
        cloud = gsplat.GaussianCloud.empty()
    gsplat.save_cloud(out / "cloud.json", cloud)
    recon.save_grid(out / "grid.bin", grid)
    _write_resolved(out, "reconstruct", cfg)
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve(args, ["a", "b", "metrics", "cloud-a", "cloud-b",
                          "grid-a", "grid-b", "background", "out"])
    cfg.setdefault("metrics", ["psnr", "ssim", "warp"])
    out = _out_dir(cfg)
    wanted = cfg["metrics"] if isinstance(cfg["metrics"], list) else cfg["metrics"].split(",")
    imgs_a, _cams_a, _c, man_a = _load_dataset(cfg["a"])
    imgs_b, _cams_b, _c2, _man_b = _load_dataset(cfg["b"])
    if len(imgs_a) != len(imgs_b):
        raise SystemExit2("eval needs the same number of views in both directories")
    background = tuple(cfg.get("background") or man_a.get("background", (0.5, 0.5, 0.5)))
    report: dict = {}
    if "psnr" in wanted:
        report["psnr_mean"] = float(np.mean([metrics.psnr(a, b) for a, b in zip(imgs_a, imgs_b)]))
    if "ssim" in wanted:
        report["ssim_mean"] = float(np.mean([metrics.ssim(a, b) for a, b in zip(imgs_a, imgs_b)]))
    if "warp" in wanted:
        report["warp_rmse_f1"] = metrics.warp_rmse(imgs_a, 1, background)
        report["warp_rmse_f6"] = metrics.warp_rmse(imgs_a, 6, background)
        report["warp_rmse_f1_ref"] = metrics.warp_rmse(imgs_b, 1, background)
        report["warp_rmse_f6_ref"] = metrics.warp_rmse(imgs_b, 6, background)
    if cfg.get("cloud-a") and cfg.get("cloud-b"):
        ca = gsplat.load_cloud(cfg["cloud-a"])
        cb = gsplat.load_cloud(cfg["cloud-b"])
        report["chamfer"] = metrics.chamfer(ca.p, cb.p)
    if cfg.get("grid-a") and cfg.get("grid-b"):
        ga = recon.load_grid(cfg["grid-a"])
        gb = recon.load_grid(cfg["grid-b"])
        report["volume_iou"] = metrics.volume_iou(ga, gb)
    write_json(out / "report.json", report)
    _write_resolved(out, "eval", cfg)
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve(args, ["dataset", "denoiser", "seeds", "steps", "eta", "ts", "k",
                          "codec", "out"])
    cfg.setdefault("denoiser", "jitter:0.2")
    cfg.setdefault("seeds", 20)
    cfg.setdefault("steps", 50)
    cfg.setdefault("eta", 0.0)
    cfg.setdefault("ts", 700)
    cfg.setdefault("k", 10)
    cfg.setdefault("codec", "identity")
    out = _out_dir(cfg)

    def one_seed(seed: int) -> dict:
        seed_dir = out / f"seed_{seed:03d}"
        row: dict = {"seed": seed}
        for mode in ("plain", "aware"):
            mode_dir = seed_dir / mode
            mode_dir.mkdir(parents=True, exist_ok=True)
            scfg = sampler.SamplerConfig(n_steps=int(cfg["steps"]), eta=float(cfg["eta"]),
                                         t_s=int(cfg["ts"]), k=int(cfg["k"]),
                                         codec=cfg["codec"], seed=seed)
            rcfg = _recon_cfg_from(cfg, scfg.background)
            images, _cloud, _trace, z0, cams, background = _run_sample(
                cfg["dataset"], cfg["denoiser"], mode, scfg, mode_dir, rcfg)
            codec = sampler.make_codec(cfg["codec"])
            refs = codec.decode(z0)
            row[mode] = {
                "warp_rmse_f1": metrics.warp_rmse(images, 1, background),
                "warp_rmse_f6": metrics.warp_rmse(images, 6, background),
                "psnr": float(np.mean([metrics.psnr(a, b) for a, b in zip(images, refs)])),
            }
        return row

    seed_list = list(range(int(cfg["seeds"])))
    rows = parallel_map(one_seed, seed_list)

    def reductions(key: str) -> list[float]:
        out_r = []
        for row in rows:
            plain, aware = row["plain"][key], row["aware"][key]
            if plain is None or aware is None or plain <= 0:
                continue
            out_r.append((plain - aware) / plain)
        return out_r

    report = {"per_seed": rows}
    for key in ("warp_rmse_f1", "warp_rmse_f6"):
        red = reductions(key)
        wins = sum(1 for r in red if r >= 0.0)
        report[f"win_rate_{key[-2:]}"] = wins / len(red) if red else None
        report[f"median_rel_reduction_{key[-2:]}"] = statistics.median(red) if red else None
    report["psnr_plain_mean"] = float(np.mean([r["plain"]["psnr"] for r in rows]))
    report["psnr_aware_mean"] = float(np.mean([r["aware"]["psnr"] for r in rows]))
    write_json(out / "report.json", report)
    _write_resolved(out, "compare", cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvsample",
                                description="multi-view diffusion sampling experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("gen-scene", help="write a procedural scene cloud")
    common(sp)
    sp.add_argument("--kind", choices=scenes.SCENE_KINDS)
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_gen_scene)

    sp = sub.add_parser("render", help="render a scene into a dataset directory")
    common(sp)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--views", type=int)
    sp.add_argument("--elevation", type=float)
    sp.add_argument("--radius", type=float)
    sp.add_argument("--fov", type=float)
    sp.add_argument("--size", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("fit-denoiser", help="fit the ridge denoiser on datasets")
    common(sp)
    sp.add_argument("--dataset", action="append", required=True)
    sp.add_argument("--buckets", type=int)
    sp.add_argument("--lam", type=float)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--codec", choices=["identity", "avgpool2"])
    sp.add_argument("--emb-dim", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_fit_denoiser)

    sp = sub.add_parser("sample", help="run DDIM sampling against a dataset")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--denoiser", help="oracle | jitter:G | linear:PATH")
    sp.add_argument("--mode", help="plain | aware")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--ts", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--codec", choices=["identity", "avgpool2"])
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("reconstruct", help="fuse a dataset into a Gaussian cloud")
    common(sp)
    sp.add_argument("--images", required=True)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--res", type=int)
    sp.add_argument("--min-views-frac", type=float)
    sp.set_defaults(fn=cmd_reconstruct)

    sp = sub.add_parser("eval", help="evaluate image dirs (and optional clouds/grids)")
    common(sp)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--metrics", help="comma list from psnr,ssim,warp")
    sp.add_argument("--cloud-a")
    sp.add_argument("--cloud-b")
    sp.add_argument("--grid-a")
    sp.add_argument("--grid-b")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("compare", help="paired plain-vs-aware study over seeds")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--denoiser")
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--ts", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--codec", choices=["identity", "avgpool2"])
    sp.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.fn(args)
    except SystemExit2 as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except OSError as e:
        print(f"file error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # runtime failures
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
