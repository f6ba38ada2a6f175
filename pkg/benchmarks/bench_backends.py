"""Benchmark the compiled kernels against the numpy fallback.

Usage:
    python benchmarks/bench_backends.py [--repeats N]

Covers the two hot paths (splat compositing, occupancy ray-marching) plus
an end-to-end reconstruct + re-render cycle on each backend. The end-to-end
case re-runs itself in a subprocess with MVSAMPLE_BACKEND=python, since the
backend is fixed at import time.
"""

import argparse
import importlib
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from mvsample import _core_py, backend, geometry, gsplat, recon, scenes


def timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def bench_composite(impl, repeats):
    rng = np.random.default_rng(0)
    n = 5000
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    cloud = gsplat.GaussianCloud(
        p=rng.uniform(-0.7, 0.7, (n, 3)),
        s=rng.uniform(0.01, 0.05, (n, 3)),
        q=q,
        alpha=rng.uniform(0.3, 1.0, n),
        c=rng.uniform(0, 1, (n, 3)),
    )
    (cam,) = geometry.make_orbit_cameras(1, 20.0)
    splats = gsplat._splat_arrays(cam, cloud)
    h, w = cam.height, cam.width

    def run():
        color = np.zeros((h, w, 3))
        trans = np.ones((h, w))
        depth = np.zeros((h, w))
        impl.composite_splats(splats["means"], splats["conics"], splats["depths"],
                              splats["alphas"], splats["colors"], splats["bounds"],
                              color, trans, depth, 0, h)

    return timeit(run, repeats)


def bench_march(impl, repeats):
    res = 64
    centers_all = recon._grid_centers(res).reshape(res, res, res, 3)
    occ = np.linalg.norm(centers_all, axis=3) <= 0.5
    occ_flat = np.ascontiguousarray(occ.reshape(-1).astype(np.uint8))
    idx = np.argwhere(occ)
    centers = np.ascontiguousarray(-1.0 + (idx + 0.5) * (2.0 / res))
    flat_idx = np.ascontiguousarray((idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2])
    (cam,) = geometry.make_orbit_cameras(1, 20.0)
    origin = np.ascontiguousarray(cam.position)

    def run():
        impl.march_visibility(origin, centers, flat_idx, occ_flat, res, 1.0 / res)

    return timeit(run, repeats)


def bench_reconstruct(repeats):
    cams = geometry.make_orbit_cameras(24, 20.0)
    cloud = scenes.generate_scene(scenes.SceneSpec(kind="blob-cluster", n_primitives=6, seed=3))
    images = scenes.render_views(cloud, cams, (0.5, 0.5, 0.5))

    def run():
        rec = recon.reconstruct(images, cams, recon.ReconConfig())
        scenes.render_views(rec, cams, (0.5, 0.5, 0.5))

    return timeit(run, repeats)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--e2e-only", action="store_true",
                        help="print only the end-to-end line (used by the subprocess)")
    args = parser.parse_args()

    if args.e2e_only:
        e2e, _ = bench_reconstruct(args.repeats)
        print(f"reconstruct + re-render 24 views [{backend.BACKEND}]: {e2e:.2f}s")
        return 0

    try:
        _core = importlib.import_module("mvsample._core")
    except ImportError:
        print("compiled backend not built (python setup_ext.py build_ext --inplace); "
              "benchmarking the fallback only")
        _core = None

    print(f"{'kernel':45s} {'python':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in (("composite_splats (5k splats, 64x64)", bench_composite),
                     ("march_visibility (ball res 64)", bench_march)):
        py_best, _ = fn(_core_py, args.repeats)
        if _core is not None:
            c_best, _ = fn(_core, args.repeats)
            print(f"{name:45s} {py_best * 1e3:8.2f}ms {c_best * 1e3:8.2f}ms "
                  f"{py_best / c_best:7.1f}x")
        else:
            print(f"{name:45s} {py_best * 1e3:8.2f}ms {'-':>10s} {'-':>8s}")

    e2e, _ = bench_reconstruct(args.repeats)
    print(f"\nreconstruct + re-render 24 views [{backend.BACKEND}]: {e2e:.2f}s")
    if backend.BACKEND == "compiled":
        env = dict(os.environ, MVSAMPLE_BACKEND="python")
        out = subprocess.run(
            [sys.executable, __file__, "--repeats", str(args.repeats), "--e2e-only"],
            capture_output=True, text=True, env=env,
        )
        print(out.stdout.strip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
