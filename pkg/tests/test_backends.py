"""Cross-checks between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from mvsample import _core_py, backend, gsplat
from mvsample.geometry import make_orbit_cameras

from conftest import random_cloud

compiled = pytest.importorskip("mvsample._core", reason="compiled kernels not built")


def splat_inputs(rng, n=24, h=32, w=32):
    cloud = random_cloud(rng, n)
    (cam,) = make_orbit_cameras(1, 18.0, width=w, height=h)
    return gsplat._splat_arrays(cam, cloud), h, w


def run_composite(impl, splats, h, w):
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    depth = np.zeros((h, w))
    impl.composite_splats(splats["means"], splats["conics"], splats["depths"],
                          splats["alphas"], splats["colors"], splats["bounds"],
                          color, trans, depth, 0, h)
    return color, trans, depth


def test_composite_backends_agree(rng):
    for _ in range(5):
        splats, h, w = splat_inputs(rng)
        fast = run_composite(compiled, splats, h, w)
        ref = run_composite(_core_py, splats, h, w)
        for a, b in zip(fast, ref):
            assert np.abs(a - b).max() < 1e-9


def test_composite_banding_is_exact(rng):
    splats, h, w = splat_inputs(rng)
    whole = run_composite(compiled, splats, h, w)
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    depth = np.zeros((h, w))
    for r0, r1 in [(0, 7), (7, 20), (20, h)]:
        compiled.composite_splats(splats["means"], splats["conics"], splats["depths"],
                                  splats["alphas"], splats["colors"], splats["bounds"],
                                  color, trans, depth, r0, r1)
    assert color.tobytes() == whole[0].tobytes()
    assert trans.tobytes() == whole[1].tobytes()


def test_march_backends_agree_exactly(rng):
    res = 32
    occ = rng.uniform(0, 1, (res, res, res)) < 0.05
    occ_flat = np.ascontiguousarray(occ.reshape(-1).astype(np.uint8))
    idx = np.argwhere(occ)
    centers = np.ascontiguousarray(-1.0 + (idx + 0.5) * (2.0 / res))
    flat_idx = np.ascontiguousarray((idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2])
    step = 1.0 / res
    for cam in make_orbit_cameras(4, 25.0):
        origin = np.ascontiguousarray(cam.position)
        a = compiled.march_visibility(origin, centers, flat_idx, occ_flat, res, step)
        b = _core_py.march_visibility(origin, centers, flat_idx, occ_flat, res, step)
        assert np.array_equal(np.asarray(a), np.asarray(b))


def test_render_thread_count_bit_stability(rng, monkeypatch):
    cloud = random_cloud(rng, 40)
    (cam,) = make_orbit_cameras(1, 12.0)
    outputs = {}
    for n in ("1", "4"):
        monkeypatch.setenv("MV_THREADS", n)
        outputs[n] = gsplat.render(cloud, cam, (0.1, 0.2, 0.3)).pixels.tobytes()
    assert outputs["1"] == outputs["4"]


def test_active_backend_is_reported():
    assert backend.BACKEND in ("compiled", "python")
