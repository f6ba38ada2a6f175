import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsample import geometry
from mvsample.geometry import CameraPose, make_orbit_cameras, pixel_ray, plucker_map, project


def test_orbit_azimuths_24_views():
    cams = make_orbit_cameras(24, 20.0)
    assert [c.azimuth_deg for c in cams] == [15.0 * i for i in range(24)]
    assert all(c.elevation_deg == 20.0 for c in cams)


def test_orbit_single_view():
    (cam,) = make_orbit_cameras(1, 10.0)
    assert cam.azimuth_deg == 0.0


def test_orbit_positions_hand_derived():
    cams = make_orbit_cameras(4, 0.0, radius=2.0)
    expected = [(0, 0, 2), (2, 0, 0), (0, 0, -2), (-2, 0, 0)]
    for cam, exp in zip(cams, expected):
        assert np.allclose(cam.position, exp, atol=1e-9)


@pytest.mark.parametrize("kwargs", [
    dict(radius=0.0), dict(radius=-1.0), dict(fov_deg=0.0), dict(fov_deg=180.0),
])
def test_invalid_camera_args(kwargs):
    base = dict(n_views=4, elevation_deg=0.0, radius=2.0, fov_deg=50.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        make_orbit_cameras(**base)


def test_camera_invariants():
    for cam in make_orbit_cameras(10, 33.0, radius=1.7):
        rot = cam.world_to_cam[:, :3]
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-9)
        assert abs(np.linalg.norm(cam.position) - cam.radius) < 1e-9
        a, e = math.radians(cam.azimuth_deg), math.radians(cam.elevation_deg)
        expected = cam.radius * np.array(
            [math.cos(e) * math.sin(a), math.sin(e), math.cos(e) * math.cos(a)])
        assert np.allclose(cam.position, expected, atol=1e-9)
        # the stored transform reproduces the position: R^T (-t) = position
        t = cam.world_to_cam[:, 3]
        assert np.allclose(-rot.T @ t, cam.position, atol=1e-9)


def test_project_origin_hits_center():
    for cam in make_orbit_cameras(6, 25.0, radius=2.0):
        pix, depth = project(cam, (0.0, 0.0, 0.0))
        assert np.allclose(pix, (cam.width / 2, cam.height / 2), atol=1e-6)
        assert abs(depth - cam.radius) < 1e-9


def test_project_behind_camera():
    (cam,) = make_orbit_cameras(1, 0.0, radius=2.0, fov_deg=90.0, width=64, height=64)
    assert project(cam, (0.0, 0.0, 2.5)) is None
    assert project(cam, cam.position) is None


def test_project_hand_derived():
    (cam,) = make_orbit_cameras(1, 0.0, radius=2.0, fov_deg=90.0, width=64, height=64)
    pix, depth = project(cam, (1.0, 0.0, 0.0))
    # f = 32, camera at (0,0,2): offset 1 unit right at depth 2 -> 16 px
    assert np.allclose(pix, (48.0, 32.0), atol=1e-9)
    assert abs(depth - 2.0) < 1e-9


def test_pixel_ray_center_points_at_origin():
    for cam in make_orbit_cameras(5, 18.0, width=65, height=65):
        ray = pixel_ray(cam, (32, 32))
        toward_origin = -cam.position / np.linalg.norm(cam.position)
        assert np.allclose(ray.direction, toward_origin, atol=1e-6)
        assert abs(np.linalg.norm(ray.direction) - 1.0) < 1e-9


def test_pixel_ray_hand_derived():
    (cam,) = make_orbit_cameras(1, 0.0, radius=2.0, fov_deg=90.0, width=64, height=64)
    ray = pixel_ray(cam, (0, 32))
    # Manual arithmetic: camera direction ((0.5-32)/32, (32.5-32)/32, 1),
    # world axes x=(1,0,0), y=(0,-1,0), z=(0,0,-1).
    d = np.array([-31.5 / 32.0, -0.5 / 32.0, -1.0])
    d /= np.linalg.norm(d)
    assert np.allclose(ray.direction, d, atol=1e-12)
    # dominant terms match the small-offset approximation (-31.5/32, 0, -1)
    approx = np.array([-31.5 / 32.0, 0.0, -1.0])
    approx /= np.linalg.norm(approx)
    assert np.abs(ray.direction - approx).max() < 0.02


def test_pixel_ray_out_of_bounds():
    (cam,) = make_orbit_cameras(1, 0.0, width=64, height=64)
    for px in [(-1, 0), (64, 0), (0, 64), (0, -0.5)]:
        with pytest.raises(ValueError):
            pixel_ray(cam, px)


def test_project_pixel_ray_round_trip():
    (cam,) = make_orbit_cameras(1, 12.0, width=64, height=64)
    for px in [(0, 0), (10, 50), (63, 63), (31, 32)]:
        ray = pixel_ray(cam, px)
        pt = ray.origin + cam.radius * ray.direction
        pix, _ = project(cam, pt)
        assert np.allclose(pix, (px[0] + 0.5, px[1] + 0.5), atol=1e-3)


def test_project_pixel_ray_consistency_random_points():
    rng = np.random.default_rng(0)
    for cam in make_orbit_cameras(4, 20.0, width=64, height=64):
        pts = rng.uniform(-0.5, 0.5, (1000, 3))
        for pt in pts:
            res = project(cam, pt)
            assert res is not None
            pix, _depth = res
            if not (0 <= pix[0] < 64 and 0 <= pix[1] < 64):
                continue
            ray = pixel_ray(cam, (pix[0] - 0.5, pix[1] - 0.5))
            along = ray.origin + np.linalg.norm(pt - ray.origin) * ray.direction
            pix2, _ = project(cam, along)
            assert np.abs(pix2 - pix).max() < 1e-3


def test_plucker_center_moment_zero():
    (cam,) = make_orbit_cameras(1, 15.0, width=65, height=65)
    rmap = plucker_map(cam)
    assert np.allclose(rmap.data[32, 32, 3:], 0.0, atol=1e-9)


def test_plucker_identities():
    (cam,) = make_orbit_cameras(1, 40.0, width=32, height=32)
    rmap = plucker_map(cam)
    d = rmap.data[:, :, :3]
    m = rmap.data[:, :, 3:]
    assert np.abs(np.linalg.norm(d, axis=2) - 1.0).max() < 1e-6
    assert np.abs(np.sum(d * m, axis=2)).max() < 1e-6


def test_plucker_origin_shift_invariance():
    (cam,) = make_orbit_cameras(1, 10.0, width=16, height=16)
    rmap = plucker_map(cam)
    d = rmap.data[:, :, :3]
    m = rmap.data[:, :, 3:]
    for lam in (0.5, -1.3, 4.0):
        shifted_origin = cam.position[None, None, :] + lam * d
        m2 = np.cross(shifted_origin, d)
        assert np.abs(m2 - m).max() < 1e-9


@settings(deadline=None, max_examples=25)
@given(
    az=st.floats(0, 360, exclude_max=True),
    el=st.floats(-80, 80),
    radius=st.floats(0.5, 5.0),
)
def test_camera_position_norm_property(az, el, radius):
    cam = CameraPose(az, el, radius, 50.0, 32, 32)
    assert abs(np.linalg.norm(cam.position) - radius) < 1e-9


def test_camera_json_round_trip(tmp_path):
    cams = make_orbit_cameras(5, 12.0, radius=1.5, fov_deg=45.0, width=48, height=36)
    path = tmp_path / "cameras.json"
    geometry.save_cameras(path, cams)
    loaded = geometry.load_cameras(path)
    assert loaded == cams
    # derived matrices never serialized
    text = path.read_text()
    assert "world_to_cam" not in text and "position" not in text
