import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from satfield.geometry import (DegenerateRayError, LocalizationError, PinholeCamera, Ray, RayBatch, RpcCamera,
                               SceneBounds, affine_rpc, denormalize_point, generate_rays_pinhole,
                               normalize_point, read_pinhole, read_rpc, rpc_localize, rpc_ray,
                               sample_along_ray, sample_along_rays, write_pinhole, write_rpc)

BOX = SceneBounds(np.array([-10.0, -10.0, 0.0]), np.array([10.0, 10.0, 8.0]))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def identity_rpc():
    num_r = np.zeros(20)
    num_r[2] = 1.0  # row follows latitude
    num_c = np.zeros(20)
    num_c[1] = 1.0  # col follows longitude
    den = np.zeros(20)
    den[0] = 1.0
    offsets = dict(LINE_OFF=0.0, SAMP_OFF=0.0, LAT_OFF=0.0, LONG_OFF=0.0, HEIGHT_OFF=0.0, LINE_SCALE=1.0,
                   SAMP_SCALE=1.0, LAT_SCALE=1.0, LONG_SCALE=1.0, HEIGHT_SCALE=1.0)
    return RpcCamera(num_r, den, num_c, den.copy(), offsets, 10, 10)


class TestBounds:
    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            SceneBounds(np.zeros(3), np.array([1.0, 0.0, 1.0]))

    def test_normalize_corners(self):
        assert np.allclose(normalize_point(BOX.min, BOX), 0.0)
        assert np.allclose(normalize_point((BOX.min + BOX.max) / 2, BOX), 0.5)

    def test_clamp_flag(self):
        q, flag = normalize_point(np.array([[20.0, 0, 4], [0, 0, 4]]), BOX, return_flag=True)
        assert flag.tolist() == [True, False]
        assert q[0, 0] == 1.0

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_round_trip(self, q):
        p = denormalize_point(np.array(q), BOX)
        assert np.allclose(normalize_point(p, BOX), q, atol=1e-12)


class TestPinhole:
    def test_principal_point_is_optical_axis(self):
        rng = np.random.default_rng(0)
        R = random_rotation(rng)
        cam = PinholeCamera(50, 50, 9.5, 7.5, R, rng.standard_normal(3), 16, 20)
        ray = generate_rays_pinhole(cam, [[7, 9]])
        assert np.allclose(ray.directions[0], R.T @ [0, 0, 1], atol=1e-12)

    def test_pixel_center_convention(self):
        cam = PinholeCamera(1, 1, 0, 0, np.eye(3), np.zeros(3), 4, 4)
        d = generate_rays_pinhole(cam, [[0, 0]]).directions[0]
        assert np.allclose(d, np.array([0.5, 0.5, 1]) / np.linalg.norm([0.5, 0.5, 1]))

    def test_out_of_bounds_pixel(self):
        cam = PinholeCamera(1, 1, 0, 0, np.eye(3), np.zeros(3), 4, 4)
        with pytest.raises(IndexError, match="pixel index 1"):
            generate_rays_pinhole(cam, [[0, 0], [4, 0]])

    def test_non_orthonormal_rotation(self):
        with pytest.raises(ValueError):
            PinholeCamera(1, 1, 0, 0, np.diag([1, 1, -1.0]), np.zeros(3), 4, 4)

    @pytest.mark.parametrize("seed", range(5))
    def test_reprojection_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        cam = PinholeCamera(40, 45, 16, 12, random_rotation(rng), rng.standard_normal(3), 24, 32)
        rays = cam.generate_rays()
        assert np.allclose(np.linalg.norm(rays.directions, axis=1), 1.0, atol=1e-9)
        t = rng.uniform(0.5, 50, len(rays))
        px = cam.project(rays.origins + t[:, None] * rays.directions)
        assert np.abs(px - (rays.pixels + 0.5)).max() < 1e-6

    def test_file_round_trip(self, tmp_path):
        cam = PinholeCamera.look_at([1, 2, 30], [0, 0, 0], [0, 1, 0], 40.0, 16, 16)
        write_pinhole(cam, tmp_path / "a.cam")
        back = read_pinhole(tmp_path / "a.cam")
        assert np.array_equal(back.rotation, cam.rotation) and back.fx == cam.fx


class TestRpc:
    def test_linear_inverse_exact(self):
        cam = identity_rpc()
        p = rpc_localize(cam, 0.3, -0.2, 0.0)
        assert np.allclose(p, [-0.2, 0.3, 0.0], atol=1e-12)

    def test_constant_projection_fails(self):
        cam = identity_rpc()
        cam.line_num[:] = 0
        cam.samp_num[:] = 0
        cam.line_num[0] = 0.1
        with pytest.raises(LocalizationError) as info:
            rpc_localize(cam, 0.5, 0.5, 0.0)
        assert info.value.residual > 0

    @pytest.mark.parametrize("cubic", [0.0, 1e-3])
    def test_project_localize_round_trip(self, cubic):
        rng = np.random.default_rng(3)
        cam = affine_rpc([0.2, -0.1, -1], [0, 0, 4], 0.5, 40, 40, (0, 8), 20.0, rng, cubic)
        pts = np.column_stack([rng.uniform(-5, 5, 50), rng.uniform(-5, 5, 50), rng.uniform(0, 8, 50)])
        px = cam.project(pts)
        back = rpc_localize(cam, px[:, 0], px[:, 1], pts[:, 2])
        o = cam.offsets
        err_norm = np.abs(back[:, :2] - pts[:, :2]) / np.array([o["LONG_SCALE"], o["LAT_SCALE"]])
        assert err_norm.max() < 1e-6
        assert np.abs(cam.project(back) - px).max() < 1e-4

    def test_nadir_ray_points_down(self):
        cam = affine_rpc([0, 0, -1], [0, 0, 4], 0.5, 40, 40, (0, 8))
        ray = rpc_ray(cam, 20.0, 20.0, BOX)
        assert np.allclose(ray.direction, [0, 0, -1], atol=1e-9)

    def test_points_on_ray_project_to_pixel(self):
        cam = affine_rpc([0.3, 0.1, -1], [0, 0, 4], 0.5, 40, 40, (0, 8), 20.0,
                         np.random.default_rng(0), 1e-3)
        ray = rpc_ray(cam, 12.5, 30.5, BOX)
        pts = ray.at(np.linspace(0, 8, 9))
        assert np.abs(cam.project(pts) - [12.5, 30.5]).max() < 0.1

    def test_zero_altitude_extent(self):
        with pytest.raises((DegenerateRayError, ValueError)):
            rpc_ray(identity_rpc(), 0.0, 0.0, SceneBounds(np.array([0, 0, 1.0]), np.array([1, 1, 1.0])))

    def test_file_round_trip(self, tmp_path):
        cam = affine_rpc([0.2, 0.1, -1], [1, 2, 4], 0.5, 32, 48, (0, 8), 20.0, np.random.default_rng(1), 1e-3)
        write_rpc(cam, tmp_path / "v.rpc")
        back = read_rpc(tmp_path / "v.rpc")
        assert np.array_equal(back.line_num, cam.line_num) and back.offsets == cam.offsets
        assert back.shape == (32, 48)

    def test_missing_key(self, tmp_path):
        (tmp_path / "bad.rpc").write_text("LINE_OFF = 1\n")
        with pytest.raises(ValueError, match="missing"):
            read_rpc(tmp_path / "bad.rpc")


class TestSampling:
    def test_midpoints(self):
        box = SceneBounds(np.array([-1, -1, 0.0]), np.array([1, 1, 1.0]))
        s = sample_along_ray(Ray([0, 0, 1], [0, 0, -1]), box, 2)
        assert np.allclose(s.t, [0.25, 0.75]) and s.delta[0] == 0.5 and s.delta[1] == 0.5

    def test_miss(self):
        assert sample_along_ray(Ray([50, 0, 4], [0, 0, -1]), BOX, 8) is None

    def test_zero_samples(self):
        with pytest.raises(ValueError):
            sample_along_rays(RayBatch([[0, 0, 8]], [[0, 0, -1]]), BOX, 0)

    def test_stratified_within_strata(self):
        rng = np.random.default_rng(0)
        n = 1000
        o = np.column_stack([rng.uniform(-9, 9, n), rng.uniform(-9, 9, n), np.full(n, 8.0)])
        d = np.column_stack([rng.uniform(-0.3, 0.3, (n, 2)), -np.ones(n)])
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        s = sample_along_rays(RayBatch(o, d), BOX, 16, stratified=True, rng=rng)
        assert s.hit.all()
        width = (s.t_far - s.t_near) / 16
        lo = s.t_near[:, None] + np.arange(16) * width[:, None]
        assert np.all(s.t >= lo - 1e-12) and np.all(s.t <= lo + width[:, None] + 1e-12)
        assert np.all(np.diff(s.t, axis=1) > 0)
        assert np.all((s.positions >= 0) & (s.positions <= 1))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.integers(1, 32))
    def test_last_gap_is_stratum_width(self, dx, dy, n):
        d = np.array([dx, dy, -1.0])
        s = sample_along_ray(Ray([0, 0, 8], d), BOX, n)
        assert s is not None
        assert np.isclose(s.delta[-1], (s.t_far[0] - s.t_near[0]) / n)
        assert np.allclose(s.delta[:-1], np.diff(s.t))
