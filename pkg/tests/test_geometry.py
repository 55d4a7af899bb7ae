import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egoctl.geometry import (
    CameraIntrinsics,
    GridSpec,
    RigidPose,
    apply_pose,
    euler_to_rotation,
    gaussian_heatmap,
    gaussian_heatmaps,
    in_bounds,
    project,
    project_points,
    unproject,
)
from oracles import heatmap_oracle, homogeneous

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def cam(fx=1.0, fy=1.0, cx=0.0, cy=0.0, width=640, height=480):
    return CameraIntrinsics(fx, fy, cx, cy, width, height)


class TestIntrinsics:
    def test_rejects_bad_focal(self):
        with pytest.raises(ValueError):
            cam(fx=0.0)

    @pytest.mark.parametrize("cx,cy", [(-1.0, 0.0), (640.0, 0.0), (0.0, 480.0)])
    def test_rejects_principal_point_outside(self, cx, cy):
        with pytest.raises(ValueError):
            cam(cx=cx, cy=cy)

    def test_dict_round_trip(self):
        k = cam(500, 510, 320, 240)
        assert CameraIntrinsics.from_dict(k.to_dict()) == k

    def test_from_dict_missing_key(self):
        with pytest.raises((KeyError, ValueError)):
            CameraIntrinsics.from_dict({"fx": 1.0})


class TestProject:
    def test_on_axis_unit_depth(self):
        pj = project([0, 0, 1], cam())
        np.testing.assert_array_equal(pj.u, [0.0, 0.0])
        assert pj.d == 1.0 and pj.valid

    def test_formula(self):
        pj = project([1, 1, 2], cam(100, 100, 50, 50, 200, 200))
        np.testing.assert_allclose(pj.u, [100.0, 100.0], rtol=0, atol=1e-12)
        assert pj.d == 0.5

    @pytest.mark.parametrize("z", [-1.0, 0.0, 1e-4, 5e-5])
    def test_behind_or_degenerate_is_invalid(self, z):
        pj = project([0, 0, z], cam())
        assert not pj.valid

    def test_valid_implies_positive_disparity(self, rng):
        p = rng.normal(size=(500, 3))
        _, d, valid = project_points(p, cam())
        assert (d[valid] > 0).all()
        assert (d[~valid] == 0).all()

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 50))
    def test_unproject_round_trip(self, x, y, z):
        k = cam(500, 480, 320, 240)
        pj = project([x, y, z], k)
        back = unproject(pj.u, pj.d, k)
        np.testing.assert_allclose(back, [x, y, z], rtol=1e-9, atol=1e-9 * max(1.0, abs(z)))

    def test_in_bounds(self):
        k = cam(100, 100, 50, 50, 100, 100)
        u = np.array([[0.0, 0.0], [99.9, 99.9], [100.0, 50.0], [-0.1, 50.0]])
        np.testing.assert_array_equal(in_bounds(u, np.ones(4, bool), k), [True, True, False, False])
        assert not in_bounds(u[:1], np.zeros(1, bool), k)[0]


class TestHeatmap:
    grid = GridSpec(16, 20)

    def test_peak_on_cell_center(self):
        hm = gaussian_heatmap((5.0, 7.0), 1.5, self.grid)
        assert hm.values[7, 5] == 1.0
        assert hm.values.max() == 1.0

    def test_value_at_sigma(self):
        hm = gaussian_heatmap((5.0, 7.0), 2.0, self.grid)
        assert hm.values[7, 7] == pytest.approx(math.exp(-0.5), abs=1e-15)
        assert hm.values[7, 7] == pytest.approx(0.60653, abs=1e-5)

    def test_far_outside(self):
        sigma = 1.5
        hm = gaussian_heatmap((-1.0 - 10 * sigma, 3.0), sigma, self.grid)
        assert hm.values.max() < math.exp(-50)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            gaussian_heatmap((1, 1), 0.0, self.grid)
        with pytest.raises(ValueError):
            gaussian_heatmaps(np.zeros((2, 2)), -1.0, self.grid)

    def test_matches_oracle(self, backend, rng):
        centers = rng.uniform(-3, 22, size=(5, 2))
        got = gaussian_heatmaps(centers, 1.7, self.grid)
        for i, (cx, cy) in enumerate(centers):
            np.testing.assert_allclose(got[i], heatmap_oracle(cx, cy, 1.7, 16, 20), rtol=1e-13, atol=0)

    def test_values_in_unit_interval_and_peak_nearest_cell(self, rng):
        for c in rng.uniform(0, 15, size=(20, 2)):
            v = gaussian_heatmap(c, 1.5, self.grid).values
            assert v.min() >= 0.0 and v.max() <= 1.0
            r, col = np.unravel_index(np.argmax(v), v.shape)
            assert (r, col) == (int(round(c[1])), int(round(c[0])))

    @pytest.mark.parametrize("direction", [(1, 0), (0, 1), (1, 1), (-1, 2)])
    def test_monotone_along_rays(self, direction):
        g = GridSpec(64, 64)
        v = gaussian_heatmap((20.0, 20.0), 3.0, g).values
        dx, dy = direction
        samples = [v[20 + s * dy, 20 + s * dx] for s in range(0, 20)]
        assert all(a > b for a, b in zip(samples, samples[1:]))

    def test_pixel_grid_mapping(self):
        g = GridSpec(60, 80, scale=8)
        np.testing.assert_allclose(g.pixel_to_grid([4.0, 4.0]), [0.0, 0.0])
        np.testing.assert_allclose(g.grid_to_pixel(g.pixel_to_grid([123.4, 55.5])), [123.4, 55.5])
        assert GridSpec.for_image(cam(width=640, height=480), 8).shape == (60, 80)

    def test_gridspec_validation(self):
        with pytest.raises(ValueError):
            GridSpec(0, 4)
        with pytest.raises(ValueError):
            GridSpec(4, 4, scale=0)


class TestRotations:
    def test_zero_is_identity(self):
        np.testing.assert_array_equal(euler_to_rotation(0, 0, 0), np.eye(3))

    def test_yaw_quarter_turn(self):
        r = euler_to_rotation(0, math.pi / 2, 0)
        np.testing.assert_allclose(r @ [1, 0, 0], [0, 0, -1], atol=1e-15)

    def test_composition_order(self, rng):
        p, y, r = rng.uniform(-3, 3, 3)
        rx = euler_to_rotation(p, 0, 0)
        ry = euler_to_rotation(0, y, 0)
        rz = euler_to_rotation(0, 0, r)
        np.testing.assert_allclose(euler_to_rotation(p, y, r), rz @ ry @ rx, atol=1e-15)

    def test_orthonormal_many(self, rng):
        for p, y, r in rng.uniform(-2 * math.pi, 2 * math.pi, (1000, 3)):
            m = euler_to_rotation(p, y, r)
            assert np.abs(m.T @ m - np.eye(3)).max() < 1e-9
            assert abs(np.linalg.det(m) - 1.0) < 1e-9


class TestPose:
    def test_identity(self, rng):
        p = rng.normal(size=3)
        np.testing.assert_array_equal(apply_pose(RigidPose(), p), p)

    def test_pure_translation(self):
        np.testing.assert_array_equal(apply_pose(RigidPose(np.eye(3), [0, 0, 1]), [0, 0, 0]), [0, 0, 1])

    def test_against_homogeneous(self, rng):
        worst = 0.0
        for _ in range(100):
            pose = RigidPose.from_euler(*rng.uniform(-3, 3, 3), translation=rng.normal(size=3))
            p = rng.normal(size=3)
            ref = (homogeneous(pose.rotation, pose.translation) @ np.append(p, 1.0))[:3]
            worst = max(worst, np.abs(apply_pose(pose, p) - ref).max())
        assert worst < 1e-12

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            RigidPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            RigidPose(2 * np.eye(3), np.zeros(3))

    @settings(max_examples=100, deadline=None)
    @given(angles, angles, angles, st.lists(st.floats(-10, 10), min_size=3, max_size=3))
    def test_rigidity(self, p, y, r, t):
        pose = RigidPose.from_euler(p, y, r, translation=t)
        pts = np.random.default_rng(0).normal(size=(8, 3))
        moved = apply_pose(pose, pts)
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d1 = np.linalg.norm(moved[:, None] - moved[None], axis=-1)
        np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-12)

    def test_batch_matches_single(self, rng):
        pose = RigidPose.from_euler(0.3, -0.2, 1.1, translation=[0.1, 0.2, 0.3])
        pts = rng.normal(size=(10, 3))
        batch = apply_pose(pose, pts)
        for n in range(10):
            np.testing.assert_array_equal(batch[n], apply_pose(pose, pts[n]))

    def test_compose(self, rng):
        a = RigidPose.from_euler(*rng.normal(size=3), translation=rng.normal(size=3))
        b = RigidPose.from_euler(*rng.normal(size=3), translation=rng.normal(size=3))
        p = rng.normal(size=3)
        np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
        np.testing.assert_allclose(a.compose(b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)
