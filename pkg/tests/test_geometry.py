"""Projection and z-buffer tests against hand values and scan oracles."""

import math

import numpy as np
import pytest

from occkit import CameraRig, ProjectedPoints, lidar_to_ego, project_points, zbuffer_map

from conftest import make_rig, rot_z, translation


def zbuffer_oracle(points, width, height, channel="height"):
    """Linear scan keeping min (depth, source_index) per pixel."""
    best = {}
    for i in range(len(points)):
        key = (int(points.v[i]), int(points.u[i]))
        rank = (points.depth[i], int(points.source_index[i]))
        if key not in best or rank < best[key][0]:
            payload = points.ego_height[i] if channel == "height" else points.depth[i]
            best[key] = (rank, payload)
    values = np.full((height, width), np.nan)
    valid = np.zeros((height, width), dtype=bool)
    for (v, u), (_, payload) in best.items():
        values[v, u] = payload
        valid[v, u] = True
    return values, valid


def random_projected(rng, n, width, height) -> ProjectedPoints:
    return ProjectedPoints(
        u=rng.integers(0, width, size=n),
        v=rng.integers(0, height, size=n),
        depth=rng.uniform(0.1, 50.0, size=n),
        ego_height=rng.uniform(-2.0, 4.0, size=n),
        source_index=np.arange(n, dtype=np.int64),
    )


class TestLidarToEgo:
    def test_identity(self):
        rig = make_rig()
        np.testing.assert_array_equal(lidar_to_ego([[1.0, 2.0, 3.0]], rig), [[1.0, 2.0, 3.0]])

    def test_pure_translation(self):
        rig = make_rig(T_le=translation([0.0, 0.0, 1.5]))
        np.testing.assert_array_equal(lidar_to_ego([[0.0, 0.0, 0.0]], rig), [[0.0, 0.0, 1.5]])

    def test_rotation_plus_translation(self):
        # Hand multiplication: Rz(90deg) @ (1,0,0) = (0,1,0); plus t = (1,1,0).
        T = translation([1.0, 0.0, 0.0])
        T[:3, :3] = rot_z(math.pi / 2)
        rig = make_rig(T_le=T)
        np.testing.assert_allclose(
            lidar_to_ego([[1.0, 0.0, 0.0]], rig), [[1.0, 1.0, 0.0]], atol=1e-15
        )

    def test_length_preserved(self):
        rng = np.random.default_rng(11)
        cloud = rng.normal(size=(57, 3))
        assert lidar_to_ego(cloud, make_rig()).shape == (57, 3)


class TestProjectPoints:
    def test_principal_axis_point(self):
        pts = project_points([[0.0, 0.0, 5.0]], make_rig())
        assert (pts.u[0], pts.v[0], pts.depth[0]) == (50, 50, 5.0)

    def test_point_behind_camera_dropped(self):
        assert len(project_points([[0.0, 0.0, -1.0]], make_rig())) == 0

    def test_zero_depth_dropped_not_divided(self):
        assert len(project_points([[1.0, 1.0, 0.0]], make_rig())) == 0

    def test_perspective_division_both_border_branches(self):
        # u = floor(100*1/4 + 50) = 75, v = floor(100*2/4 + 50) = 100.
        point = [[1.0, 2.0, 4.0]]
        assert len(project_points(point, make_rig(height=100))) == 0
        pts = project_points(point, make_rig(height=101))
        assert (pts.u[0], pts.v[0], pts.depth[0]) == (75, 100, 4.0)

    def test_ego_height_from_ego_transform(self):
        rig = make_rig(T_le=translation([0.0, 0.0, 1.5]))
        pts = project_points([[0.0, 0.0, 5.0]], rig)
        assert pts.ego_height[0] == 6.5

    def test_output_follows_input_order(self):
        cloud = [[0.0, 0.0, 5.0], [0.0, 0.0, -1.0], [0.1, 0.1, 3.0]]
        pts = project_points(cloud, make_rig())
        np.testing.assert_array_equal(pts.source_index, [0, 2])
        assert pts.depth[0] == 5.0 and pts.depth[1] == 3.0

    def test_projection_consistency(self):
        # Re-multiplying K[R|t] against the original points must reproduce
        # the integer pixels of every kept point.
        rng = np.random.default_rng(42)
        R = rot_z(0.3)
        rig = make_rig(R_lc=R, t_lc=np.array([0.2, -0.1, 0.5]))
        cloud = rng.uniform(-4.0, 4.0, size=(500, 3)) + [0.0, 0.0, 6.0]
        pts = project_points(cloud, rig)
        assert len(pts) > 0
        P = rig.K @ np.hstack([rig.R_lc, rig.t_lc[:, None]])
        for i in range(len(pts)):
            hom = P @ np.append(cloud[pts.source_index[i]], 1.0)
            assert math.floor(hom[0] / hom[2]) == pts.u[i]
            assert math.floor(hom[1] / hom[2]) == pts.v[i]


class TestZBuffer:
    def test_smallest_depth_wins(self):
        pts = ProjectedPoints(
            u=np.array([3, 3]),
            v=np.array([3, 3]),
            depth=np.array([2.0, 5.0]),
            ego_height=np.array([1.0, 4.0]),
            source_index=np.array([0, 1]),
        )
        m = zbuffer_map(pts, 8, 8)
        assert m.valid[3, 3] and m.values[3, 3] == 1.0
        assert m.valid.sum() == 1

    def test_empty_input(self):
        empty = ProjectedPoints(*(np.empty(0, dtype=t) for t in (np.int64,) * 2 + (np.float64,) * 2 + (np.int64,)))
        m = zbuffer_map(empty, 4, 5)
        assert m.values.shape == (5, 4)
        assert not m.valid.any()

    def test_depth_channel(self):
        pts = ProjectedPoints(
            u=np.array([1]), v=np.array([2]), depth=np.array([7.5]),
            ego_height=np.array([0.3]), source_index=np.array([0]),
        )
        m = zbuffer_map(pts, 4, 4, channel="depth")
        assert m.values[2, 1] == 7.5 and m.channel == "depth"

    def test_single_pixel_matches_bruteforce(self):
        rng = np.random.default_rng(7)
        n = 100
        pts = ProjectedPoints(
            u=np.full(n, 2, dtype=np.int64),
            v=np.full(n, 3, dtype=np.int64),
            depth=rng.uniform(1.0, 10.0, size=n),
            ego_height=rng.uniform(-1.0, 5.0, size=n),
            source_index=np.arange(n, dtype=np.int64),
        )
        m = zbuffer_map(pts, 5, 5)
        winner = int(np.argmin(pts.depth))
        assert m.values[3, 2] == pts.ego_height[winner]

    @pytest.mark.parametrize("channel", ["height", "depth"])
    def test_random_matches_bruteforce(self, channel):
        rng = np.random.default_rng(13)
        pts = random_projected(rng, 800, width=16, height=12)
        m = zbuffer_map(pts, 16, 12, channel=channel)
        values, valid = zbuffer_oracle(pts, 16, 12, channel=channel)
        np.testing.assert_array_equal(m.valid, valid)
        np.testing.assert_array_equal(m.values[valid], values[valid])

    def test_idempotent_on_survivors(self):
        rng = np.random.default_rng(5)
        pts = random_projected(rng, 300, width=8, height=8)
        full = zbuffer_map(pts, 8, 8)
        keep = []
        for i in range(len(pts)):
            if full.valid[pts.v[i], pts.u[i]] and full.values[pts.v[i], pts.u[i]] == pts.ego_height[i]:
                keep.append(i)
        survivors = ProjectedPoints(
            *(getattr(pts, f)[keep] for f in ("u", "v", "depth", "ego_height", "source_index"))
        )
        again = zbuffer_map(survivors, 8, 8)
        np.testing.assert_array_equal(again.valid, full.valid)
        np.testing.assert_array_equal(again.values[again.valid], full.values[full.valid])

    def test_permutation_invariant_with_distinct_depths(self):
        rng = np.random.default_rng(3)
        pts = random_projected(rng, 200, width=10, height=10)
        perm = rng.permutation(len(pts))
        shuffled = ProjectedPoints(
            *(getattr(pts, f)[perm] for f in ("u", "v", "depth", "ego_height", "source_index"))
        )
        a = zbuffer_map(pts, 10, 10)
        b = zbuffer_map(shuffled, 10, 10)
        np.testing.assert_array_equal(a.valid, b.valid)
        np.testing.assert_array_equal(a.values[a.valid], b.values[b.valid])

    def test_tie_broken_by_smallest_source_index(self):
        pts = ProjectedPoints(
            u=np.array([0, 0]), v=np.array([0, 0]),
            depth=np.array([1.0, 1.0]),
            ego_height=np.array([9.0, -9.0]),
            source_index=np.array([4, 2]),
        )
        m = zbuffer_map(pts, 1, 1)
        assert m.values[0, 0] == -9.0


class TestRigValidation:
    def test_rejects_bad_intrinsics(self):
        with pytest.raises(ValueError):
            make_rig(f=-1.0)
        K = np.array([[100.0, 0.0, 50.0], [0.0, 100.0, 50.0], [0.0, 0.0, 2.0]])
        with pytest.raises(ValueError):
            CameraRig(K=K, R_lc=np.eye(3), t_lc=np.zeros(3), T_le=np.eye(4),
                      image_width=100, image_height=100)

    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(ValueError, match="orthonormal"):
            make_rig(R_lc=np.eye(3) * 1.001)

    def test_rejects_bad_homogeneous_row(self):
        T = np.eye(4)
        T[3, 0] = 0.1
        with pytest.raises(ValueError, match="bottom row"):
            make_rig(T_le=T)
