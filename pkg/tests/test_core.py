import numpy as np
import pytest

from scanwalk.core import (
    BoundingBox,
    GeometryError,
    Intrinsics,
    PointCloud,
    ScenePose,
    back_project,
    mask_box,
    project_point,
    project_points,
    quat_from_yaw_pitch,
    quat_to_matrix,
    relative_displacement,
    wrap_angle_deg,
)

INTR = Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def pose_at(x, y, z, yaw=0.0, pitch=0.0, fid="f"):
    return ScenePose(fid, np.array([x, y, z]), quat_from_yaw_pitch(yaw, pitch), INTR)


def random_pose(rng, fid="r"):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return ScenePose(fid, rng.uniform(-2, 2, size=3), q, INTR)


class TestProjectPoint:
    def test_principal_point_one_meter_ahead(self):
        pose = pose_at(0, 0, 0)
        p = pose.position + 1.0 * pose.forward
        u, v, z = project_point(p, pose)
        assert (u, v, z) == (320.0, 240.0, 1.0)

    def test_hand_pinhole_case(self):
        # u = cx + fx * x/z with x = 0.3 toward camera right, z = 2.0
        pose = pose_at(0, 0, 0)
        p = pose.position + 2.0 * pose.forward + 0.3 * pose.right
        u, v, z = project_point(p, pose)
        assert abs(u - 395.0) < 1e-9
        assert abs(v - 240.0) < 1e-9
        assert abs(z - 2.0) < 1e-12

    def test_behind_camera_marker(self):
        pose = pose_at(0, 0, 0)
        assert project_point(pose.position - 0.5 * pose.forward, pose) is None

    def test_backprojection_recovers_point(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            pose = random_pose(rng)
            p = pose.position + pose.forward * rng.uniform(0.2, 5.0) + \
                pose.right * rng.uniform(-1, 1) + pose.down * rng.uniform(-1, 1)
            proj = project_point(p, pose)
            if proj is None:
                continue
            u, v, z = proj
            recovered = back_project(u, v, z, pose)[0]
            assert np.abs(recovered - p).max() < 1e-6

    def test_double_cover_invariance(self):
        rng = np.random.default_rng(3)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        pose_pos = ScenePose("a", np.zeros(3), q, INTR)
        pose_neg = ScenePose("b", np.zeros(3), -q, INTR)
        p = np.array([0.4, 0.2, 1.7])
        pr_a = project_point(p, pose_pos)
        pr_b = project_point(p, pose_neg)
        if pr_a is None:
            assert pr_b is None
        else:
            np.testing.assert_allclose(pr_a, pr_b, atol=1e-9)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(7)
        pose = random_pose(rng)
        pts = rng.uniform(-2, 2, size=(50, 3))
        uv, z = project_points(pts, pose)
        for i, p in enumerate(pts):
            single = project_point(p, pose)
            if single is None:
                assert z[i] <= 0
            else:
                np.testing.assert_allclose(uv[i], single[:2], atol=1e-9)


class TestRelativeDisplacement:
    def test_identity(self):
        a = pose_at(1, 2, 1.2, yaw=40)
        d = relative_displacement(a, a)
        assert d == (0.0, 0.0, 0.0, 0.0)

    def test_translation_along_view_axis(self):
        a = pose_at(0, 0, 1.0, yaw=30)
        b = ScenePose("b", a.position + 0.30 * a.forward, a.orientation, INTR)
        fwd, rgt, up, yaw = relative_displacement(a, b)
        assert abs(fwd - 0.30) < 1e-12
        assert abs(rgt) < 1e-12 and abs(up) < 1e-12 and abs(yaw) < 1e-9

    def test_pure_rotation(self):
        a = pose_at(0.5, 0.5, 1.0, yaw=0)
        b = pose_at(0.5, 0.5, 1.0, yaw=30)
        fwd, rgt, up, yaw = relative_displacement(a, b)
        assert (fwd, rgt, up) == (0.0, 0.0, 0.0)
        assert abs(yaw - 30.0) < 1e-9

    def test_antisymmetry_at_equal_yaw(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            yaw = rng.uniform(-180, 180)
            a = pose_at(*rng.uniform(-1, 1, 3), yaw=yaw, fid="a")
            b = pose_at(*rng.uniform(-1, 1, 3), yaw=yaw, fid="b")
            ab = relative_displacement(a, b)
            ba = relative_displacement(b, a)
            assert abs(ab.forward + ba.forward) < 1e-9
            assert abs(ab.right + ba.right) < 1e-9

    def test_yaw_delta_wrapping(self):
        a = pose_at(0, 0, 1, yaw=170)
        b = pose_at(0, 0, 1, yaw=-170)
        assert abs(relative_displacement(a, b).yaw_delta_deg - 20.0) < 1e-9


class TestWrapAngle:
    @pytest.mark.parametrize(
        "angle,expected",
        [(0, 0), (180, 180), (181, -179), (-180, 180), (360, 0), (-90, -90), (540, 180)],
    )
    def test_wrap(self, angle, expected):
        assert abs(wrap_angle_deg(angle) - expected) < 1e-9


class TestTypes:
    def test_quaternion_norm_guard(self):
        with pytest.raises(GeometryError):
            ScenePose("f", np.zeros(3), np.array([1.002, 0.0, 0.0, 0.0]), INTR)

    def test_quaternion_normalized_within_tolerance(self):
        q = np.array([1.0, 0, 0, 0]) * (1 + 5e-4)
        pose = ScenePose("f", np.zeros(3), q, INTR)
        assert abs(np.linalg.norm(pose.orientation) - 1.0) < 1e-12

    def test_intrinsics_guards(self):
        with pytest.raises(GeometryError):
            Intrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
        with pytest.raises(GeometryError):
            Intrinsics(fx=1, fy=1, cx=20, cy=0, width=10, height=10)

    def test_box_iou_and_guards(self):
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 5, 15, 15)
        assert abs(a.iou(b) - 25 / 175) < 1e-12
        assert a.iou(BoundingBox(20, 20, 30, 30)) == 0.0
        with pytest.raises(GeometryError):
            BoundingBox(5, 0, 5, 10)

    def test_box_clipping(self):
        box = BoundingBox(-5, -5, 20, 30)
        clipped = box.clipped(10, 10)
        assert (clipped.xmin, clipped.ymin, clipped.xmax, clipped.ymax) == (0, 0, 10, 10)
        assert BoundingBox(20, 20, 30, 30).clipped(10, 10) is None

    def test_cloud_guards(self):
        with pytest.raises(GeometryError):
            PointCloud(points=np.zeros((0, 3)), instance_id="x")
        with pytest.raises(GeometryError):
            PointCloud(points=np.array([[np.nan, 0, 0]]), instance_id="x")

    def test_mask_box(self):
        mask = np.zeros((6, 8), dtype=bool)
        assert mask_box(mask) is None
        mask[2:4, 3:6] = True
        box = mask_box(mask)
        assert (box.xmin, box.ymin, box.xmax, box.ymax) == (3, 2, 6, 4)


def test_rotation_matrix_orthonormal():
    rng = np.random.default_rng(9)
    for _ in range(20):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        m = quat_to_matrix(q)
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(m) - 1.0) < 1e-12


def test_yaw_pitch_construction_level_camera():
    pose = pose_at(0, 0, 1, yaw=90)
    np.testing.assert_allclose(pose.forward, [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(pose.down, [0, 0, -1], atol=1e-12)
    assert abs(pose.yaw_deg - 90.0) < 1e-9
