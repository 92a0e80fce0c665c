import math

import numpy as np
import pytest

from locbench.geometry import (
    CameraIntrinsics,
    Frustum,
    Pose,
    build_frustum,
    pose_error,
    project_point,
    project_points,
    quat_from_axis_angle,
    quat_from_rotation_matrix,
    quat_multiply,
    rotation_error,
    rotation_matrix_from_quat,
)

from oracles.projective import angle_between_deg, matrix_to_quat_wxyz, rodrigues

INTR = CameraIntrinsics(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)


def random_pose(rng):
    q = quat_from_rotation_matrix(rodrigues(rng.normal(size=3), rng.uniform(0, math.pi)))
    return Pose(rng.uniform(-5, 5, size=3), q)


class TestQuaternions:
    def test_matrix_round_trip(self, rng):
        for _ in range(300):
            R = rodrigues(rng.normal(size=3), rng.uniform(0, math.pi))
            q = quat_from_rotation_matrix(R)
            assert abs(np.linalg.norm(q) - 1) < 1e-12
            assert np.allclose(rotation_matrix_from_quat(q), R, atol=1e-12)

    def test_round_trip_near_180_degrees(self, rng):
        # Shepperd branch selection keeps precision where trace ~ -1
        for _ in range(100):
            R = rodrigues(rng.normal(size=3), math.pi - 1e-7)
            q = quat_from_rotation_matrix(R)
            assert np.allclose(rotation_matrix_from_quat(q), R, atol=1e-9)

    def test_w_nonnegative(self, rng):
        for _ in range(100):
            q = quat_from_rotation_matrix(rodrigues(rng.normal(size=3), rng.uniform(0, math.pi)))
            assert q[0] >= 0

    def test_axis_angle_agrees_with_rodrigues(self, rng):
        for _ in range(100):
            axis = rng.normal(size=3)
            ang = rng.uniform(-math.pi, math.pi)
            R1 = rotation_matrix_from_quat(quat_from_axis_angle(axis, ang))
            assert np.allclose(R1, rodrigues(axis, ang), atol=1e-12)

    def test_multiply_composes_rotations(self, rng):
        for _ in range(50):
            Ra = rodrigues(rng.normal(size=3), rng.uniform(0, math.pi))
            Rb = rodrigues(rng.normal(size=3), rng.uniform(0, math.pi))
            qa, qb = quat_from_rotation_matrix(Ra), quat_from_rotation_matrix(Rb)
            assert np.allclose(
                rotation_matrix_from_quat(quat_multiply(qa, qb)), Ra @ Rb, atol=1e-12
            )


class TestPose:
    def test_exact_unit_quaternion_kept_bitwise(self):
        q = np.array([1.0, 0.0, 0.0, 0.0])
        p = Pose(np.zeros(3), q)
        assert p.q.tobytes() == q.tobytes()

    def test_mild_denormalization_fixed_silently(self):
        p = Pose(np.zeros(3), [1.0 + 1e-8, 0, 0, 0])
        assert abs(np.linalg.norm(p.q) - 1.0) < 1e-15

    def test_heavy_denormalization_warns(self):
        with pytest.warns(UserWarning, match="renormaliz"):
            p = Pose(np.zeros(3), [2.0, 0, 0, 0])
        assert abs(np.linalg.norm(p.q) - 1.0) < 1e-15

    def test_zero_quaternion_rejected(self):
        with pytest.raises(ValueError):
            Pose(np.zeros(3), [1e-12, 0, 0, 0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Pose([np.nan, 0, 0], [1, 0, 0, 0])

    def test_arrays_frozen(self):
        p = Pose(np.zeros(3), [1, 0, 0, 0])
        with pytest.raises(ValueError):
            p.c[0] = 1.0

    def test_equality_is_bitwise(self):
        a = Pose([1, 2, 3], [1, 0, 0, 0])
        b = Pose([1, 2, 3], [1, 0, 0, 0])
        c = Pose([1, 2, 3], [-1, 0, 0, 0])
        assert a == b
        assert a != c  # same rotation, different bits: not equal


class TestErrors:
    @pytest.mark.parametrize("angle_deg", [0.0, 1.0, 90.0, 179.0])
    def test_constructed_rotation_error(self, rng, angle_deg):
        for _ in range(25):
            base = rodrigues(rng.normal(size=3), rng.uniform(0, math.pi))
            pert = rodrigues(rng.normal(size=3), math.radians(angle_deg)) @ base
            ref = Pose(np.zeros(3), quat_from_rotation_matrix(base))
            est = Pose(np.zeros(3), quat_from_rotation_matrix(pert))
            assert abs(rotation_error(est, ref) - angle_deg) < 1e-7

    def test_quaternion_sign_invariance_exact(self, rng):
        for _ in range(50):
            pa, pb = random_pose(rng), random_pose(rng)
            flipped = Pose(pb.c, -pb.q)
            assert rotation_error(pa, pb) == rotation_error(pa, flipped)

    def test_symmetry(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        assert rotation_error(a, b) == pytest.approx(rotation_error(b, a), abs=1e-12)

    def test_matches_oracle_angle(self, rng):
        for _ in range(100):
            a, b = random_pose(rng), random_pose(rng)
            want = angle_between_deg(a.R, b.R)
            assert rotation_error(a, b) == pytest.approx(want, abs=1e-8)

    def test_pose_error_components(self):
        a = Pose([0, 0, 0], [1, 0, 0, 0])
        b = Pose([3, 4, 0], [1, 0, 0, 0])
        err = pose_error(a, b)
        assert err.c_error == 5.0
        assert err.R_error == 0.0


class TestProjection:
    def test_point_on_axis_hits_principal_point(self):
        p = Pose(np.zeros(3), [1, 0, 0, 0])
        uv = project_point([0, 0, 5.0], p, INTR)
        assert uv == (INTR.cx, INTR.cy)

    def test_behind_camera_returns_none(self):
        p = Pose(np.zeros(3), [1, 0, 0, 0])
        assert project_point([0, 0, -1.0], p, INTR) is None
        assert project_point([0, 0, 0.0], p, INTR) is None

    def test_matches_oracle_projection(self, rng):
        from oracles.projective import project as oracle_project

        for _ in range(50):
            p = random_pose(rng)
            fwd = p.R.T @ np.array([0.0, 0.0, 1.0])
            pt = p.c + 5.0 * fwd + rng.uniform(-1, 1, size=3)
            uv = project_point(pt, p, INTR)
            if uv is None:
                continue
            want = oracle_project(p.R, p.c, INTR.fx, INTR.fy, INTR.cx, INTR.cy, pt)[0]
            assert np.allclose(uv, want, atol=1e-9)

    def test_vectorized_agrees_with_scalar(self, rng):
        p = random_pose(rng)
        fwd = p.R.T @ np.array([0.0, 0.0, 1.0])
        pts = p.c + np.outer(rng.uniform(0.5, 8, 40), fwd) + rng.normal(size=(40, 3))
        uv, depth = project_points(pts, p, INTR)
        for i, pt in enumerate(pts):
            single = project_point(pt, p, INTR)
            if single is None:
                assert depth[i] <= 0 and np.isnan(uv[i]).all()
            else:
                assert np.allclose(uv[i], single, atol=1e-12)


class TestFrustum:
    def test_non_unit_normals_rejected(self):
        with pytest.raises(ValueError):
            Frustum(np.array([[2.0, 0, 0]]), np.array([1.0]))

    def test_build_validates_planes(self):
        p = Pose(np.zeros(3), [1, 0, 0, 0])
        with pytest.raises(ValueError):
            build_frustum(p, INTR, far=0.0)
        with pytest.raises(ValueError):
            build_frustum(p, INTR, far=5.0, near=5.0)

    def test_plane_count(self, rng):
        p = random_pose(rng)
        assert len(build_frustum(p, INTR, far=25.0).normals) == 5
        assert len(build_frustum(p, INTR, far=25.0, near=0.5).normals) == 6

    def test_contains_agrees_with_projection(self, rng):
        # membership must match "projects inside the image at valid depth"
        p = random_pose(rng)
        fr = build_frustum(p, INTR, far=25.0, near=0.25)
        pts = p.c + rng.uniform(-30, 30, size=(3000, 3))
        inside = fr.contains(pts)
        uv, depth = project_points(pts, p, INTR)
        want = (
            (depth >= 0.25)
            & (depth <= 25.0)
            & (uv[:, 0] >= 0)
            & (uv[:, 0] <= INTR.width)
            & (uv[:, 1] >= 0)
            & (uv[:, 1] <= INTR.height)
        )
        # boundary points may flip either way under fp; compare off-boundary
        margin = np.abs(depth - 0.25) > 1e-6
        assert np.array_equal(inside[margin], want[margin])

    def test_apex_membership(self, rng):
        p = random_pose(rng)
        assert build_frustum(p, INTR, far=25.0).contains(p.c)[0]
        assert not build_frustum(p, INTR, far=25.0, near=0.5).contains(p.c)[0]
