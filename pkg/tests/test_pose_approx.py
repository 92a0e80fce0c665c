import math
import warnings

import numpy as np
import pytest

from locbench.geometry import Pose, rotation_error
from locbench.pose_approx import (
    BlendedPose,
    CsiConfig,
    InterpolationWeights,
    interpolate_pose,
    weights_bdi,
    weights_csi,
    weights_ewb,
)

from oracles.projective import matrix_to_quat_wxyz, rodrigues


def random_pose(rng):
    R = rodrigues(rng.normal(size=3), rng.uniform(0, math.pi))
    return Pose(rng.uniform(-5, 5, size=3), matrix_to_quat_wxyz(R))


class TestWeightsEwb:
    def test_single(self):
        assert list(weights_ewb(1)) == [1.0]

    def test_four_way_exact(self):
        assert list(weights_ewb(4)) == [0.25, 0.25, 0.25, 0.25]

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            weights_ewb(0)

    def test_sums_to_one(self):
        for k in (2, 3, 7, 50):
            assert abs(float(np.sum(weights_ewb(k).w)) - 1.0) <= 1e-10


class TestWeightsBdi:
    def test_single_descriptor_forced_to_one(self, rng):
        d = rng.normal(size=(1, 16))
        assert list(weights_bdi(rng.normal(size=16), d)) == [1.0]

    def test_exact_representation(self, rng):
        # d_q equals the first descriptor and the rows are independent,
        # so the optimum is w = (1, 0, 0) with zero residual
        D = np.linalg.qr(rng.normal(size=(8, 8)))[0][:3]
        w = weights_bdi(D[0], D)
        assert np.allclose(w.w, [1.0, 0.0, 0.0], atol=1e-9)
        assert np.linalg.norm(D[0] - w.w @ D) < 1e-9

    def test_optimal_against_random_affine_sampling(self, rng):
        # any affine w the sampler finds must be no better than the
        # KKT solution
        for _ in range(100):
            D = rng.normal(size=(5, 32))
            d_q = rng.normal(size=32)
            w = weights_bdi(d_q, D)
            assert abs(float(np.sum(w.w)) - 1.0) <= 1e-10
            got = np.linalg.norm(d_q - w.w @ D)

            raw = rng.normal(size=(10_000, 5))
            raw += (1.0 - raw.sum(axis=1))[:, None] / 5.0  # project to sum=1
            best = np.linalg.norm(d_q - raw @ D, axis=1).min()
            assert got <= best + 1e-12

    def test_duplicate_descriptors_split_weight(self, rng):
        d = rng.normal(size=12)
        other = rng.normal(size=12)
        D = np.stack([d, d, other])
        w = weights_bdi(d, D)
        # minimum-norm solution of the rank-deficient system
        assert w.w[0] == pytest.approx(w.w[1], abs=1e-9)
        assert w.w[0] == pytest.approx(0.5, abs=1e-6)
        assert abs(w.w[2]) < 1e-6

    def test_near_singular_gram_still_valid(self, rng):
        # descriptors this collinear used to produce weights whose sum
        # missed 1 by more than the invariant allows
        base = rng.normal(size=24)
        D = np.stack([base + 1e-9 * rng.normal(size=24) for _ in range(10)])
        w = weights_bdi(rng.normal(size=24), D)
        assert np.all(np.isfinite(w.w))
        assert abs(float(np.sum(w.w)) - 1.0) <= 1e-10

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError, match="dimension mismatch"):
            weights_bdi(rng.normal(size=8), rng.normal(size=(3, 16)))

    def test_requires_2d_descriptors(self, rng):
        with pytest.raises(ValueError, match="\\(k, dim\\)"):
            weights_bdi(rng.normal(size=8), rng.normal(size=8))


class TestWeightsCsi:
    def test_alpha_zero_is_equal_weighting(self, rng):
        for k in (1, 2, 5, 17, 50):
            D = rng.normal(size=(k, 16))
            D /= np.linalg.norm(D, axis=1)[:, None]
            d_q = rng.normal(size=16)
            d_q /= np.linalg.norm(d_q)
            w = weights_csi(d_q, D, CsiConfig(alpha=0.0))
            assert np.allclose(w.w, weights_ewb(k).w, atol=1e-12)

    def test_hand_computed_alpha_one(self):
        # similarities 0.8 and 0.4 at alpha=1 normalize to 2/3 and 1/3
        d_q = np.array([1.0, 0.0])
        D = np.array([
            [0.8, math.sqrt(1 - 0.64)],
            [0.4, math.sqrt(1 - 0.16)],
        ])
        w = weights_csi(d_q, D, CsiConfig(alpha=1.0))
        assert w.w[0] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert w.w[1] == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_huge_alpha_concentrates_on_best(self, rng):
        D = rng.normal(size=(6, 32))
        D /= np.linalg.norm(D, axis=1)[:, None]
        d_q = D[2] + 0.05 * rng.normal(size=32)
        d_q /= np.linalg.norm(d_q)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w = weights_csi(d_q, D, CsiConfig(alpha=1e6))
        assert float(np.max(w.w)) > 1.0 - 1e-6
        assert int(np.argmax(w.w)) == int(np.argmax(D @ d_q))

    def test_nonpositive_similarity_clamped_with_warning(self):
        d_q = np.array([1.0, 0.0])
        D = np.array([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.warns(UserWarning, match="clamped"):
            w = weights_csi(d_q, D, CsiConfig(alpha=2.0))
        assert np.all(w.w >= 0)
        assert w.w[0] == pytest.approx(1.0, abs=1e-12)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            CsiConfig(alpha=-1.0)

    def test_default_alpha(self):
        assert CsiConfig().alpha == 8.0


class TestInterpolatePose:
    def test_k1_is_bitwise_top1(self, rng):
        p = random_pose(rng)
        for w in (weights_ewb(1), [1.0]):
            out = interpolate_pose([p], w)
            assert out == p  # Pose equality is bitwise

    def test_identical_poses_any_weights(self, rng):
        p = random_pose(rng)
        out = interpolate_pose([p, p], [0.3, 0.7])
        assert np.allclose(out.c, p.c, atol=1e-14)
        assert rotation_error(out, p) < 1e-7

    def test_midpoint_position(self):
        q = np.array([1.0, 0, 0, 0])
        a = Pose([0.0, 0, 0], q)
        b = Pose([2.0, 0, 0], q)
        out = interpolate_pose([a, b], weights_ewb(2))
        assert np.array_equal(out.c, [1.0, 0.0, 0.0])

    def test_extrapolating_weights(self):
        q = np.array([1.0, 0, 0, 0])
        a = Pose([0.0, 0, 0], q)
        b = Pose([2.0, 0, 0], q)
        out = interpolate_pose([a, b], [1.5, -0.5])
        assert np.array_equal(out.c, [-1.0, 0.0, 0.0])

    def test_blend_quaternion_is_unit(self, rng):
        for _ in range(20):
            poses = [random_pose(rng) for _ in range(5)]
            out = interpolate_pose(poses, weights_ewb(5))
            assert not out.degenerate
            assert abs(float(np.linalg.norm(out.q)) - 1.0) <= 1e-9

    def test_sign_alignment_invariance(self, rng):
        poses = [random_pose(rng) for _ in range(4)]
        w = weights_ewb(4)
        base = interpolate_pose(poses, w)
        for i in range(4):
            flipped = list(poses)
            flipped[i] = Pose(poses[i].c, -poses[i].q)
            out = interpolate_pose(flipped, w)
            assert rotation_error(base, out) < 1e-7

    def test_equal_blend_of_two_sits_between(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        out = interpolate_pose([a, b], weights_ewb(2))
        # normalized equal-weight quaternion blend bisects the arc
        assert rotation_error(out, a) == pytest.approx(rotation_error(out, b), abs=1e-9)

    def test_cancelled_quaternion_sum_is_degenerate(self):
        # three rotations about x at 0, 180 and 90 degrees with affine
        # weights tuned so the aligned quaternion sum vanishes
        s = 1.0 / math.sqrt(2.0)
        poses = [
            Pose([0.0, 0, 0], [1.0, 0, 0, 0]),
            Pose([2.0, 0, 0], [0.0, 1.0, 0, 0]),
            Pose([4.0, 0, 0], [s, s, 0, 0]),
        ]
        a = 1.0 + s
        w = np.array([a, a, -(1.0 + math.sqrt(2.0))])
        out = interpolate_pose(poses, InterpolationWeights(w))
        assert isinstance(out, BlendedPose)
        assert out.degenerate
        expect_c = w[0] * poses[0].c + w[1] * poses[1].c + w[2] * poses[2].c
        assert np.allclose(out.c, expect_c, atol=1e-12)
        assert np.array_equal(out.q, poses[0].q)  # falls back to top-1

    def test_length_mismatch(self, rng):
        with pytest.raises(ValueError, match="weights for"):
            interpolate_pose([random_pose(rng)], [0.5, 0.5])

    def test_empty(self):
        with pytest.raises(ValueError, match="no poses"):
            interpolate_pose([], [])


class TestInterpolationWeights:
    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            InterpolationWeights(np.array([0.5, 0.6]))

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            InterpolationWeights(np.array([np.nan, 1.0]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="empty"):
            InterpolationWeights(np.array([]))

    def test_frozen_array(self):
        w = weights_ewb(3)
        with pytest.raises(ValueError):
            w.w[0] = 9.0

    def test_sequence_protocol(self):
        w = weights_ewb(4)
        assert len(w) == 4 and w.k == 4
        assert w[0] == 0.25
