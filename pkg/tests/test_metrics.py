import numpy as np
import pytest

from perspose.body import PART_LABELS
from perspose.geometry import axis_angle_to_matrix, rot_y
from perspose.metrics import (
    AUC_STEPS,
    EvalPair,
    PCK_JOINTS,
    auc,
    evaluate_pair,
    evaluate_sequence,
    mpjae,
    mpjae_pa,
    mpjpe,
    mpjpe_pa,
    pck,
)


def rand_parts(rng):
    return {lab: axis_angle_to_matrix(rng.normal(0, 0.6, 3)) for lab in PART_LABELS}


def rand_pair(rng, noise_mm=30.0):
    gt_joints = rng.normal(0, 0.4, (24, 3))
    gt_parts = rand_parts(rng)
    pred_joints = gt_joints + rng.normal(0, noise_mm / 1000.0, (24, 3))
    pred_parts = {
        lab: gt_parts[lab] @ axis_angle_to_matrix(rng.normal(0, 0.05, 3))
        for lab in PART_LABELS
    }
    return EvalPair(pred_joints, gt_joints, pred_parts, gt_parts)


def identical_pair(rng):
    joints = rng.normal(0, 0.4, (24, 3))
    parts = rand_parts(rng)
    return EvalPair(joints.copy(), joints, dict(parts), parts)


class TestMpjpe:
    def test_identical_is_zero(self, rng):
        assert mpjpe(identical_pair(rng)) < 1e-9

    def test_uniform_offset_cancelled_by_root_matching(self, rng):
        pair = identical_pair(rng)
        pair.pred_joints = pair.pred_joints + np.array([0.05, 0.05, 0.05])
        assert mpjpe(pair) < 1e-9

    def test_one_joint_displaced(self, rng):
        pair = identical_pair(rng)
        pred = pair.pred_joints.copy()
        pred[5, 0] += 0.030  # 30mm on one non-root joint
        pair.pred_joints = pred
        assert np.isclose(mpjpe(pair), 30.0 / 24.0)

    def test_translation_invariance_of_both(self, rng):
        for _ in range(50):
            pair = rand_pair(rng)
            base = mpjpe(pair)
            delta = rng.normal(0, 1, 3)
            moved = EvalPair(pair.pred_joints + delta, pair.gt_joints + delta,
                             pair.pred_parts, pair.gt_parts)
            assert np.isclose(mpjpe(moved), base, atol=1e-9)


class TestMpjpePa:
    def test_identical_is_zero(self, rng):
        assert mpjpe_pa(identical_pair(rng)) < 1e-9

    def test_similarity_transform_removed(self, rng):
        pair = identical_pair(rng)
        R = axis_angle_to_matrix(rng.normal(0, 1, 3))
        pair.pred_joints = 1.7 * pair.pred_joints @ R.T + np.array([0.3, -1.0, 2.0])
        assert mpjpe_pa(pair) < 1e-8

    def test_not_exceeded_by_sampled_transforms(self, rng):
        from perspose.geometry import SimilarityTransform, apply_similarity, procrustes_align

        for _ in range(5):
            pair = rand_pair(rng)
            value = mpjpe_pa(pair)
            t_opt = procrustes_align(pair.pred_joints, pair.gt_joints)
            best = np.inf
            for _ in range(2000):
                t = SimilarityTransform(
                    t_opt.scale * np.exp(rng.normal(0, 0.03)),
                    axis_angle_to_matrix(rng.normal(0, 0.03, 3)) @ t_opt.rotation,
                    t_opt.translation + rng.normal(0, 0.01, 3),
                )
                aligned = apply_similarity(t, pair.pred_joints)
                best = min(best, float(np.mean(
                    np.linalg.norm(aligned - pair.gt_joints, axis=1)) * 1000.0))
            assert value <= best + 1e-6


class TestPck:
    def test_all_exact(self, rng):
        assert pck([identical_pair(rng)]) == 100.0

    def test_single_displaced_joint(self, rng):
        pair = identical_pair(rng)
        pred = pair.pred_joints.copy()
        pred[PCK_JOINTS[3], 1] += 0.060  # 60mm on one of the 12 scored joints
        pair.pred_joints = pred
        assert np.isclose(pck([pair]), 100.0 * 11.0 / 12.0)
        assert np.isclose(pck([pair]), 91.67, atol=0.01)

    def test_boundary_is_strict(self, rng):
        # zeroed x-coordinates make the 50mm displacement exact in floats
        gt = rng.normal(0, 0.4, (24, 3))
        gt[:, 0] = 0.0
        pred = gt.copy()
        pred[list(PCK_JOINTS), 0] = 0.050
        parts = rand_parts(rng)
        pair = EvalPair(pred, gt, dict(parts), parts)
        assert pck([pair], threshold=50.0) == 0.0

    def test_monotone_in_threshold(self, rng):
        pairs = [rand_pair(rng, noise_mm=40.0) for _ in range(10)]
        values = [pck(pairs, threshold=t) for t in np.linspace(0, 200, 41)]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestAuc:
    def test_all_exact(self, rng):
        # exact joints fail the strict t=0 threshold only
        value = auc([identical_pair(rng)])
        assert np.isclose(value, 200.0 / 201.0)

    def test_hundred_mm_everywhere(self, rng):
        # zeroed x-coordinates make the 100mm displacement exact in floats
        gt = rng.normal(0, 0.4, (24, 3))
        gt[:, 0] = 0.0
        pred = gt.copy()
        pred[list(PCK_JOINTS), 0] = 0.100
        parts = rand_parts(rng)
        pair = EvalPair(pred, gt, dict(parts), parts)
        value = auc([pair])
        assert np.isclose(value, 100.0 / 201.0, atol=1e-12)
        assert np.isclose(value, 0.498, atol=5e-4)

    def test_all_beyond_range(self, rng):
        pair = identical_pair(rng)
        pair.pred_joints = pair.pred_joints + 10.0  # meters: far off
        # root matching keeps the uniform part out; displace per joint instead
        pred = pair.gt_joints.copy()
        pred[list(PCK_JOINTS)] += np.array([0.5, 0.0, 0.0])
        pair.pred_joints = pred
        assert auc([pair]) == 0.0

    def test_in_unit_interval_and_equals_curve_mean(self, rng):
        pairs = [rand_pair(rng, noise_mm=60.0) for _ in range(8)]
        value = auc(pairs)
        assert 0.0 <= value <= 1.0
        curve = [pck(pairs, threshold=t) / 100.0 for t in np.linspace(0, 200, AUC_STEPS)]
        assert np.isclose(value, np.mean(curve), atol=1e-12)


class TestMpjae:
    def test_identical_is_zero(self, rng):
        assert mpjae(identical_pair(rng)) < 1e-5

    def test_common_axis_offset(self, rng):
        pair = identical_pair(rng)
        ten_deg = rot_y(np.radians(10.0))
        pair.pred_parts = {lab: pair.gt_parts[lab] @ ten_deg for lab in PART_LABELS}
        assert np.isclose(mpjae(pair), 10.0, atol=1e-9)

    def test_single_part_off(self, rng):
        pair = identical_pair(rng)
        parts = dict(pair.gt_parts)
        parts["left_lower_arm"] = parts["left_lower_arm"] @ rot_y(np.pi / 2)
        pair.pred_parts = parts
        assert np.isclose(mpjae(pair), 90.0 / 9.0)

    def test_bi_invariance(self, rng):
        for _ in range(50):
            pair = rand_pair(rng)
            base = mpjae(pair)
            Q = axis_angle_to_matrix(rng.normal(0, 1, 3))
            rotated = EvalPair(
                pair.pred_joints, pair.gt_joints,
                {lab: Q @ pair.pred_parts[lab] for lab in PART_LABELS},
                {lab: Q @ pair.gt_parts[lab] for lab in PART_LABELS},
            )
            assert np.isclose(mpjae(rotated), base, atol=1e-6)


class TestMpjaePa:
    def test_identical_is_zero(self, rng):
        assert mpjae_pa(identical_pair(rng)) < 1e-5

    def test_global_rotation_cancelled(self, rng):
        pair = identical_pair(rng)
        R0 = axis_angle_to_matrix(rng.normal(0, 1, 3))
        pair.pred_joints = pair.pred_joints @ R0.T
        pair.pred_parts = {lab: R0 @ pair.gt_parts[lab] for lab in PART_LABELS}
        assert mpjae_pa(pair) < 1e-5

    def test_known_perturbation_recovered(self, rng):
        pair = identical_pair(rng)
        R0 = axis_angle_to_matrix(rng.normal(0, 1, 3))
        five_deg = np.radians(5.0)
        pair.pred_joints = pair.pred_joints @ R0.T
        pair.pred_parts = {}
        for lab in PART_LABELS:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            pair.pred_parts[lab] = R0 @ pair.gt_parts[lab] @ axis_angle_to_matrix(axis * five_deg)
        assert abs(mpjae_pa(pair) - 5.0) < 0.1


class TestDegenerateFallback:
    def test_collinear_prediction_still_scores(self, rng):
        gt_joints = rng.normal(0, 0.4, (24, 3))
        pred = np.outer(np.linspace(0, 1, 24), [1.0, 0.5, 0.2])  # collinear
        parts = rand_parts(rng)
        pair = EvalPair(pred, gt_joints, dict(parts), parts)
        value = mpjpe_pa(pair)
        assert np.isfinite(value) and value > 0


class TestAggregation:
    def test_all_metrics_nonnegative_and_zero_on_identity(self, rng):
        pair = identical_pair(rng)
        m = evaluate_pair(pair)
        assert m["mpjpe"] < 1e-9 and m["mpjpe_pa"] < 1e-9
        assert m["pck"] == 100.0 and np.isclose(m["auc"], 200 / 201)
        assert m["mpjae"] < 1e-5 and m["mpjae_pa"] < 1e-5

    def test_sequence_mean_of_means(self, rng):
        pairs = [rand_pair(rng) for _ in range(6)]
        report = evaluate_sequence(pairs)
        for key in ("mpjpe", "mpjpe_pa", "pck", "auc", "mpjae", "mpjae_pa"):
            per_frame = [f[key] for f in report.per_frame]
            assert np.isclose(getattr(report, key), np.mean(per_frame), atol=1e-12)
        # pooled computation agrees when per-frame joint counts are equal
        assert np.isclose(report.pck, pck(pairs), atol=1e-9)
        assert np.isclose(report.auc, auc(pairs), atol=1e-9)

    def test_shared_alignment_consistency(self, rng):
        pair = rand_pair(rng)
        m = evaluate_pair(pair)
        assert np.isclose(m["mpjpe_pa"], mpjpe_pa(pair), atol=1e-9)
        assert np.isclose(m["mpjae_pa"], mpjae_pa(pair), atol=1e-9)

    def test_invariance_suite(self, rng):
        # the randomized invariance bundle, smaller than the acceptance run
        for _ in range(50):
            pair = rand_pair(rng)
            t = rng.normal(0, 1, 3)
            both = EvalPair(pair.pred_joints + t, pair.gt_joints + t,
                            pair.pred_parts, pair.gt_parts)
            assert np.isclose(mpjpe(both), mpjpe(pair), atol=1e-9)
            R = axis_angle_to_matrix(rng.normal(0, 1, 3))
            s = np.exp(rng.normal(0, 0.3))
            pred2 = s * pair.pred_joints @ R.T + rng.normal(0, 1, 3)
            moved = EvalPair(pred2, pair.gt_joints, pair.pred_parts, pair.gt_parts)
            assert np.isclose(mpjpe_pa(moved), mpjpe_pa(pair), atol=1e-6)
