import numpy as np
import pytest
from scipy.optimize import minimize

from perspose.errors import DegenerateConfigurationError
from perspose.geometry import (
    apply_similarity,
    axis_angle_jacobians,
    axis_angle_to_matrix,
    canonicalize_axis_angle,
    geodesic_distance,
    invert_similarity,
    is_rotation,
    matrix_from_quat,
    matrix_to_axis_angle,
    procrustes_align,
    quat_from_matrix,
    rot_x,
    rot_z,
    SimilarityTransform,
)


def quat_oracle(v):
    """Independent axis-angle -> matrix path through a unit quaternion."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    if theta == 0:
        return np.eye(3)
    axis = v / theta
    w = np.cos(theta / 2.0)
    x, y, z = np.sin(theta / 2.0) * axis
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


class TestAxisAngle:
    def test_zero_maps_to_identity(self):
        assert np.allclose(axis_angle_to_matrix([0, 0, 0]), np.eye(3))

    def test_quarter_turn_about_z(self):
        expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(axis_angle_to_matrix([0, 0, np.pi / 2]), expected, atol=1e-12)
        # sends x-hat to y-hat
        assert np.allclose(axis_angle_to_matrix([0, 0, np.pi / 2]) @ [1, 0, 0], [0, 1, 0])

    def test_generic_vector_is_valid_rotation(self):
        m = axis_angle_to_matrix([0.3, -0.2, 0.9])
        assert np.allclose(m.T @ m, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(m), 1.0, atol=1e-12)
        assert np.allclose(m, quat_oracle([0.3, -0.2, 0.9]), atol=1e-12)

    def test_matches_quaternion_oracle_randomly(self, rng):
        for _ in range(200):
            v = rng.normal(size=3) * rng.uniform(0, np.pi)
            assert np.allclose(axis_angle_to_matrix(v), quat_oracle(v), atol=1e-10)

    def test_round_trip_1000_random_vectors(self, rng):
        for _ in range(1000):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            v = axis * rng.uniform(1e-6, np.pi - 1e-9)
            back = matrix_to_axis_angle(axis_angle_to_matrix(v))
            assert np.allclose(back, v, atol=1e-6), (v, back)

    def test_round_trip_near_pi(self):
        v = np.array([0.6, -0.48, 0.2])
        v = v / np.linalg.norm(v) * (np.pi - 1e-9)
        back = matrix_to_axis_angle(axis_angle_to_matrix(v))
        assert (
            np.allclose(back, v, atol=1e-5) or np.allclose(back, -v, atol=1e-5)
        )

    def test_canonicalize_wraps_large_angles(self):
        axis = np.array([1.0, 0.0, 0.0])
        v = canonicalize_axis_angle(axis * (2 * np.pi - 0.3))
        assert np.allclose(v, -axis * 0.3, atol=1e-12)
        same = axis_angle_to_matrix(axis * (2 * np.pi - 0.3))
        assert np.allclose(axis_angle_to_matrix(v), same, atol=1e-12)
        untouched = canonicalize_axis_angle(axis * 0.5)
        assert np.allclose(untouched, axis * 0.5)

    def test_jacobian_matches_finite_differences(self, rng):
        eps = 1e-7
        for _ in range(50):
            v = rng.normal(size=3) * rng.uniform(0.05, np.pi - 0.2)
            D = axis_angle_jacobians(v[None, :])[0]
            for i in range(3):
                dv = np.zeros(3)
                dv[i] = eps
                fd = (axis_angle_to_matrix(v + dv) - axis_angle_to_matrix(v - dv)) / (2 * eps)
                assert np.allclose(D[i], fd, atol=1e-5)

    def test_jacobian_at_zero(self):
        D = axis_angle_jacobians(np.zeros((1, 3)))[0]
        eps = 1e-7
        for i in range(3):
            dv = np.zeros(3)
            dv[i] = eps
            fd = (axis_angle_to_matrix(dv) - axis_angle_to_matrix(-dv)) / (2 * eps)
            assert np.allclose(D[i], fd, atol=1e-6)


class TestGeodesicDistance:
    def test_identity(self):
        assert geodesic_distance(np.eye(3), np.eye(3)) == 0.0

    def test_quarter_turn(self):
        assert np.isclose(geodesic_distance(np.eye(3), rot_z(np.pi / 2)), np.pi / 2)

    def test_same_axis_rotations_compose(self):
        assert np.isclose(geodesic_distance(rot_x(0.4), rot_x(1.0)), 0.6)

    def test_symmetry_bounds_and_bi_invariance(self, rng):
        from tests.conftest import random_rotation

        for _ in range(100):
            r1, r2, q = (random_rotation(rng) for _ in range(3))
            d = geodesic_distance(r1, r2)
            assert 0.0 <= d <= np.pi
            assert np.isclose(d, geodesic_distance(r2, r1))
            assert np.isclose(d, geodesic_distance(q @ r1, q @ r2), atol=1e-7)
            # arccos near 1 resolves angles only to ~sqrt(machine eps)
            assert geodesic_distance(r1, r1) < 1e-7


class TestProcrustes:
    def test_identity(self, rng):
        pts = rng.normal(size=(10, 3))
        t = procrustes_align(pts, pts)
        assert np.isclose(t.scale, 1.0)
        assert np.allclose(t.rotation, np.eye(3), atol=1e-9)
        assert np.allclose(t.translation, 0.0, atol=1e-9)

    def test_exact_recovery(self, rng):
        pts = rng.normal(size=(24, 3))
        R = rot_z(np.pi / 2)
        target = 2.0 * pts @ R.T + np.array([1.0, 2.0, 3.0])
        t = procrustes_align(pts, target)
        assert np.isclose(t.scale, 2.0, atol=1e-9)
        assert np.allclose(t.rotation, R, atol=1e-9)
        assert np.allclose(t.translation, [1, 2, 3], atol=1e-9)
        residual = np.linalg.norm(apply_similarity(t, pts) - target)
        assert residual < 1e-9

    def test_noisy_recovery_matches_brute_force(self, rng):
        pts = rng.normal(size=(24, 3))
        target = pts + rng.normal(0.0, 1e-3, (24, 3))  # 1mm noise
        t = procrustes_align(pts, target)
        res = apply_similarity(t, pts) - target
        rms = np.sqrt(np.mean(np.sum(res**2, axis=1)))
        assert rms < 3e-3  # residual at the noise level

        # independent numerical minimization over (axis-angle, log-scale, t)
        def cost(params):
            R = axis_angle_to_matrix(params[:3])
            s = np.exp(params[3])
            return np.sum((s * pts @ R.T + params[4:] - target) ** 2)

        best = minimize(cost, np.zeros(7), method="Nelder-Mead",
                        options={"maxiter": 5000, "xatol": 1e-10, "fatol": 1e-14})
        closed_form = np.sum(res**2)
        assert closed_form <= best.fun + 1e-9

    def test_optimality_against_perturbed_transforms(self, rng):
        for _ in range(100):
            pts = rng.normal(size=(8, 3))
            target = rng.normal(size=(8, 3))
            t = procrustes_align(pts, target)
            base = np.sum((apply_similarity(t, pts) - target) ** 2)
            perturbed = []
            for _ in range(10):
                dR = axis_angle_to_matrix(rng.normal(0, 0.05, 3))
                t2 = SimilarityTransform(
                    t.scale * np.exp(rng.normal(0, 0.05)),
                    dR @ t.rotation,
                    t.translation + rng.normal(0, 0.05, 3),
                )
                perturbed.append(np.sum((apply_similarity(t2, pts) - target) ** 2))
            assert base <= min(perturbed) + 1e-12

    def test_reflection_guard(self, rng):
        pts = rng.normal(size=(12, 3))
        target = pts.copy()
        target[:, 0] *= -1.0  # mirrored cloud
        t = procrustes_align(pts, target)
        assert np.isclose(np.linalg.det(t.rotation), 1.0, atol=1e-9)

    def test_collinear_raises(self):
        pts = np.outer(np.arange(6, dtype=float), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateConfigurationError):
            procrustes_align(pts, pts + 1.0)

    def test_coincident_raises(self):
        pts = np.ones((5, 3))
        with pytest.raises(DegenerateConfigurationError):
            procrustes_align(pts, np.random.default_rng(0).normal(size=(5, 3)))


class TestApplySimilarity:
    def test_identity(self, rng):
        pts = rng.normal(size=(7, 3))
        t = SimilarityTransform(1.0, np.eye(3), np.zeros(3))
        assert np.allclose(apply_similarity(t, pts), pts)

    def test_pure_scale(self):
        t = SimilarityTransform(2.0, np.eye(3), np.zeros(3))
        assert np.allclose(apply_similarity(t, [[1.0, 1.0, 1.0]]), [[2.0, 2.0, 2.0]])

    def test_inverse_round_trip(self, rng):
        t = SimilarityTransform(1.7, rot_z(0.8) @ rot_x(-0.3), np.array([0.4, -1.0, 2.0]))
        pts = rng.normal(size=(15, 3))
        back = apply_similarity(t, apply_similarity(invert_similarity(t), pts))
        assert np.allclose(back, pts, atol=1e-9)


class TestQuatHelpers:
    def test_round_trip(self, rng):
        from tests.conftest import random_rotation

        for _ in range(100):
            m = random_rotation(rng)
            q = quat_from_matrix(m)
            assert np.isclose(np.linalg.norm(q), 1.0, atol=1e-12)
            assert np.allclose(matrix_from_quat(q), m, atol=1e-9)

    def test_is_rotation(self):
        assert is_rotation(rot_z(0.3))
        assert not is_rotation(2.0 * np.eye(3))
        assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
