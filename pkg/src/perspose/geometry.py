"""Rotation representations, SO(3) geodesics and similarity alignment.

All rotations are plain 3x3 numpy arrays; axis-angle vectors are 3-vectors
whose direction is the rotation axis and whose norm is the angle in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, InvalidParameterError

# Validity tolerance for internally constructed rotations; the looser value
# is for matrices read from files.
ROTATION_ATOL = 1e-9
ROTATION_ATOL_EXTERNAL = 1e-6

_SMALL_ANGLE = 1e-8

# skew(e_x), skew(e_y), skew(e_z); limit of the Rodrigues derivative at zero.
_SKEW_BASIS = np.array(
    [
        [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    ]
)


def skew(v):
    """Skew-symmetric matrix with skew(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def skew_batch(v):
    """skew() over an arbitrary batch of trailing 3-vectors."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def axis_angle_to_matrix(v):
    """Rodrigues formula; the zero vector maps to the identity."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidParameterError("axis-angle must be a finite 3-vector")
    return axis_angle_to_matrix_batch(v[None, :])[0]


def axis_angle_to_matrix_batch(vs):
    """Rodrigues formula over a (n, 3) batch."""
    vs = np.asarray(vs, dtype=float)
    theta = np.linalg.norm(vs, axis=-1)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    axis = vs / safe[:, None]
    K = skew_batch(axis)
    KK = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    s = np.sin(theta)[:, None, None]
    c = (1.0 - np.cos(theta))[:, None, None]
    out = eye + s * K + c * KK
    if np.any(small):
        # First-order Taylor expansion: I + [v]x + 0.5 [v]x^2.
        Kv = skew_batch(vs[small])
        out[small] = np.eye(3) + Kv + 0.5 * (Kv @ Kv)
    return out


def axis_angle_jacobians(vs):
    """Derivatives of the Rodrigues map: out[k, i] = dR(v_k)/dv_k[i]."""
    vs = np.asarray(vs, dtype=float)
    n = vs.shape[0]
    theta2 = np.sum(vs * vs, axis=-1)
    small = theta2 < _SMALL_ANGLE**2
    R = axis_angle_to_matrix_batch(vs)
    Kv = skew_batch(vs)
    cols = (np.eye(3) - R).transpose(0, 2, 1)  # cols[k, i] = (I - R_k) e_i
    c = np.cross(vs[:, None, :], cols)
    numer = vs[:, :, None, None] * Kv[:, None, :, :] + skew_batch(c)
    denom = np.where(small, 1.0, theta2)
    D = np.einsum("kiab,kbc->kiac", numer, R) / denom[:, None, None, None]
    if np.any(small):
        D[small] = np.broadcast_to(_SKEW_BASIS, (int(np.sum(small)), 3, 3, 3))
    return D


def matrix_to_axis_angle(m):
    """Inverse Rodrigues map; returned angle lies in [0, pi]."""
    m = np.asarray(m, dtype=float)
    cos_theta = np.clip((np.trace(m) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    vee = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    if theta < _SMALL_ANGLE:
        return vee  # equals theta * axis to first order
    if theta > np.pi - 1e-6:
        # sin(theta) vanishes; recover the axis from the symmetric part.
        B = 0.5 * (m + np.eye(3))
        mags = np.sqrt(np.clip(np.diag(B), 0.0, None))
        k = int(np.argmax(mags))
        axis = np.empty(3)
        axis[k] = mags[k]
        for j in range(3):
            if j != k:
                axis[j] = B[k, j] / mags[k]
        axis /= np.linalg.norm(axis)
        if np.dot(vee, axis) < 0:
            axis = -axis
        return theta * axis
    return (theta / np.sin(theta)) * vee


def canonicalize_axis_angle(v):
    """Wrap the rotation angle into [0, pi], flipping the axis if needed."""
    v = np.asarray(v, dtype=float)
    theta = float(np.linalg.norm(v))
    if theta <= np.pi:
        return v.copy()
    wrapped = np.fmod(theta, 2.0 * np.pi)
    axis = v / theta
    if wrapped > np.pi:
        wrapped = 2.0 * np.pi - wrapped
        axis = -axis
    return wrapped * axis


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(m, atol=ROTATION_ATOL):
    """True when m'm = I and det(m) = +1 within atol."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    return bool(
        np.allclose(m.T @ m, np.eye(3), atol=atol)
        and abs(np.linalg.det(m) - 1.0) <= atol
    )


def geodesic_distance(r1, r2):
    """Rotation angle of r1' r2, in radians, clamped into [0, pi]."""
    rel = np.asarray(r1).T @ np.asarray(r2)
    cos_theta = np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_theta))


@dataclass(frozen=True)
class SimilarityTransform:
    """y = scale * rotation @ x + translation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidParameterError("similarity scale must be positive")


def apply_similarity(transform, points):
    """Apply y_i = s R x_i + t to each row of points."""
    pts = np.asarray(points, dtype=float)
    return transform.scale * pts @ transform.rotation.T + transform.translation


def invert_similarity(transform):
    s = 1.0 / transform.scale
    R = transform.rotation.T
    t = -s * R @ transform.translation
    return SimilarityTransform(s, R, t)


def procrustes_align(source, target):
    """Least-squares similarity transform mapping source points onto target.

    Closed-form solution via SVD of the cross-covariance, with a reflection
    guard so the returned rotation always has det +1. Raises
    DegenerateConfigurationError for coincident or collinear point sets.
    """
    X = np.asarray(source, dtype=float)
    Y = np.asarray(target, dtype=float)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise InvalidParameterError("source and target must both be (n, 3)")
    n = X.shape[0]
    if n < 3:
        raise InvalidParameterError("alignment requires at least 3 points")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    var_x = float(np.sum(Xc * Xc)) / n
    if var_x <= 0.0:
        raise DegenerateConfigurationError("source points are coincident")
    cov = Yc.T @ Xc / n
    U, d, Vt = np.linalg.svd(cov)
    if d[1] <= 1e-12 * max(d[0], np.finfo(float).tiny):
        raise DegenerateConfigurationError("point set is collinear")
    s_fix = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        s_fix[2] = -1.0
    R = U @ np.diag(s_fix) @ Vt
    scale = float(np.sum(d * s_fix)) / var_x
    if scale <= 0.0:
        raise DegenerateConfigurationError("non-positive optimal scale")
    t = my - scale * R @ mx
    return SimilarityTransform(scale, R, t)


def rotation_only_align(source, target):
    """Best rotation + translation (scale fixed to 1) about the centroids.

    Works even for collinear point sets, where the rotation is merely one of
    the minimizers; used as a best-effort fallback.
    """
    X = np.asarray(source, dtype=float)
    Y = np.asarray(target, dtype=float)
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    cov = (Y - my).T @ (X - mx)
    U, _, Vt = np.linalg.svd(cov)
    s_fix = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        s_fix[2] = -1.0
    R = U @ np.diag(s_fix) @ Vt
    return SimilarityTransform(1.0, R, my - R @ mx)


def quat_from_matrix(m):
    """Unit quaternion (w, x, y, z) of a rotation matrix."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        r = np.sqrt(1.0 + t)
        w = 0.5 * r
        x = (m[2, 1] - m[1, 2]) / (2.0 * r)
        y = (m[0, 2] - m[2, 0]) / (2.0 * r)
        z = (m[1, 0] - m[0, 1]) / (2.0 * r)
    else:
        k = int(np.argmax(np.diag(m)))
        i, j = (k + 1) % 3, (k + 2) % 3
        r = np.sqrt(1.0 + m[k, k] - m[i, i] - m[j, j])
        q = np.empty(3)
        q[k] = 0.5 * r
        q[i] = (m[i, k] + m[k, i]) / (2.0 * r)
        q[j] = (m[j, k] + m[k, j]) / (2.0 * r)
        w = (m[j, i] - m[i, j]) / (2.0 * r)
        x, y, z = q
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def matrix_from_quat(q):
    """Rotation matrix of a (w, x, y, z) quaternion (normalized first)."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.all(np.isfinite(q)):
        raise InvalidParameterError("cannot normalize a zero/non-finite quaternion")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
