"""Two-stage fitting of body pose and camera translation to 2D keypoints.

Stage 1 optimizes the global body orientation and the camera translation;
stage 2 optimizes the remaining 69 joint rotations with both frozen. Both
stages minimize a confidence-squared weighted reprojection loss with
first-order adaptive-moment steps that are accepted only when the loss does
not increase (halve the step on regression, up to 5 times).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import (
    NUM_JOINTS,
    NUM_OBSERVATION_JOINTS,
    PoseParams,
    fk_positions_orientations,
    forward_kinematics,
)
from .camera import (
    BEHIND_CAMERA_EPS,
    WEAK_FOCAL,
    CameraTranslation,
    CropSpec,
    Intrinsics,
    WeakCameraParams,
    _translation_vec,
    approx_focal,
    full_translation,
    tz_from_scale,
)
from .errors import InvalidParameterError, UndefinedLossError
from .geometry import axis_angle_jacobians, axis_angle_to_matrix_batch

# BODY_25 torso joints (shoulders, hips) for the torso-only stage-1 baseline.
TORSO_OBSERVATION_JOINTS = (2, 5, 9, 12)

# Finite behind-camera penalty: keeps a transiently infeasible iterate
# recoverable while making any such step strictly worse than staying put.
_BEHIND_PENALTY = 1e6
_BEHIND_SLOPE = 1e6

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8
_MAX_HALVINGS = 5


@dataclass(frozen=True)
class Keypoint2D:
    """One detected joint in full-resolution pixels with confidence in [0, 1]."""

    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise InvalidParameterError("keypoint coordinates must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidParameterError("confidence must lie in [0, 1]")


@dataclass
class FrameObservation:
    """Everything needed to fit one frame.

    keypoints is a (25, 3) array of (x, y, confidence) rows in BODY_25 order;
    zero-confidence rows may hold arbitrary finite coordinates.
    """

    keypoints: np.ndarray
    image_size: tuple
    crop: CropSpec
    init_pose: PoseParams
    init_cam: WeakCameraParams
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=float)
        if kp.shape != (NUM_OBSERVATION_JOINTS, 3):
            raise InvalidParameterError("expected exactly 25 keypoint rows")
        conf = kp[:, 2]
        if np.any(conf < 0) or np.any(conf > 1):
            raise InvalidParameterError("confidences must lie in [0, 1]")
        if not np.all(np.isfinite(kp)):
            raise InvalidParameterError("keypoints must be finite")
        self.keypoints = kp


@dataclass
class FitConfig:
    """Optimizer configuration.

    gm_sigma is expressed in crop-resolution pixels; the fit scales it by the
    crop resize factor so the robustifier is subject-size invariant. The
    orientation prior anchors stage 1 to the initialization: with the body
    pose frozen at a noisy estimate, an unregularized stage 1 tilts the whole
    body to compensate limb errors (lower loss, worse 3D).
    """

    iterations: int = 100
    learning_rate: float = 0.01
    focal_override: float = None
    stage1_use_all_joints: bool = True
    pose_prior_weight: float = 1e-2
    orientation_prior_weight: float = 8e3
    camera_center_mode: str = "image_center"  # or "bbox_center"
    loss_kind: str = "squared"  # or "geman_mcclure"
    gm_sigma: float = 10.0
    joint_limit_weight: float = 100.0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParameterError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning rate must be positive")
        if self.pose_prior_weight < 0 or self.orientation_prior_weight < 0:
            raise InvalidParameterError("prior weights must be non-negative")
        if self.camera_center_mode not in ("image_center", "bbox_center"):
            raise InvalidParameterError(f"unknown camera center mode: {self.camera_center_mode}")
        if self.loss_kind not in ("squared", "geman_mcclure"):
            raise InvalidParameterError(f"unknown loss kind: {self.loss_kind}")


@dataclass
class FitResult:
    pose: PoseParams
    camera_translation: CameraTranslation
    projected: np.ndarray          # (25, 2) full-resolution pixels
    loss_trace: np.ndarray         # stage-1 then stage-2 per-iteration losses
    converged_flags: dict
    joints3d: np.ndarray           # (24, 3) root-relative meters
    part_orientations: dict        # label -> (3, 3)
    stage_iterations: tuple = (0, 0)
    frame_index: int = 0
    timestamp: float = 0.0


def joint_limit_bounds():
    """Per-component axis-angle bounds (lo, hi), each shaped (72,).

    A declared substitute prior: +-2.6 rad on every articulated component,
    one-sided hinges on the primary bending axes of knees and elbows, and an
    unconstrained root (the global orientation is free).
    """
    lo = np.full((NUM_JOINTS, 3), -2.6)
    hi = np.full((NUM_JOINTS, 3), 2.6)
    lo[0], hi[0] = -np.inf, np.inf
    # Knees flex forward about +x only.
    for j in (4, 5):
        lo[j, 0] = -0.05
    # Elbows flex about y, mirrored between sides.
    lo[18, 1], hi[18, 1] = -2.6, 0.05
    lo[19, 1], hi[19, 1] = -0.05, 2.6
    return lo.reshape(-1), hi.reshape(-1)


def reprojection_loss(joints3d, t, k, keypoints, loss_kind="squared", gm_sigma=100.0):
    """Confidence-squared weighted reprojection loss and its exact gradients.

    Returns (loss, d_loss/d_joints3d (n, 3), d_loss/d_t (3,)). Joints behind
    the camera incur a large finite penalty with a gradient pushing them back
    in front; zero-confidence joints contribute exactly nothing.
    """
    P = np.atleast_2d(np.asarray(joints3d, dtype=float))
    tv = _translation_vec(t)
    kp = np.asarray(keypoints, dtype=float)
    w = kp[:, 2] ** 2
    if not np.any(w > 0):
        raise UndefinedLossError("all keypoint confidences are zero")
    X = P + tv
    z = X[:, 2]
    dP = np.zeros_like(P)
    loss = 0.0
    behind = (z <= BEHIND_CAMERA_EPS) & (w > 0)
    if np.any(behind):
        loss += float(
            np.sum(w[behind] * (_BEHIND_PENALTY + _BEHIND_SLOPE * (BEHIND_CAMERA_EPS - z[behind])))
        )
        dP[behind, 2] = -w[behind] * _BEHIND_SLOPE
    front = (z > BEHIND_CAMERA_EPS) & (w > 0)
    if np.any(front):
        Xf = X[front]
        zf = Xf[:, 2]
        ru = k.f * Xf[:, 0] / zf + k.ox - kp[front, 0]
        rv = k.f * Xf[:, 1] / zf + k.oy - kp[front, 1]
        d2 = ru * ru + rv * rv
        wf = w[front]
        if loss_kind == "squared":
            loss += float(np.sum(wf * d2))
            rho_p = np.ones_like(d2)
        elif loss_kind == "geman_mcclure":
            s2 = gm_sigma * gm_sigma
            loss += float(np.sum(wf * s2 * d2 / (s2 + d2)))
            rho_p = s2 * s2 / (s2 + d2) ** 2
        else:
            raise InvalidParameterError(f"unknown loss kind: {loss_kind}")
        gu = 2.0 * wf * rho_p * ru
        gv = 2.0 * wf * rho_p * rv
        foz = k.f / zf
        dP[front, 0] = gu * foz
        dP[front, 1] = gv * foz
        dP[front, 2] = -(gu * Xf[:, 0] + gv * Xf[:, 1]) * k.f / (zf * zf)
    return loss, dP, dP.sum(axis=0)


def _optimize(loss_and_grad, x0, iterations, lr, step_scale=None):
    """Adaptive-moment descent with accept-if-improved backtracking.

    step_scale rescales the per-parameter step so parameters with different
    units (radians vs meters) move at comparable relative rates. The recorded
    trace is non-increasing by construction. Returns (x, trace, converged)
    where converged means the final iteration produced no meaningful
    improvement.
    """
    x = np.asarray(x0, dtype=float).copy()
    scale = np.ones_like(x) if step_scale is None else np.asarray(step_scale, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    cur, g = loss_and_grad(x)
    trace = np.empty(iterations)
    last_gain = np.inf
    for it in range(iterations):
        m = _ADAM_BETA1 * m + (1.0 - _ADAM_BETA1) * g
        v = _ADAM_BETA2 * v + (1.0 - _ADAM_BETA2) * g * g
        mhat = m / (1.0 - _ADAM_BETA1 ** (it + 1))
        vhat = v / (1.0 - _ADAM_BETA2 ** (it + 1))
        delta = lr * scale * mhat / (np.sqrt(vhat) + _ADAM_EPS)
        last_gain = 0.0
        for h in range(_MAX_HALVINGS + 1):
            cand = x - delta / (2.0**h)
            cl, cg = loss_and_grad(cand)
            if cl <= cur:
                last_gain = cur - cl
                x, cur, g = cand, cl, cg
                break
        trace[it] = cur
    converged = last_gain <= 1e-12 * max(cur, 1.0)
    return x, trace, converged


def _fk_jacobian(tree, theta):
    """FK positions, global rotations and d positions / d theta.

    dP[k, i, j, :] is the derivative of joint j's position with respect to
    component i of joint k's axis-angle; nonzero only for strict descendants.
    """
    th = np.asarray(theta, dtype=float).reshape(NUM_JOINTS, 3)
    R = axis_angle_to_matrix_batch(th)
    D = axis_angle_jacobians(th)
    G = np.empty((NUM_JOINTS, 3, 3))
    Gpar = np.empty((NUM_JOINTS, 3, 3))
    P = np.zeros((NUM_JOINTS, 3))
    Gpar[0] = np.eye(3)
    G[0] = R[0]
    for j in range(1, NUM_JOINTS):
        par = tree.parents[j]
        Gpar[j] = G[par]
        P[j] = P[par] + G[par] @ tree.offsets[j]
        G[j] = G[par] @ R[j]
    A = np.einsum("kab,kibc->kiac", Gpar, D)
    diff = P[None, :, :] - P[:, None, :]
    U = np.einsum("kba,kjb->kja", G, diff) * tree.descendants[:, :, None]
    dP = np.einsum("kiab,kjb->kija", A, U)
    return P, G, dP


def _resolve_frame(obs, cfg, projection_mode):
    """Intrinsics, initial translation and fit-frame keypoints for one frame.

    Returns (k, t_init, keypoints, to_full, gm_sigma_px): to_full maps
    fit-frame pixels back to full-resolution pixels, and gm_sigma_px is the
    robustifier width converted into the fit frame's pixel units.
    """
    W, H = obs.image_size
    if projection_mode == "weak":
        res = float(obs.crop.res)
        k = Intrinsics(WEAK_FOCAL, res / 2.0, res / 2.0, res, res)
        t0 = np.array(
            [obs.init_cam.tx, obs.init_cam.ty, tz_from_scale(WEAK_FOCAL, 1.0, obs.init_cam.s, res)]
        )
        kp = obs.keypoints.copy()
        kp[:, :2] = obs.crop.to_crop(kp[:, :2])
        return k, t0, kp, obs.crop.to_full, cfg.gm_sigma
    if projection_mode != "full":
        raise InvalidParameterError(f"unknown projection mode: {projection_mode}")
    f = cfg.focal_override if cfg.focal_override is not None else approx_focal(W, H)
    if cfg.camera_center_mode == "image_center":
        k = Intrinsics.centered(f, W, H)
        t0 = np.array(full_translation(obs.init_cam, obs.crop, f, W, H).t)
    else:
        # Baseline: camera centered on the person bounding box, translation
        # taken from the crop-frame parameters without the center correction.
        k = Intrinsics(f, obs.crop.cx, obs.crop.cy, W, H)
        t0 = np.array(
            [
                obs.init_cam.tx,
                obs.init_cam.ty,
                tz_from_scale(f, obs.crop.r, obs.init_cam.s, obs.crop.res),
            ]
        )
    return k, t0, obs.keypoints, lambda pts: pts, cfg.gm_sigma * obs.crop.r


def fit_camera_and_orientation(obs, tree, mapping, cfg, projection_mode="full"):
    """Stage 1: fit global orientation and camera translation, pose frozen.

    By default the loss uses all 25 joints; with stage1_use_all_joints off it
    is restricted to the four torso joints (shoulders and hips). A quadratic
    orientation prior anchors the global orientation to its initialization
    (see FitConfig).
    """
    k, t0, kp_fit, _, gm_sigma = _resolve_frame(obs, cfg, projection_mode)
    kp = np.array(kp_fit)
    if not cfg.stage1_use_all_joints:
        mask = np.zeros(NUM_OBSERVATION_JOINTS, dtype=bool)
        mask[list(TORSO_OBSERVATION_JOINTS)] = True
        kp[~mask, 2] = 0.0
    if not np.any(kp[:, 2] > 0):
        raise UndefinedLossError("all keypoint confidences are zero")
    theta = np.array(obs.init_pose.theta)
    base = theta.copy()
    base[:3] = 0.0
    p_base, _ = fk_positions_orientations(tree, base)
    M = mapping.matrix
    orient0 = theta[:3].copy()
    w_orient = cfg.orientation_prior_weight

    def objective(x):
        RD = axis_angle_jacobians(x[None, :3])[0]
        R = axis_angle_to_matrix_batch(x[None, :3])[0]
        p = p_base @ R.T
        loss, dQ, dT = reprojection_loss(M @ p, x[3:], k, kp, cfg.loss_kind, gm_sigma)
        gP = M.T @ dQ
        gR = np.array([np.sum(gP * (p_base @ RD[i].T)) for i in range(3)])
        d = x[:3] - orient0
        loss += w_orient * float(d @ d)
        gR = gR + 2.0 * w_orient * d
        return loss, np.concatenate([gR, dT])

    x0 = np.concatenate([theta[:3], t0])
    # Orientation moves in radians, translation in meters: let translation
    # steps scale with the subject's depth so both converge at similar rates.
    t_scale = max(1.0, abs(t0[2]))
    step_scale = np.array([1.0, 1.0, 1.0, t_scale, t_scale, t_scale])
    x, trace, converged = _optimize(
        objective, x0, cfg.iterations, cfg.learning_rate, step_scale
    )
    return x[:3], x[3:], trace, converged


def fit_pose(obs, tree, mapping, stage1, cfg, projection_mode="full"):
    """Stage 2: fit the 69 articulated rotations; orientation and camera frozen.

    Objective: reprojection loss + pose_prior_weight * ||theta - theta_init||^2
    + one-sided joint-limit hinge penalties.
    """
    orient, t_cam, trace1, conv1 = stage1
    k, _, kp, to_full, gm_sigma = _resolve_frame(obs, cfg, projection_mode)
    theta0 = np.array(obs.init_pose.theta)
    body0 = theta0[3:].copy()
    lo, hi = joint_limit_bounds()
    lo_b, hi_b = lo[3:], hi[3:]
    lam = cfg.pose_prior_weight
    w_lim = cfg.joint_limit_weight
    M = mapping.matrix

    def objective(body):
        theta = np.concatenate([orient, body])
        P, _, dP = _fk_jacobian(tree, theta)
        loss, dQ, _ = reprojection_loss(M @ P, t_cam, k, kp, cfg.loss_kind, gm_sigma)
        gP = M.T @ dQ
        g = np.einsum("kija,ja->ki", dP, gP).reshape(-1)[3:]
        d = body - body0
        loss += lam * float(d @ d)
        g = g + 2.0 * lam * d
        over = np.maximum(body - hi_b, 0.0)
        under = np.maximum(lo_b - body, 0.0)
        loss += w_lim * float(over @ over + under @ under)
        g += 2.0 * w_lim * (over - under)
        return loss, g

    body, trace2, conv2 = _optimize(objective, body0, cfg.iterations, cfg.learning_rate)
    theta = np.concatenate([orient, body])
    skel = forward_kinematics(tree, theta)
    projected = _project_lenient(mapping.matrix @ skel.joints3d, k, t_cam)
    return FitResult(
        pose=PoseParams(theta).canonicalized(),
        camera_translation=CameraTranslation(np.array(t_cam)),
        projected=to_full(projected),
        loss_trace=np.concatenate([trace1, trace2]),
        converged_flags={"camera": bool(conv1), "pose": bool(conv2)},
        joints3d=skel.joints3d,
        part_orientations=skel.part_orientations,
        stage_iterations=(len(trace1), len(trace2)),
        frame_index=obs.frame_index,
        timestamp=obs.timestamp,
    )


def fit_frame(obs, tree, mapping, cfg, projection_mode="full"):
    """Run both stages on one frame.

    Raises UndefinedLossError when the frame carries no confident keypoints;
    callers treat such frames as unfittable rather than fatal.
    """
    stage1 = fit_camera_and_orientation(obs, tree, mapping, cfg, projection_mode)
    return fit_pose(obs, tree, mapping, stage1, cfg, projection_mode)


def _project_lenient(points, k, t):
    """Projection for reporting: behind-camera points become NaN rows."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    X = pts + _translation_vec(t)
    z = X[:, 2]
    out = np.full((pts.shape[0], 2), np.nan)
    ok = z > BEHIND_CAMERA_EPS
    out[ok, 0] = k.f * X[ok, 0] / z[ok] + k.ox
    out[ok, 1] = k.f * X[ok, 1] / z[ok] + k.oy
    return out
