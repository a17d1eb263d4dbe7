"""Synthetic scene generation with exact ground truth.

Samples body poses and camera placements, renders ideal keypoint detections
through the full-perspective camera, perturbs them with configurable noise,
and emits the weak-parameter encodings used as fit initialization. Every
quantity a fit estimates is known exactly, enabling desk-scale verification
of the projection model, the optimizer and the metric suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import PoseParams, forward_kinematics, model_to_observation_joints
from .camera import Intrinsics, approx_focal, focal_from_fov, project, weak_from_translation
from .errors import SceneGenerationError
from .fitting import FrameObservation, joint_limit_bounds
from .geometry import matrix_to_axis_angle, rot_x, rot_y, rot_z
from .io import GroundTruth, SequenceInput, derive_crop

# BODY_25 indices by reliability group for the confidence model, mirroring
# how detector confidence typically degrades from torso to limbs to face and
# foot tips.
TORSO_OBS = (1, 2, 5, 8, 9, 12)
LIMB_OBS = (3, 4, 6, 7, 10, 11, 13, 14)
EXTREMITY_OBS = (0, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24)

# Rest-pose offsets giving the subject a natural stance with some depth
# extent (bent elbows/knees), keyed by (joint index, axis).
_BASE_CHANNELS = {
    (16, 2): -0.25, (17, 2): 0.25,   # shoulders slightly lowered from T-pose
    (18, 1): -0.55, (19, 1): 0.55,   # elbows bent, forearms forward
    (1, 0): -0.12, (2, 0): -0.08,    # hips
    (4, 0): 0.28, (5, 0): 0.18,      # knees
    (3, 0): 0.06, (12, 0): 0.08,     # spine, neck
}

# Channels the motion / per-frame variation models may articulate.
_ARTICULATED = (
    (16, 0), (16, 2), (17, 0), (17, 2),  # shoulders
    (18, 1), (19, 1),                    # elbows
    (1, 0), (2, 0),                      # hips
    (4, 0), (5, 0),                      # knees
    (3, 1), (12, 1),                     # spine/neck twist
    (7, 0), (8, 0),                      # ankles
)

_PLACEMENT_ATTEMPTS = 100
_EDGE_PAD = 4.0  # px margin required of every noiseless keypoint


@dataclass
class SyntheticSceneSpec:
    frames: int = 50
    image_size: tuple = (1080, 1920)          # portrait full-resolution frame
    fov_deg: float = 70.0                     # None -> diagonal approximation
    distance_range: tuple = (2.0, 8.0)        # camera depth of the body root, m
    lateral_frac: float = 0.15                # body center offset, fraction of W/2
    vertical_frac: float = 0.05               # fraction of H/2
    pose_sigma: float = 0.1                   # init pose noise, rad/component
    translation_noise: float = 0.1            # init translation noise, relative
    keypoint_noise: float = 2.0               # detection noise, px
    conf_torso: tuple = (0.85, 1.0)
    conf_limb: tuple = (0.5, 0.8)
    conf_extremity: tuple = (0.25, 0.55)
    pose_variation: float = 0.12              # true-pose spread, static mode
    yaw_range: float = 0.4                    # body yaw, rad
    motion: str = "static"                    # static | sinusoidal
    motion_rate_hz: float = 0.35
    motion_amplitude: float = 0.2
    frame_rate: float = 30.0

    def __post_init__(self):
        if self.frames < 1:
            raise SceneGenerationError("need at least one frame")
        if self.distance_range[0] <= 0 or self.distance_range[1] < self.distance_range[0]:
            raise SceneGenerationError("invalid distance range")
        for sigma in (self.pose_sigma, self.translation_noise, self.keypoint_noise,
                      self.pose_variation):
            if sigma < 0:
                raise SceneGenerationError("noise levels must be non-negative")
        if self.motion not in ("static", "sinusoidal"):
            raise SceneGenerationError(f"unknown motion model: {self.motion}")


@dataclass
class TrueCamera:
    """Exact generating camera: shared focal plus per-frame translation/pose."""

    focal: float
    translations: np.ndarray  # (n, 3)
    poses: np.ndarray         # (n, 72)
    image_size: tuple = (0, 0)


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _base_pose():
    theta = np.zeros((24, 3))
    for (j, axis), value in _BASE_CHANNELS.items():
        theta[j, axis] = value
    return theta.reshape(-1)


def _clip_to_limits(theta):
    lo, hi = joint_limit_bounds()
    out = np.clip(theta, np.where(np.isfinite(lo), lo + 0.02, theta),
                  np.where(np.isfinite(hi), hi - 0.02, theta))
    return out


def _true_pose(spec, frame, rng, phases):
    theta = _base_pose()
    t = frame / spec.frame_rate
    if spec.motion == "sinusoidal":
        for idx, (j, axis) in enumerate(_ARTICULATED):
            theta[3 * j + axis] += spec.motion_amplitude * np.sin(
                2.0 * np.pi * spec.motion_rate_hz * t + phases[idx]
            )
        yaw = 0.5 * spec.yaw_range * np.sin(2.0 * np.pi * spec.motion_rate_hz * t + phases[-1])
        tilt = 0.05 * np.sin(2.0 * np.pi * spec.motion_rate_hz * t)
    else:
        for j, axis in _ARTICULATED:
            theta[3 * j + axis] += rng.normal(0.0, spec.pose_variation)
        yaw = rng.uniform(-spec.yaw_range, spec.yaw_range)
        tilt = rng.normal(0.0, 0.05)
    theta = _clip_to_limits(theta)
    # Template is y-up; flip into the y-down image convention, then yaw/tilt.
    theta[:3] = matrix_to_axis_angle(rot_z(np.pi) @ rot_y(yaw) @ rot_x(tilt))
    return theta


def _place_subject(spec, obs_joints, f, rng, lateral, vertical, tz):
    W, H = spec.image_size
    mid = (obs_joints.min(axis=0) + obs_joints.max(axis=0)) / 2.0
    tx = lateral * (W / 2.0) * tz / f - mid[0]
    ty = vertical * (H / 2.0) * tz / f - mid[1]
    return np.array([tx, ty, tz])


def _visible(spec, obs_joints, f, t_hat):
    W, H = spec.image_size
    depths = obs_joints[:, 2] + t_hat[2]
    if np.any(depths <= 0.3):
        return False
    px = project(obs_joints, Intrinsics.centered(f, W, H), t_hat)
    return bool(
        np.all(px[:, 0] >= _EDGE_PAD) and np.all(px[:, 0] <= W - _EDGE_PAD)
        and np.all(px[:, 1] >= _EDGE_PAD) and np.all(px[:, 1] <= H - _EDGE_PAD)
    )


def generate_synthetic(spec, tree, mapping, seed=0):
    """Build one synthetic sequence.

    Returns (SequenceInput with ground truth attached, TrueCamera).
    """
    rng = _rng(seed)
    W, H = spec.image_size
    if spec.fov_deg is None:
        f = approx_focal(W, H)
    else:
        f = focal_from_fov(W, H, np.radians(spec.fov_deg))
    k = Intrinsics.centered(f, W, H)
    phases = rng.uniform(0.0, 2.0 * np.pi, len(_ARTICULATED) + 1)
    frames = []
    gt_joints = []
    gt_parts = []
    true_t = np.empty((spec.frames, 3))
    true_pose = np.empty((spec.frames, 72))
    for i in range(spec.frames):
        timestamp = i / spec.frame_rate
        for attempt in range(_PLACEMENT_ATTEMPTS):
            theta = _true_pose(spec, i, rng, phases)
            skel = forward_kinematics(tree, theta)
            obs_joints = model_to_observation_joints(skel, mapping)
            tz = rng.uniform(*spec.distance_range)
            lateral = rng.uniform(-spec.lateral_frac, spec.lateral_frac)
            vertical = rng.uniform(-spec.vertical_frac, spec.vertical_frac)
            t_hat = _place_subject(spec, obs_joints, f, rng, lateral, vertical, tz)
            if _visible(spec, obs_joints, f, t_hat):
                break
        else:
            raise SceneGenerationError(
                f"frame {i}: no visible subject placement in {_PLACEMENT_ATTEMPTS} attempts"
            )
        true_px = project(obs_joints, k, t_hat)
        kp = np.empty((25, 3))
        kp[:, :2] = true_px + rng.normal(0.0, spec.keypoint_noise, (25, 2))
        kp[list(TORSO_OBS), 2] = rng.uniform(*spec.conf_torso, len(TORSO_OBS))
        kp[list(LIMB_OBS), 2] = rng.uniform(*spec.conf_limb, len(LIMB_OBS))
        kp[list(EXTREMITY_OBS), 2] = rng.uniform(*spec.conf_extremity, len(EXTREMITY_OBS))
        crop = derive_crop(kp, spec.image_size)
        t_init = t_hat + rng.normal(
            0.0, spec.translation_noise * np.linalg.norm(t_hat) / np.sqrt(3.0), 3
        )
        t_init[2] = max(t_init[2], 0.25 * t_hat[2])  # keep the encoding valid
        weak = weak_from_translation(t_init, crop, f, W, H)
        theta_init = theta + rng.normal(0.0, spec.pose_sigma, 72)
        frames.append(
            FrameObservation(
                keypoints=kp,
                image_size=spec.image_size,
                crop=crop,
                init_pose=PoseParams(theta_init),
                init_cam=weak,
                frame_index=i,
                timestamp=timestamp,
            )
        )
        gt_joints.append(skel.joints3d)
        gt_parts.append(dict(skel.part_orientations))
        true_t[i] = t_hat
        true_pose[i] = theta
    seq = SequenceInput(
        frames=frames,
        image_size=spec.image_size,
        ground_truth=GroundTruth(joints=np.array(gt_joints), parts=gt_parts),
        source={"kind": "synthetic", "focal": f},
    )
    camera = TrueCamera(focal=f, translations=true_t, poses=true_pose,
                        image_size=spec.image_size)
    return seq, camera
