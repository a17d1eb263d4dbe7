"""Articulated 24-joint body skeleton.

Forward kinematics over an axis-angle pose vector (72 values, 3 per joint,
first triplet = global body orientation), plus the fixed linear map from the
24 model joints to the 25 BODY_25-style observation joints.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib.resources import files

import numpy as np

from .errors import InvalidParameterError
from .geometry import axis_angle_to_matrix_batch, canonicalize_axis_angle

NUM_JOINTS = 24
NUM_OBSERVATION_JOINTS = 25
POSE_SIZE = 3 * NUM_JOINTS

# BODY_25 keypoint order of the observation convention.
OBSERVATION_JOINT_NAMES = (
    "nose", "neck",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "left_wrist",
    "mid_hip",
    "right_hip", "right_knee", "right_ankle",
    "left_hip", "left_knee", "left_ankle",
    "right_eye", "left_eye", "right_ear", "left_ear",
    "left_big_toe", "left_small_toe", "left_heel",
    "right_big_toe", "right_small_toe", "right_heel",
)

# The nine body parts whose global orientations are evaluated, with the
# skeleton joint whose orientation carries each part.
PART_LABELS = (
    "root",
    "left_upper_arm", "right_upper_arm",
    "left_lower_arm", "right_lower_arm",
    "left_upper_leg", "right_upper_leg",
    "left_lower_leg", "right_lower_leg",
)
PART_JOINTS = {
    "root": 0,
    "left_upper_arm": 16, "right_upper_arm": 17,
    "left_lower_arm": 18, "right_lower_arm": 19,
    "left_upper_leg": 1, "right_upper_leg": 2,
    "left_lower_leg": 4, "right_lower_leg": 5,
}


@dataclass(frozen=True)
class KinematicTree:
    """Immutable skeleton: parent indices, bone offsets (meters), names."""

    parents: np.ndarray
    offsets: np.ndarray
    names: tuple

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int).reshape(NUM_JOINTS)
        offsets = np.asarray(self.offsets, dtype=float).reshape(NUM_JOINTS, 3)
        if parents[0] != -1 or np.any(parents[1:] < 0):
            raise InvalidParameterError("joint 0 must be the single root")
        if np.any(parents[1:] >= np.arange(1, NUM_JOINTS)):
            raise InvalidParameterError("parents must precede children (topological order)")
        if not np.all(np.isfinite(offsets)):
            raise InvalidParameterError("bone offsets must be finite")
        if len(self.names) != NUM_JOINTS:
            raise InvalidParameterError(f"expected {NUM_JOINTS} joint names")
        desc = np.zeros((NUM_JOINTS, NUM_JOINTS), dtype=bool)
        for j in range(1, NUM_JOINTS):
            a = parents[j]
            while a >= 0:
                desc[a, j] = True
                a = parents[a]
        for arr in (parents, offsets, desc):
            arr.setflags(write=False)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "descendants", desc)


@dataclass(frozen=True)
class PoseParams:
    """72 axis-angle parameters; the first triplet is the global orientation."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(POSE_SIZE)
        if not np.all(np.isfinite(theta)):
            raise InvalidParameterError("pose parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def canonicalized(self):
        """Wrap each joint's rotation angle into [0, pi] (I/O boundary only)."""
        out = np.array(self.theta).reshape(NUM_JOINTS, 3)
        for j in range(NUM_JOINTS):
            out[j] = canonicalize_axis_angle(out[j])
        return PoseParams(out.reshape(POSE_SIZE))


@dataclass
class BodySkeletonOutput:
    joints3d: np.ndarray                 # (24, 3) meters, root at the origin
    part_orientations: dict              # label -> (3, 3) global rotation
    joint_orientations: np.ndarray = None  # (24, 3, 3) global rotations


@dataclass(frozen=True)
class JointMapping:
    """Sparse convex map from 24 model joints to 25 observation joints."""

    matrix: np.ndarray  # (25, 24)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (NUM_OBSERVATION_JOINTS, NUM_JOINTS):
            raise InvalidParameterError("mapping matrix must be (25, 24)")
        if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-9):
            raise InvalidParameterError("mapping rows must be convex combinations")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def _theta_of(pose):
    if isinstance(pose, PoseParams):
        return pose.theta
    theta = np.asarray(pose, dtype=float).reshape(POSE_SIZE)
    return theta


def load_skeleton_template(source):
    """Parse a skeleton template JSON document (path or file object)."""
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    joints = doc["joints"]
    if len(joints) != NUM_JOINTS:
        raise InvalidParameterError(f"template must define {NUM_JOINTS} joints")
    names = tuple(j["name"] for j in joints)
    parents = np.array([j["parent"] for j in joints], dtype=int)
    offsets = np.array([j["offset"] for j in joints], dtype=float)
    return KinematicTree(parents, offsets, names)


def load_joint_mapping(source):
    """Parse a joint-mapping CSV: rows of (observation_index, model_index, weight).

    Lines starting with '#' are ignored.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    m = np.zeros((NUM_OBSERVATION_JOINTS, NUM_JOINTS))
    for row in reader:
        m[int(row["observation_index"]), int(row["model_index"])] += float(row["weight"])
    return JointMapping(m)


def default_tree():
    with files("perspose").joinpath("data/skeleton_template.json").open("r") as fh:
        return load_skeleton_template(fh)


def default_mapping():
    with files("perspose").joinpath("data/joint_mapping.csv").open("r") as fh:
        return load_joint_mapping(fh)


def fk_positions_orientations(tree, pose):
    """Core forward-kinematics pass.

    Returns (positions (24, 3), global rotations (24, 3, 3)); the root sits
    at the origin and each joint's position is its parent's position plus the
    parent's global rotation applied to the bone offset.
    """
    theta = _theta_of(pose)
    R = axis_angle_to_matrix_batch(theta.reshape(NUM_JOINTS, 3))
    G = np.empty((NUM_JOINTS, 3, 3))
    P = np.zeros((NUM_JOINTS, 3))
    G[0] = R[0]
    for j in range(1, NUM_JOINTS):
        par = tree.parents[j]
        P[j] = P[par] + G[par] @ tree.offsets[j]
        G[j] = G[par] @ R[j]
    return P, G


def forward_kinematics(tree, pose):
    """Pose the skeleton and collect the nine evaluated part orientations."""
    P, G = fk_positions_orientations(tree, pose)
    parts = {label: G[PART_JOINTS[label]] for label in PART_LABELS}
    return BodySkeletonOutput(joints3d=P, part_orientations=parts, joint_orientations=G)


def model_to_observation_joints(skel, mapping):
    """Map model joints to the 25-joint observation convention."""
    joints = skel.joints3d if isinstance(skel, BodySkeletonOutput) else np.asarray(skel)
    return mapping.matrix @ joints
