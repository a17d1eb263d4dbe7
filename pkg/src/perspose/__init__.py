"""Full-perspective fitting of an articulated 3D body skeleton to 2D keypoints.

Converts network-style weak-perspective camera parameters estimated on a
resized person crop into a camera translation relative to the true image
center, fits body pose and camera by confidence-weighted reprojection loss
in two stages, smooths sequences temporally, and evaluates predictions with
the standard six 3D pose metrics. A synthetic-scene generator provides exact
ground truth for verification and ablations.
"""

from .body import (
    BodySkeletonOutput,
    JointMapping,
    KinematicTree,
    PART_LABELS,
    PoseParams,
    default_mapping,
    default_tree,
    forward_kinematics,
    load_joint_mapping,
    load_skeleton_template,
    model_to_observation_joints,
)
from .camera import (
    CameraTranslation,
    CropSpec,
    Intrinsics,
    WeakCameraParams,
    approx_focal,
    backproject,
    center_shift,
    focal_from_fov,
    full_translation,
    project,
    project_weak,
    tz_from_scale,
    weak_from_translation,
)
from .fitting import (
    FitConfig,
    FitResult,
    FrameObservation,
    Keypoint2D,
    fit_camera_and_orientation,
    fit_frame,
    fit_pose,
    reprojection_loss,
)
from .geometry import (
    SimilarityTransform,
    apply_similarity,
    axis_angle_to_matrix,
    canonicalize_axis_angle,
    geodesic_distance,
    matrix_to_axis_angle,
    procrustes_align,
)
from .io import GroundTruth, RunConfig, SequenceInput, derive_crop, load_keypoints
from .metrics import (
    EvalPair,
    MetricsReport,
    auc,
    evaluate_pair,
    evaluate_sequence,
    mpjae,
    mpjae_pa,
    mpjpe,
    mpjpe_pa,
    pck,
)
from .smoothing import OneEuroConfig, OneEuroState, one_euro_step, smooth_sequence
from .synthetic import SyntheticSceneSpec, TrueCamera, generate_synthetic

__version__ = "0.1.0"
