"""Evaluation metrics over predicted vs ground-truth skeletons.

Joint inputs are in meters; position errors are reported in millimeters and
orientation errors in degrees.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .body import NUM_JOINTS, PART_LABELS
from .errors import DegenerateConfigurationError, InvalidParameterError
from .geometry import apply_similarity, geodesic_distance, procrustes_align, rotation_only_align

log = logging.getLogger(__name__)

# shoulders, elbows, wrists, hips, knees, ankles in the 24-joint convention
PCK_JOINTS = (16, 17, 18, 19, 20, 21, 1, 2, 4, 5, 7, 8)
PCK_THRESHOLD_MM = 50.0
AUC_MAX_MM = 200.0
AUC_STEPS = 201


@dataclass
class EvalPair:
    """One frame of prediction vs ground truth (joints in meters)."""

    pred_joints: np.ndarray
    gt_joints: np.ndarray
    pred_parts: dict
    gt_parts: dict

    def __post_init__(self):
        self.pred_joints = np.asarray(self.pred_joints, dtype=float)
        self.gt_joints = np.asarray(self.gt_joints, dtype=float)
        if self.pred_joints.shape != (NUM_JOINTS, 3) or self.gt_joints.shape != (NUM_JOINTS, 3):
            raise InvalidParameterError(f"joint arrays must be ({NUM_JOINTS}, 3)")
        for parts in (self.pred_parts, self.gt_parts):
            if set(parts) != set(PART_LABELS):
                raise InvalidParameterError("part labels must match the canonical 9-part set")


@dataclass
class MetricsReport:
    mpjpe: float
    mpjpe_pa: float
    pck: float
    auc: float
    mpjae: float
    mpjae_pa: float
    per_frame: list = field(default_factory=list)

    def as_dict(self):
        return {
            "mpjpe": self.mpjpe,
            "mpjpe_pa": self.mpjpe_pa,
            "pck": self.pck,
            "auc": self.auc,
            "mpjae": self.mpjae,
            "mpjae_pa": self.mpjae_pa,
        }


def _root_matched_errors_mm(pair):
    """Per-joint distances (mm) after translating the prediction so the
    roots coincide."""
    pred = pair.pred_joints - pair.pred_joints[0] + pair.gt_joints[0]
    return np.linalg.norm(pred - pair.gt_joints, axis=1) * 1000.0


def _alignment(pair):
    """Similarity alignment of the prediction onto the ground truth; falls
    back to rotation-only alignment (scale 1) on degenerate predictions."""
    try:
        return procrustes_align(pair.pred_joints, pair.gt_joints)
    except DegenerateConfigurationError as exc:
        log.warning("degenerate joint configuration (%s); rotation-only alignment", exc)
        return rotation_only_align(pair.pred_joints, pair.gt_joints)


def mpjpe(pair):
    """Mean per-joint position error (mm) after root matching."""
    return float(np.mean(_root_matched_errors_mm(pair)))


def mpjpe_pa(pair):
    """Mean per-joint position error (mm) after similarity alignment."""
    return _mpjpe_pa_aligned(pair, _alignment(pair))


def _mpjpe_pa_aligned(pair, transform):
    aligned = apply_similarity(transform, pair.pred_joints)
    return float(np.mean(np.linalg.norm(aligned - pair.gt_joints, axis=1)) * 1000.0)


def _pck_errors_mm(pairs):
    return np.concatenate([_root_matched_errors_mm(p)[list(PCK_JOINTS)] for p in pairs])


def pck(pairs, threshold=PCK_THRESHOLD_MM):
    """Percentage of the 12 designated joints strictly closer than the
    threshold (mm) to ground truth, after root matching, pooled over frames."""
    errors = _pck_errors_mm(list(pairs))
    return float(np.mean(errors < threshold) * 100.0)


def auc(pairs, t_max=AUC_MAX_MM, steps=AUC_STEPS):
    """Mean of PCK(t)/100 over evenly spaced thresholds t in [0, t_max] mm."""
    errors = _pck_errors_mm(list(pairs))
    thresholds = np.linspace(0.0, t_max, steps)
    return float(np.mean(errors[None, :] < thresholds[:, None]))


def mpjae(pair):
    """Mean geodesic angle (degrees) between part orientations."""
    angles = [
        geodesic_distance(pair.pred_parts[label], pair.gt_parts[label])
        for label in PART_LABELS
    ]
    return float(np.degrees(np.mean(angles)))


def mpjae_pa(pair):
    """MPJAE after rotating all predicted parts by the similarity-alignment
    rotation obtained from the joints."""
    return _mpjae_pa_aligned(pair, _alignment(pair))


def _mpjae_pa_aligned(pair, transform):
    R = transform.rotation
    angles = [
        geodesic_distance(R @ pair.pred_parts[label], pair.gt_parts[label])
        for label in PART_LABELS
    ]
    return float(np.degrees(np.mean(angles)))


def evaluate_pair(pair):
    """All six metrics for one frame, with a single shared alignment."""
    transform = _alignment(pair)
    return {
        "mpjpe": mpjpe(pair),
        "mpjpe_pa": _mpjpe_pa_aligned(pair, transform),
        "pck": pck([pair]),
        "auc": auc([pair]),
        "mpjae": mpjae(pair),
        "mpjae_pa": _mpjae_pa_aligned(pair, transform),
    }


def evaluate_sequence(pairs):
    """Aggregate the six metrics over a sequence.

    With equal per-frame joint counts, the mean of per-frame values equals
    the pooled computation for every metric, so aggregates are plain means.
    """
    pairs = list(pairs)
    if not pairs:
        raise InvalidParameterError("cannot evaluate an empty sequence")
    per_frame = [evaluate_pair(p) for p in pairs]
    agg = {key: float(np.mean([f[key] for f in per_frame])) for key in per_frame[0]}
    return MetricsReport(per_frame=per_frame, **agg)
