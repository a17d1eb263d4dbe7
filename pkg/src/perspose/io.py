"""File formats, configuration and report serialization.

Input formats
-------------
Keypoints: per-frame JSON documents in the detector's standard layout::

    {"version": 1.3, "people": [{"pose_keypoints_2d": [x0, y0, c0, ...]}]}

with 75 values (25 BODY_25 joints) per person. A path may be a directory of
such files (sorted by name), a single-frame file, a JSON list of frame
documents, or ``{"frames": [...]}``.

Initial parameters sidecar::

    {"schema_version": 1, "image_size": [W, H],
     "frames": [{"frame_index": 0, "timestamp": 0.0, "theta": [... 72 ...],
                 "camera": {"s": 1.0, "tx": 0.0, "ty": 0.0},
                 "crop": {"cx": 0, "cy": 0, "b": 0, "res": 224}}, ...]}

``crop`` and ``timestamp`` are optional; missing crops are derived from the
keypoints and missing timestamps default to frame_index / nominal_rate.

Ground truth::

    {"schema_version": 1,
     "frames": [{"frame_index": 0, "joints": [[x, y, z] x 24 meters],
                 "part_orientations": {label: 3x3 row-major}}, ...]}
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .body import NUM_OBSERVATION_JOINTS, PART_LABELS, PoseParams
from .camera import CameraTranslation, CropSpec, DEFAULT_CROP_RES, WeakCameraParams
from .errors import ConfigError, InvalidParameterError, KeypointParseError
from .fitting import FitConfig, FitResult, FrameObservation
from .smoothing import OneEuroConfig

REPORT_SCHEMA_VERSION = 1

CROP_MARGIN = 1.2
CROP_MIN_SIDE = 64.0


@dataclass
class GroundTruth:
    """Per-frame 24-joint skeletons (meters) and 9 part orientations."""

    joints: np.ndarray  # (n, 24, 3)
    parts: list         # per frame: dict label -> (3, 3)


@dataclass
class SequenceInput:
    frames: list                      # FrameObservation | None per frame
    image_size: tuple
    ground_truth: GroundTruth = None
    source: dict = field(default_factory=dict)


def derive_crop(keypoints, image_size, margin=CROP_MARGIN, min_side=CROP_MIN_SIDE,
                res=DEFAULT_CROP_RES):
    """Square crop around the confident keypoints.

    Tight box over keypoints with confidence > 0, squared by expanding the
    short side symmetrically, scaled by the margin factor, floored at
    min_side and clamped inside the image (recentering as needed).
    """
    kp = np.asarray(keypoints, dtype=float)
    conf = kp[:, 2] > 0
    if not np.any(conf):
        raise InvalidParameterError("cannot derive a crop without confident keypoints")
    pts = kp[conf, :2]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = float(max((hi - lo).max() * margin, min_side))
    W, H = image_size
    side = min(side, float(W), float(H))
    center = (lo + hi) / 2.0
    cx = float(np.clip(center[0], side / 2.0, W - side / 2.0))
    cy = float(np.clip(center[1], side / 2.0, H - side / 2.0))
    return CropSpec(cx, cy, side, res)


def _parse_people(doc, path=None, frame=None):
    if not isinstance(doc, dict) or "people" not in doc:
        raise KeypointParseError("document has no 'people' entry", path, frame)
    people = []
    for person in doc["people"]:
        flat = person.get("pose_keypoints_2d")
        if flat is None or len(flat) != 3 * NUM_OBSERVATION_JOINTS:
            raise KeypointParseError(
                f"expected {3 * NUM_OBSERVATION_JOINTS} pose values per person", path, frame
            )
        kp = np.asarray(flat, dtype=float).reshape(NUM_OBSERVATION_JOINTS, 3)
        if not np.all(np.isfinite(kp)):
            raise KeypointParseError("non-finite keypoint values", path, frame)
        kp[:, 2] = np.clip(kp[:, 2], 0.0, 1.0)
        people.append(kp)
    return people


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise KeypointParseError(f"cannot read document: {exc}", path) from exc


def load_keypoints(path, person_index=None):
    """Load per-frame keypoints, resolving multiple people per frame.

    Default person policy: highest summed confidence on the first detection,
    then nearest confidence-weighted centroid to the previously selected
    person. Frames with no people yield None (empty-frame marker).
    """
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
        if not names:
            raise KeypointParseError("directory contains no .json documents", path)
        docs = [(os.path.join(path, n), _load_json(os.path.join(path, n))) for n in names]
        frames_people = [_parse_people(doc, p, i) for i, (p, doc) in enumerate(docs)]
    else:
        doc = _load_json(path)
        if isinstance(doc, dict) and "people" in doc:
            frame_docs = [doc]
        elif isinstance(doc, dict) and "frames" in doc:
            frame_docs = doc["frames"]
        elif isinstance(doc, list):
            frame_docs = doc
        else:
            raise KeypointParseError("unrecognized keypoint document layout", path)
        frames_people = [_parse_people(d, path, i) for i, d in enumerate(frame_docs)]
    return _select_people(frames_people, person_index)


def _centroid(kp):
    w = kp[:, 2]
    return (kp[:, :2] * w[:, None]).sum(axis=0) / w.sum()


def _select_people(frames_people, person_index=None):
    selected = []
    prev_centroid = None
    for people in frames_people:
        if not people:
            selected.append(None)
            continue
        if person_index is not None:
            kp = people[person_index] if 0 <= person_index < len(people) else None
        else:
            scores = [p[:, 2].sum() for p in people]
            valid = [i for i, s in enumerate(scores) if s > 0]
            if not valid:
                kp = people[0]  # zero-confidence frame: unfittable downstream
            elif prev_centroid is None:
                kp = people[max(valid, key=lambda i: scores[i])]
            else:
                kp = people[
                    min(valid, key=lambda i: np.linalg.norm(_centroid(people[i]) - prev_centroid))
                ]
        if kp is not None and kp[:, 2].sum() > 0:
            prev_centroid = _centroid(kp)
        selected.append(kp)
    return selected


def load_ground_truth(path):
    doc = _load_json(path)
    joints = []
    parts = []
    for i, fr in enumerate(doc["frames"]):
        joints.append(np.asarray(fr["joints"], dtype=float))
        pdict = fr["part_orientations"]
        missing = set(PART_LABELS) - set(pdict)
        if missing:
            raise KeypointParseError(f"ground truth missing parts {sorted(missing)}", path, i)
        parts.append({label: np.asarray(pdict[label], dtype=float) for label in PART_LABELS})
    return GroundTruth(joints=np.array(joints), parts=parts)


def build_sequence(keypoints_path, init_path, gt_path=None, person_index=None,
                   nominal_rate=30.0):
    """Assemble a SequenceInput from keypoint, sidecar and ground-truth files."""
    keypoints = load_keypoints(keypoints_path, person_index)
    sidecar = _load_json(init_path)
    image_size = tuple(sidecar["image_size"])
    entries = sidecar["frames"]
    if len(entries) != len(keypoints):
        raise KeypointParseError(
            f"sidecar has {len(entries)} frames but keypoints have {len(keypoints)}", init_path
        )
    frames = []
    for i, (kp, entry) in enumerate(zip(keypoints, entries)):
        if kp is None:
            frames.append(None)
            continue
        timestamp = float(entry.get("timestamp", i / nominal_rate))
        if "crop" in entry and entry["crop"] is not None:
            c = entry["crop"]
            crop = CropSpec(float(c["cx"]), float(c["cy"]), float(c["b"]),
                            int(c.get("res", DEFAULT_CROP_RES)))
        elif np.any(kp[:, 2] > 0):
            crop = derive_crop(kp, image_size)
        else:
            frames.append(None)  # nothing to anchor a crop on
            continue
        cam = entry["camera"]
        frames.append(
            FrameObservation(
                keypoints=kp,
                image_size=image_size,
                crop=crop,
                init_pose=PoseParams(np.asarray(entry["theta"], dtype=float)),
                init_cam=WeakCameraParams(float(cam["s"]), float(cam["tx"]), float(cam["ty"])),
                frame_index=int(entry.get("frame_index", i)),
                timestamp=timestamp,
            )
        )
    gt = load_ground_truth(gt_path) if gt_path else None
    return SequenceInput(frames=frames, image_size=image_size, ground_truth=gt,
                         source={"keypoints": str(keypoints_path), "init": str(init_path)})


def save_synthetic_bundle(seq, truth, out_dir):
    """Write a synthetic sequence in the exact layout `fit` consumes."""
    os.makedirs(out_dir, exist_ok=True)
    kp_dir = os.path.join(out_dir, "keypoints")
    os.makedirs(kp_dir, exist_ok=True)
    entries = []
    for i, obs in enumerate(seq.frames):
        doc = {"version": 1.3, "people": []}
        if obs is not None:
            doc["people"].append(
                {"person_id": [-1], "pose_keypoints_2d": jsonify(obs.keypoints.reshape(-1))}
            )
            entries.append(
                {
                    "frame_index": obs.frame_index,
                    "timestamp": obs.timestamp,
                    "theta": jsonify(obs.init_pose.theta),
                    "camera": {"s": obs.init_cam.s, "tx": obs.init_cam.tx, "ty": obs.init_cam.ty},
                    "crop": {"cx": obs.crop.cx, "cy": obs.crop.cy, "b": obs.crop.b,
                             "res": obs.crop.res},
                }
            )
        with open(os.path.join(kp_dir, f"frame_{i:06d}_keypoints.json"), "w") as fh:
            json.dump(doc, fh)
    sidecar = {"schema_version": 1, "image_size": list(seq.image_size), "frames": entries}
    with open(os.path.join(out_dir, "init_params.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)
    if seq.ground_truth is not None:
        gt_doc = {
            "schema_version": 1,
            "frames": [
                {
                    "frame_index": i,
                    "joints": jsonify(seq.ground_truth.joints[i]),
                    "part_orientations": {
                        label: jsonify(seq.ground_truth.parts[i][label]) for label in PART_LABELS
                    },
                }
                for i in range(len(seq.ground_truth.joints))
            ],
        }
        with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
            json.dump(gt_doc, fh)
    scene = {
        "schema_version": 1,
        "image_size": list(seq.image_size),
        "focal": truth.focal,
        "translations": jsonify(truth.translations),
        "poses": jsonify(truth.poses),
    }
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        json.dump(scene, fh)
    return {
        "keypoints": kp_dir,
        "init": os.path.join(out_dir, "init_params.json"),
        "ground_truth": os.path.join(out_dir, "ground_truth.json"),
        "scene": os.path.join(out_dir, "scene.json"),
    }


def jsonify(obj):
    """Recursively convert numpy containers into JSON-serializable values."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    return obj


def fit_result_to_dict(result):
    if result is None:
        return None
    return {
        "frame_index": result.frame_index,
        "timestamp": result.timestamp,
        "pose": jsonify(result.pose.theta),
        "camera_translation": jsonify(result.camera_translation.t),
        "projected": jsonify(result.projected),
        "joints3d": jsonify(result.joints3d),
        "part_orientations": {
            label: jsonify(result.part_orientations[label]) for label in PART_LABELS
        },
        "initial_loss": float(result.loss_trace[0]),
        "final_loss": float(result.loss_trace[-1]),
        "loss_trace": jsonify(result.loss_trace),
        "stage_iterations": list(result.stage_iterations),
        "converged": dict(result.converged_flags),
    }


def fit_result_from_dict(doc):
    if doc is None:
        return None
    return FitResult(
        pose=PoseParams(np.asarray(doc["pose"], dtype=float)),
        camera_translation=CameraTranslation(np.asarray(doc["camera_translation"], dtype=float)),
        projected=np.asarray(doc["projected"], dtype=float),
        loss_trace=np.asarray(doc["loss_trace"], dtype=float),
        converged_flags=dict(doc["converged"]),
        joints3d=np.asarray(doc["joints3d"], dtype=float),
        part_orientations={
            label: np.asarray(doc["part_orientations"][label], dtype=float)
            for label in PART_LABELS
        },
        stage_iterations=tuple(doc["stage_iterations"]),
        frame_index=int(doc["frame_index"]),
        timestamp=float(doc["timestamp"]),
    )


def write_report(report, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonify(report), fh, indent=1)


def load_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Run configuration


@dataclass
class FocalSource:
    """Exactly one way to obtain the focal length."""

    mode: str = "approximate"  # approximate | explicit | fov
    value: float = None        # pixels for explicit, degrees for fov

    def __post_init__(self):
        if self.mode not in ("approximate", "explicit", "fov"):
            raise ConfigError(f"unknown focal source mode: {self.mode}")
        if self.mode == "approximate" and self.value is not None:
            raise ConfigError("focal source 'approximate' takes no value")
        if self.mode in ("explicit", "fov") and self.value is None:
            raise ConfigError(f"focal source '{self.mode}' requires a value")


@dataclass
class SweepSpec:
    kind: str            # focal | iterations | center
    values: list = None  # focal factors, iteration counts, or center modes

    def __post_init__(self):
        defaults = {
            "focal": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0],
            "iterations": [10, 25, 50, 100],
            "center": ["bbox", "image"],
        }
        if self.kind not in defaults:
            raise ConfigError(f"unknown sweep kind: {self.kind}")
        if self.values is None:
            self.values = defaults[self.kind]


@dataclass
class RunConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    smoothing: OneEuroConfig = field(default_factory=OneEuroConfig)
    smoothing_enabled: bool = False
    projection_mode: str = "full"  # full | weak
    focal_source: FocalSource = field(default_factory=FocalSource)
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"
    keypoints_path: str = None
    init_path: str = None
    gt_path: str = None
    report_path: str = None
    person_index: int = None
    sweep: SweepSpec = None
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.projection_mode not in ("full", "weak"):
            raise ConfigError(f"unknown projection mode: {self.projection_mode}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _build(cls, doc, context):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")
    try:
        return cls(**doc)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(f"invalid {context}: {exc}") from exc


def run_config_from_dict(doc):
    doc = dict(doc)
    kwargs = {}
    if "fit" in doc:
        kwargs["fit"] = _build(FitConfig, doc.pop("fit"), "fit config")
    if "smoothing" in doc:
        smoothing = dict(doc.pop("smoothing"))
        kwargs["smoothing_enabled"] = bool(smoothing.pop("enabled", False))
        kwargs["smoothing"] = _build(OneEuroConfig, smoothing, "smoothing config")
    if "focal_source" in doc:
        kwargs["focal_source"] = _build(FocalSource, doc.pop("focal_source"), "focal source")
    if "sweep" in doc and doc["sweep"] is not None:
        kwargs["sweep"] = _build(SweepSpec, doc.pop("sweep"), "sweep spec")
    else:
        doc.pop("sweep", None)
    inputs = doc.pop("inputs", {})
    known_inputs = {"keypoints", "init", "ground_truth", "report", "person_index"}
    unknown = set(inputs) - known_inputs
    if unknown:
        raise ConfigError(f"unknown input keys: {sorted(unknown)}")
    kwargs["keypoints_path"] = inputs.get("keypoints")
    kwargs["init_path"] = inputs.get("init")
    kwargs["gt_path"] = inputs.get("ground_truth")
    kwargs["report_path"] = inputs.get("report")
    kwargs["person_index"] = inputs.get("person_index")
    for key in ("projection_mode", "seed", "workers", "out_dir", "synth", "smoothing_enabled"):
        if key in doc:
            kwargs[key] = doc.pop(key)
    if doc:
        raise ConfigError(f"unknown config keys: {sorted(doc)}")
    return RunConfig(**kwargs)


def load_run_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return run_config_from_dict(doc)
