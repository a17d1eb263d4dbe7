"""Pinhole camera model and weak-to-full perspective parameter conversion.

Units are strict throughout: lengths in meters, image coordinates in pixels,
angles in radians. The camera extrinsic rotation is the identity; a subject
in front of the camera has positive camera-frame depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InvalidFovError, InvalidParameterError

DEFAULT_CROP_RES = 224
# Crop-frame focal length assumed by the weak-perspective baseline.
WEAK_FOCAL = 5000.0
# Minimum camera-frame depth before projection is considered invalid.
BEHIND_CAMERA_EPS = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Square-pixel, zero-skew intrinsics: fx = fy = f."""

    f: float
    ox: float
    oy: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.f > 0 and self.width > 0 and self.height > 0):
            raise InvalidParameterError("focal length and image size must be positive")

    @classmethod
    def centered(cls, f, width, height):
        """Principal point at the image center."""
        return cls(float(f), width / 2.0, height / 2.0, float(width), float(height))

    def matrix(self):
        return np.array(
            [[self.f, 0.0, self.ox], [0.0, self.f, self.oy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class CropSpec:
    """Square person crop: center (cx, cy) and side b in full-resolution
    pixels, resized to res x res before inference."""

    cx: float
    cy: float
    b: float
    res: int = DEFAULT_CROP_RES

    def __post_init__(self):
        if not (self.b > 0 and self.res > 0):
            raise InvalidParameterError("crop side and resolution must be positive")

    @property
    def r(self):
        """Resize factor from crop resolution back to native pixels."""
        return self.b / self.res

    @property
    def top_left(self):
        return (self.cx - self.b / 2.0, self.cy - self.b / 2.0)

    def to_crop(self, points2d):
        """Full-resolution pixels -> crop-frame pixels."""
        tl = np.array(self.top_left)
        return (np.asarray(points2d, dtype=float) - tl) / self.r

    def to_full(self, points2d):
        """Crop-frame pixels -> full-resolution pixels."""
        tl = np.array(self.top_left)
        return np.asarray(points2d, dtype=float) * self.r + tl


@dataclass(frozen=True)
class WeakCameraParams:
    """Network-style camera encoding: scale s plus crop-frame translation."""

    s: float
    tx: float
    ty: float

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidParameterError("camera scale must be positive")


@dataclass(frozen=True)
class CameraTranslation:
    """World-to-camera translation (identity extrinsic rotation).

    tz is positive for any subject in front of the camera.
    """

    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InvalidParameterError("translation must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def of(cls, tx, ty, tz):
        return cls(np.array([tx, ty, tz], dtype=float))


def _translation_vec(t):
    if isinstance(t, CameraTranslation):
        return t.t
    return np.asarray(t, dtype=float).reshape(3)


def approx_focal(width, height):
    """Focal-length approximation: the image diagonal in pixels.

    Corresponds to a diagonal field of view of roughly 55 degrees.
    """
    if width < 0 or height < 0 or (width == 0 and height == 0):
        raise InvalidParameterError("image dimensions must be non-negative, not both zero")
    return float(np.hypot(width, height))


def focal_from_fov(width, height, fov_diag):
    """Focal length from the diagonal field of view (radians)."""
    if not 0.0 < fov_diag < np.pi:
        raise InvalidFovError(f"diagonal FOV must lie in (0, pi), got {fov_diag}")
    return float(np.hypot(width, height) / (2.0 * np.tan(fov_diag / 2.0)))


def tz_from_scale(f, r, s, res=DEFAULT_CROP_RES):
    """Camera depth from the network scale: tz = 2 f / (r * res * s).

    With r = 1 this is the crop-frame relation used by the weak baseline.
    """
    if not (f > 0 and r > 0 and s > 0 and res > 0):
        raise InvalidParameterError("tz_from_scale requires strictly positive inputs")
    return 2.0 * f / (r * res * s)


def center_shift(crop, s, width, height):
    """Camera-center shift of an off-center crop, in model units:

        c_hat = 2 * (crop_center - image_center) / (s * b)
    """
    if not s > 0:
        raise InvalidParameterError("camera scale must be positive")
    denom = s * crop.b
    return (
        2.0 * (crop.cx - width / 2.0) / denom,
        2.0 * (crop.cy - height / 2.0) / denom,
    )


def full_translation(weak, crop, f, width, height):
    """Convert (s, tx, ty) estimated on a resized crop into the camera
    translation relative to the true (image-center) camera location."""
    tz = tz_from_scale(f, crop.r, weak.s, crop.res)
    cx_hat, cy_hat = center_shift(crop, weak.s, width, height)
    return CameraTranslation.of(weak.tx - cx_hat, weak.ty - cy_hat, tz)


def weak_from_translation(t, crop, f, width, height):
    """Inverse of full_translation: encode a camera translation as (s, tx, ty)."""
    t = _translation_vec(t)
    if not t[2] > 0:
        raise InvalidParameterError("encoding requires positive camera depth")
    s = 2.0 * f / (crop.b * t[2])
    cx_hat, cy_hat = center_shift(crop, s, width, height)
    return WeakCameraParams(s, t[0] + cx_hat, t[1] + cy_hat)


def project(points, k, t):
    """Pinhole projection of (n, 3) world points to (n, 2) pixels.

    Raises BehindCameraError naming the offending indices when any point has
    camera depth <= BEHIND_CAMERA_EPS.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tv = _translation_vec(t)
    X = pts + tv
    z = X[:, 2]
    bad = np.nonzero(z <= BEHIND_CAMERA_EPS)[0]
    if bad.size:
        raise BehindCameraError(bad.tolist(), BEHIND_CAMERA_EPS)
    out = np.empty((pts.shape[0], 2))
    out[:, 0] = k.f * X[:, 0] / z + k.ox
    out[:, 1] = k.f * X[:, 1] / z + k.oy
    return out


def project_weak(points, k, weak):
    """Crop-frame projection of the weak-perspective baseline.

    Uses the crop-frame depth tz = 2 f / (res * s), i.e. the original
    pipeline's convention; k must be the square crop intrinsics.
    """
    if k.width != k.height:
        raise InvalidParameterError("weak projection expects square crop intrinsics")
    tz = tz_from_scale(k.f, 1.0, weak.s, k.width)
    return project(points, k, CameraTranslation.of(weak.tx, weak.ty, tz))


def backproject(pixels, k, t, depths):
    """Invert project() along each pixel ray at the given camera depths."""
    px = np.atleast_2d(np.asarray(pixels, dtype=float))
    z = np.asarray(depths, dtype=float).reshape(-1)
    tv = _translation_vec(t)
    X = np.empty((px.shape[0], 3))
    X[:, 0] = (px[:, 0] - k.ox) / k.f * z
    X[:, 1] = (px[:, 1] - k.oy) / k.f * z
    X[:, 2] = z
    return X - tv
