"""Exception types shared across the package."""


class PersposeError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(PersposeError, ValueError):
    """A numeric argument violates its documented precondition."""


class InvalidFovError(InvalidParameterError):
    """Field of view outside the open interval (0, pi)."""


class BehindCameraError(PersposeError):
    """One or more points project at or behind the image plane."""

    def __init__(self, indices, depth_eps):
        self.indices = list(indices)
        self.depth_eps = depth_eps
        super().__init__(
            f"points at indices {self.indices} have camera depth <= {depth_eps}"
        )


class UndefinedLossError(PersposeError):
    """Reprojection loss is undefined (all keypoint confidences are zero)."""


class DegenerateConfigurationError(PersposeError):
    """Point set too degenerate for a unique alignment (coincident/collinear)."""


class FilterError(PersposeError):
    """Temporal filter misuse: non-monotone timestamps or non-finite input."""


class KeypointParseError(PersposeError):
    """Malformed keypoint document."""

    def __init__(self, message, path=None, frame=None):
        self.path = path
        self.frame = frame
        where = ""
        if path is not None:
            where += f" [{path}]"
        if frame is not None:
            where += f" (frame {frame})"
        super().__init__(message + where)


class ConfigError(PersposeError):
    """Invalid or inconsistent run configuration."""


class SceneGenerationError(PersposeError):
    """Synthetic scene sampling failed (rejection cap exceeded)."""
