"""Shared exception types."""


class EmptySceneError(ValueError):
    """Raised when an operation that needs at least one element gets none."""


class BackendUnavailableError(RuntimeError):
    """The external segmentation backend could not be reached."""


class ProtocolError(RuntimeError):
    """The external segmentation backend returned a malformed response."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, malformed, or version-incompatible."""
