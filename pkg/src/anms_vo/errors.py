"""Exception hierarchy for the anms_vo package."""


class AnmsVoError(Exception):
    """Base class for all package errors."""


class ValidationError(AnmsVoError):
    """A domain object violates one of its invariants."""


class FormatError(AnmsVoError):
    """A file does not conform to its declared format.

    Every FormatError carries a location: a byte offset for binary files,
    a line number for text files.
    """

    def __init__(self, message, *, path=None, byte_offset=None, line=None):
        self.path = path
        self.byte_offset = byte_offset
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if byte_offset is not None:
            where.append(f"byte offset {byte_offset}")
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class PairingError(AnmsVoError):
    """A stereo feature directory is missing one side of a frame."""

    def __init__(self, message, *, frame=None):
        self.frame = frame
        super().__init__(message)


class InsufficientDataError(AnmsVoError):
    """Too few correspondences or poses for the requested operation."""


class TrackingFailureError(AnmsVoError):
    """Pose estimation could not find enough inliers."""


class InitializationError(AnmsVoError):
    """The tracking pipeline could not build an initial landmark set."""


class AssociationError(AnmsVoError):
    """Two trajectories share no associable poses."""


class GenerationError(AnmsVoError):
    """A synthetic scene could not satisfy its visibility constraints."""
