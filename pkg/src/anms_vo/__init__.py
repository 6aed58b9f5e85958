"""Stereo visual odometry with adaptive non-maximal keypoint suppression."""

from .anms import select_top_n, suppression_radii
from .config import PipelineConfig, RansacConfig
from .core import (
    CameraRig,
    FeatureSet,
    Keypoint,
    PoseSE3,
    Trajectory,
    TrajectoryEntry,
    compose,
    inverse,
    path_length,
)
from .evalkit import ate_rmse, kitti_segment_errors, rpe
from .matching import match, match_descriptors
from .odometry import initialize, process_frame, run_sequence
from .errors import (
    AnmsVoError,
    AssociationError,
    FormatError,
    GenerationError,
    InitializationError,
    InsufficientDataError,
    PairingError,
    TrackingFailureError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "AnmsVoError",
    "AssociationError",
    "CameraRig",
    "FeatureSet",
    "FormatError",
    "GenerationError",
    "InitializationError",
    "InsufficientDataError",
    "Keypoint",
    "PairingError",
    "PipelineConfig",
    "PoseSE3",
    "RansacConfig",
    "TrackingFailureError",
    "Trajectory",
    "TrajectoryEntry",
    "ValidationError",
    "ate_rmse",
    "compose",
    "initialize",
    "inverse",
    "kitti_segment_errors",
    "match",
    "match_descriptors",
    "path_length",
    "process_frame",
    "rpe",
    "run_sequence",
    "select_top_n",
    "suppression_radii",
    "__version__",
]
