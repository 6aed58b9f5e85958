"""Frame-to-keyframe stereo tracking pipeline.

Per frame: spatially uniform keypoint selection in the left image, descriptor
matching against the active landmark set, robust PnP for the new pose, and --
when tracking thins out or a frame gap elapses -- promotion of the frame to a
keyframe: its stereo pair is matched, triangulated, depth-filtered, and the
resulting landmarks replace the active set. There is no loop-closure stage,
so the pose at frame t depends only on frames up to t.

Only the most recent keyframe's landmarks stay active (no multi-keyframe map
or bundle adjustment), which trades global consistency for a small, causal
pipeline. On tracking failure the last pose is held and the tracker attempts
re-initialization from the next stereo pair.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass

import numpy as np

from .anms import select_features
from .config import PipelineConfig
from .core import CameraRig, FeatureSet, PoseSE3, Trajectory, TrajectoryEntry
from .errors import (
    InitializationError,
    InsufficientDataError,
    TrackingFailureError,
    ValidationError,
)
from .geometry import Landmark, depth_filter, ransac_pnp, triangulate_matches
from .matching import match_descriptors

log = logging.getLogger(__name__)


class TrackingStatus(enum.Enum):
    OK = "OK"
    LOST = "LOST"


@dataclass(frozen=True)
class TrackingState:
    """Immutable per-frame tracker state (new states are derived, not mutated)."""

    pose: PoseSE3
    landmarks: tuple[Landmark, ...]
    landmark_positions_world: np.ndarray
    landmark_descriptors: np.ndarray
    frame_index: int
    last_keyframe_index: int
    status: TrackingStatus
    n_matches: int = 0
    n_inliers: int = 0
    is_keyframe: bool = False

    def __post_init__(self):
        for name in ("landmark_positions_world", "landmark_descriptors"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def held(self, frame_index: int, n_matches: int = 0) -> "TrackingState":
        """LOST successor: pose and landmarks carried over unchanged."""
        return TrackingState(
            pose=self.pose,
            landmarks=self.landmarks,
            landmark_positions_world=self.landmark_positions_world,
            landmark_descriptors=self.landmark_descriptors,
            frame_index=frame_index,
            last_keyframe_index=self.last_keyframe_index,
            status=TrackingStatus.LOST,
            n_matches=n_matches,
        )


def _build_landmarks(
    left: FeatureSet, right: FeatureSet, rig: CameraRig, cfg: PipelineConfig, pose: PoseSE3
):
    """Stereo-match the ANMS-selected features and triangulate landmarks.

    Returns (landmarks, world positions, descriptors); all three empty when
    nothing survives the disparity, epipolar, and depth gates.
    """
    left_sel, left_res = select_features(left, cfg.anms_n)
    right_sel, _ = select_features(right, cfg.anms_n)
    matches = match_descriptors(
        left_sel.descriptors, right_sel.descriptors, cfg.ratio, cfg.mutual
    )
    if len(matches) == 0:
        return (), np.zeros((0, 3)), np.zeros((0, left.descriptor_dim), np.float32)
    positions_cam, valid = triangulate_matches(
        rig,
        left_sel.xy[matches.query_indices],
        right_sel.xy[matches.train_indices],
        epipolar_tolerance=cfg.epipolar_tolerance,
    )
    source = left_res.selected[matches.query_indices[valid]]
    landmarks = [
        Landmark.from_camera_point(p, source_keypoint=int(s))
        for p, s in zip(positions_cam, source)
    ]
    kept_rows = [i for i, lm in enumerate(landmarks) if lm.depth <= cfg.max_depth]
    kept = depth_filter(landmarks, cfg.max_depth)
    descriptors = left_sel.descriptors[matches.query_indices[valid][kept_rows]]
    world = pose.transform(np.stack([lm.position for lm in kept])) if kept else np.zeros((0, 3))
    return tuple(kept), world, descriptors


def initialize(
    left: FeatureSet,
    right: FeatureSet,
    rig: CameraRig,
    cfg: PipelineConfig | None = None,
    pose: PoseSE3 | None = None,
    frame_index: int = 0,
) -> TrackingState:
    """Build the initial landmark set from the first stereo pair.

    The pose defaults to the identity; raises InitializationError when fewer
    than cfg.ransac.min_inliers landmarks survive.
    """
    cfg = cfg or PipelineConfig()
    pose = pose or PoseSE3.identity()
    landmarks, world, descriptors = _build_landmarks(left, right, rig, cfg, pose)
    if len(landmarks) < cfg.ransac.min_inliers:
        raise InitializationError(
            f"frame {frame_index}: only {len(landmarks)} stereo landmarks, "
            f"need >= {cfg.ransac.min_inliers}"
        )
    return TrackingState(
        pose=pose,
        landmarks=landmarks,
        landmark_positions_world=world,
        landmark_descriptors=descriptors,
        frame_index=frame_index,
        last_keyframe_index=frame_index,
        status=TrackingStatus.OK,
        n_matches=len(landmarks),
        n_inliers=len(landmarks),
        is_keyframe=True,
    )


def process_frame(
    state: TrackingState,
    left: FeatureSet,
    right: FeatureSet,
    rig: CameraRig,
    cfg: PipelineConfig | None = None,
    rng=None,
) -> TrackingState:
    """Track one stereo frame and return the updated state.

    A failed pose estimate yields status LOST with the pose held; a LOST
    tracker attempts re-initialization at the held pose.
    """
    cfg = cfg or PipelineConfig()
    frame_index = state.frame_index + 1

    if state.status is TrackingStatus.LOST:
        try:
            return initialize(left, right, rig, cfg, pose=state.pose, frame_index=frame_index)
        except InitializationError:
            return state.held(frame_index)

    left_sel, _ = select_features(left, cfg.anms_n)
    matches = match_descriptors(
        left_sel.descriptors, state.landmark_descriptors, cfg.ratio, cfg.mutual
    )
    if len(matches) < 4:
        return state.held(frame_index, n_matches=len(matches))
    try:
        pose, inlier_mask = ransac_pnp(
            (
                state.landmark_positions_world[matches.train_indices],
                left_sel.xy[matches.query_indices],
            ),
            rig,
            cfg.ransac,
            rng=rng,
        )
    except (TrackingFailureError, InsufficientDataError):
        return state.held(frame_index, n_matches=len(matches))

    n_inliers = int(inlier_mask.sum())
    need_keyframe = (
        n_inliers < cfg.keyframe_min_tracked
        or frame_index - state.last_keyframe_index > cfg.keyframe_max_gap
    )
    landmarks = state.landmarks
    world = state.landmark_positions_world
    descriptors = state.landmark_descriptors
    last_kf = state.last_keyframe_index
    is_keyframe = False
    if need_keyframe:
        new_landmarks, new_world, new_desc = _build_landmarks(left, right, rig, cfg, pose)
        if len(new_landmarks) >= cfg.ransac.min_inliers:
            landmarks, world, descriptors = new_landmarks, new_world, new_desc
            last_kf = frame_index
            is_keyframe = True
        else:
            log.warning(
                "frame %d: keyframe wanted but only %d stereo landmarks; keeping old map",
                frame_index, len(new_landmarks),
            )
    return TrackingState(
        pose=pose,
        landmarks=landmarks,
        landmark_positions_world=world,
        landmark_descriptors=descriptors,
        frame_index=frame_index,
        last_keyframe_index=last_kf,
        status=TrackingStatus.OK,
        n_matches=len(matches),
        n_inliers=n_inliers,
        is_keyframe=is_keyframe,
    )


@dataclass(frozen=True)
class FrameSummary:
    frame_index: int
    status: str
    n_matches: int
    n_inliers: int
    is_keyframe: bool
    elapsed_s: float


@dataclass(frozen=True)
class RunResult:
    trajectory: Trajectory
    summaries: tuple[FrameSummary, ...]

    @property
    def n_lost(self) -> int:
        return sum(1 for s in self.summaries if s.status == TrackingStatus.LOST.value)

    @property
    def mean_inliers(self) -> float:
        return float(np.mean([s.n_inliers for s in self.summaries])) if self.summaries else 0.0

    @property
    def mean_elapsed_s(self) -> float:
        return float(np.mean([s.elapsed_s for s in self.summaries])) if self.summaries else 0.0


def run_sequence(
    frames, rig: CameraRig, cfg: PipelineConfig | None = None, seed: int = 0
) -> RunResult:
    """Track a stream of (left, right) stereo FeatureSet pairs.

    One pose per frame, camera-to-world; LOST frames hold the last OK pose
    and are flagged in the per-frame summaries. Deterministic for a fixed
    (config, seed): every frame draws from its own child generator.
    """
    cfg = cfg or PipelineConfig()
    state = None
    entries = []
    summaries = []
    for i, (left, right) in enumerate(frames):
        start = time.perf_counter()
        if state is None:
            state = initialize(left, right, rig, cfg, frame_index=i)
        else:
            state = process_frame(
                state, left, right, rig, cfg, rng=np.random.default_rng([seed, i])
            )
        entries.append(TrajectoryEntry(frame_index=i, pose=state.pose))
        summaries.append(
            FrameSummary(
                frame_index=i,
                status=state.status.value,
                n_matches=state.n_matches,
                n_inliers=state.n_inliers,
                is_keyframe=state.is_keyframe,
                elapsed_s=time.perf_counter() - start,
            )
        )
    if state is None:
        raise ValidationError("empty frame stream")
    return RunResult(trajectory=Trajectory(tuple(entries)), summaries=tuple(summaries))
