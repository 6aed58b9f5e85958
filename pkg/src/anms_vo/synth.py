"""Synthetic scenes with exact ground truth for testing the geometry stack.

Scenes pair a camera trajectory (line, circle, or figure-eight) with a cloud
of landmarks placed so that every landmark is visible, at depths between 2
and 50 meters, from at least 80% of the poses. Landmark descriptors are
fixed random unit vectors, pairwise far apart, which makes descriptor
matching exactly solvable and isolates geometric error from matching error.

Rendering projects the landmarks through both cameras of the rig, adds
configurable pixel noise, and optionally swaps descriptors between a random
subset of keypoints (the configured outlier rate) -- a swap survives the
ratio test by construction, making it the hardest outlier for the matcher.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .core import CameraRig, FeatureSet, PoseSE3, Trajectory, TrajectoryEntry
from .dataio import write_kitti_calib, write_trajectory
from .detector import save_features
from .errors import GenerationError, ValidationError

DEPTH_RANGE = (2.0, 50.0)
VISIBILITY_FRACTION = 0.8
MIN_RENDER_DEPTH = 0.5
_MIN_DESCRIPTOR_GAP = 0.5

DEFAULT_RIG = CameraRig(
    fx=718.856, fy=718.856, cx=607.1928, cy=185.2157,
    baseline=0.5372, width=1241, height=376,
)


@dataclass(frozen=True)
class SyntheticScene:
    landmarks: np.ndarray
    descriptors: np.ndarray
    rig: CameraRig
    trajectory: Trajectory
    seed: int
    noise: float
    outlier_rate: float

    def __post_init__(self):
        lm = np.ascontiguousarray(np.asarray(self.landmarks, dtype=np.float64))
        desc = np.ascontiguousarray(np.asarray(self.descriptors, dtype=np.float32))
        if len(lm) != len(desc):
            raise ValidationError("landmark/descriptor count mismatch")
        if len(desc) > 1 and pdist(desc.astype(np.float64)).min() <= _MIN_DESCRIPTOR_GAP:
            raise ValidationError("landmark descriptors are not pairwise distinct enough")
        for name, arr in (("landmarks", lm), ("descriptors", desc)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_landmarks(self) -> int:
        return len(self.landmarks)


def _look_at(position: np.ndarray, target: np.ndarray) -> PoseSE3:
    """Camera-to-world pose at `position` with +z toward `target`, +y down."""
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    down = np.array([0.0, 1.0, 0.0])
    right = np.cross(down, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.column_stack([right, down, forward])
    return PoseSE3(rot, position)


def _trajectory(shape: str, n_frames: int, line_length, circle_radius, figure8_halfwidth,
                figure8_target_distance) -> tuple[Trajectory, np.ndarray]:
    """Ground-truth trajectory plus the look target used for placement."""
    entries = []
    if shape == "line":
        step = line_length / max(n_frames - 1, 1)
        for i in range(n_frames):
            entries.append(
                TrajectoryEntry(i, PoseSE3(np.eye(3), np.array([0.0, 0.0, step * i])))
            )
        target = np.array([0.0, 0.0, line_length + 8.0])
    elif shape == "circle":
        target = np.zeros(3)
        for i in range(n_frames):
            theta = 2.0 * np.pi * i / n_frames
            pos = np.array([circle_radius * np.sin(theta), 0.0, circle_radius * np.cos(theta)])
            entries.append(TrajectoryEntry(i, _look_at(pos, target)))
    elif shape == "figure8":
        target = np.array([0.0, 0.0, figure8_target_distance])
        for i in range(n_frames):
            t = 2.0 * np.pi * i / n_frames
            pos = np.array(
                [figure8_halfwidth * np.cos(t), 0.0, figure8_halfwidth * np.sin(t) * np.cos(t)]
            )
            entries.append(TrajectoryEntry(i, _look_at(pos, target)))
    else:
        raise ValidationError(f"unknown trajectory shape {shape!r}")
    return Trajectory(tuple(entries)), target


def _visibility_matrix(rig: CameraRig, trajectory: Trajectory, landmarks: np.ndarray) -> np.ndarray:
    """(n_frames, n_landmarks) render-visibility: both cameras, depth in range."""
    vis = np.zeros((len(trajectory), len(landmarks)), dtype=bool)
    for k, entry in enumerate(trajectory):
        vis[k] = _frame_visibility(rig, entry.pose, landmarks)
    return vis


def _frame_visibility(rig: CameraRig, pose: PoseSE3, landmarks: np.ndarray) -> np.ndarray:
    cam = (landmarks - pose.translation) @ pose.rotation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ul = rig.fx * cam[:, 0] / z + rig.cx
        v = rig.fy * cam[:, 1] / z + rig.cy
        ur = rig.fx * (cam[:, 0] - rig.baseline) / z + rig.cx
    ok = z > MIN_RENDER_DEPTH
    for u in (ul, ur):
        ok &= (u >= 0) & (u < rig.width)
    ok &= (v >= 0) & (v < rig.height)
    return ok


def _sample_landmarks(rng, shape, n, rig, line_length, circle_radius, figure8_halfwidth, target):
    if shape == "line":
        # deepest placement that still gives depth >= 2 m over the first 80%
        # of travel; the shallow end keeps landmarks inside a 20 m map cutoff
        # for the early keyframes
        z_floor = VISIBILITY_FRACTION * line_length + DEPTH_RANGE[0]
        z = rng.uniform(z_floor, min(line_length + 14.0, DEPTH_RANGE[1] - 2.0), n)
        near = z - VISIBILITY_FRACTION * line_length
        half_w = 0.8 * min(rig.cx, rig.width - 1 - rig.cx) / rig.fx
        half_h = 0.8 * min(rig.cy, rig.height - 1 - rig.cy) / rig.fy
        x = rng.uniform(-1.0, 1.0, n) * half_w * near
        y = rng.uniform(-1.0, 1.0, n) * half_h * near
        return np.stack([x, y, z], axis=1)
    if shape == "circle":
        rho = 0.35 * circle_radius
        min_depth = circle_radius - rho
        half_h = 0.8 * min(rig.cy, rig.height - 1 - rig.cy) / rig.fy
        ang = rng.uniform(0.0, 2.0 * np.pi, n)
        rad = rho * np.sqrt(rng.uniform(0.0, 1.0, n))
        x = rad * np.cos(ang)
        z = rad * np.sin(ang)
        y = rng.uniform(-1.0, 1.0, n) * min(half_h * min_depth, rho)
        return np.stack([x, y, z], axis=1)
    # figure8: cluster around the fixed look target
    rho = 0.25 * (np.linalg.norm(target) - figure8_halfwidth)
    min_depth = np.linalg.norm(target) - figure8_halfwidth - rho
    half_h = 0.8 * min(rig.cy, rig.height - 1 - rig.cy) / rig.fy
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    rad = rho * np.sqrt(rng.uniform(0.0, 1.0, n))
    x = target[0] + rad * np.cos(ang)
    z = target[2] + rad * np.sin(ang)
    y = rng.uniform(-1.0, 1.0, n) * min(half_h * min_depth, rho)
    return np.stack([x, y, z], axis=1)


def _unit_descriptors(rng, n: int, dim: int) -> np.ndarray:
    for _ in range(20):
        desc = rng.normal(size=(n, dim))
        desc /= np.linalg.norm(desc, axis=1, keepdims=True)
        if n < 2 or pdist(desc).min() > _MIN_DESCRIPTOR_GAP:
            return desc.astype(np.float32)
    raise GenerationError("could not draw pairwise-distinct descriptors")


def generate_scene(
    n_landmarks: int,
    traj_shape: str = "circle",
    noise: float = 0.0,
    outlier_rate: float = 0.0,
    seed: int = 0,
    n_frames: int = 100,
    descriptor_dim: int = 256,
    rig: CameraRig | None = None,
    line_length: float = 12.0,
    circle_radius: float = 15.0,
    figure8_halfwidth: float = 6.0,
    figure8_target_distance: float = 20.0,
) -> SyntheticScene:
    """Deterministic synthetic scene for a given seed.

    Every landmark must be visible from at least 80% of the poses at depths
    between 2 and 50 m; landmarks violating this are resampled, and a
    GenerationError is raised when the constraints cannot be met.
    """
    if n_landmarks < 50:
        raise ValidationError(f"need at least 50 landmarks, got {n_landmarks}")
    if not (0.0 <= outlier_rate < 1.0):
        raise ValidationError(f"outlier_rate must be in [0, 1), got {outlier_rate}")
    rig = rig or DEFAULT_RIG
    rng = np.random.default_rng([seed, 0x5CE7E])
    trajectory, target = _trajectory(
        traj_shape, n_frames, line_length, circle_radius, figure8_halfwidth,
        figure8_target_distance,
    )

    landmarks = _sample_landmarks(
        rng, traj_shape, n_landmarks, rig, line_length, circle_radius,
        figure8_halfwidth, target,
    )
    poses = [e.pose for e in trajectory]
    centers = np.stack([p.translation for p in poses])
    for _ in range(60):
        # a pose "sees" a landmark when it renders in both cameras AND lies
        # in the generation depth window
        seen = np.zeros((len(poses), n_landmarks), dtype=bool)
        for k, pose in enumerate(poses):
            cam_z = (landmarks - centers[k]) @ pose.rotation[:, 2]
            seen[k] = (
                _frame_visibility(rig, pose, landmarks)
                & (cam_z >= DEPTH_RANGE[0])
                & (cam_z <= DEPTH_RANGE[1])
            )
        bad = seen.mean(axis=0) < VISIBILITY_FRACTION
        if not bad.any():
            break
        landmarks = landmarks.copy()
        landmarks[bad] = _sample_landmarks(
            rng, traj_shape, int(bad.sum()), rig, line_length, circle_radius,
            figure8_halfwidth, target,
        )
    else:
        raise GenerationError(
            f"could not place {int(bad.sum())} landmarks visible from "
            f">= {VISIBILITY_FRACTION:.0%} of poses at depths {DEPTH_RANGE}"
        )

    return SyntheticScene(
        landmarks=landmarks,
        descriptors=_unit_descriptors(rng, n_landmarks, descriptor_dim),
        rig=rig,
        trajectory=trajectory,
        seed=seed,
        noise=noise,
        outlier_rate=outlier_rate,
    )


def render_frame(scene: SyntheticScene, frame_index: int):
    """(left FeatureSet, right FeatureSet, visibility map) for one frame.

    The visibility map is indexed by landmark id; both feature sets list the
    visible landmarks in ascending id order (row k corresponds to landmark
    `np.flatnonzero(visibility)[k]`). Deterministic per (scene seed,
    frame_index), independent of call order.
    """
    entry = scene.trajectory.entries[frame_index]
    rig = scene.rig
    visibility = _frame_visibility(rig, entry.pose, scene.landmarks)
    ids = np.flatnonzero(visibility)
    cam = (scene.landmarks[ids] - entry.pose.translation) @ entry.pose.rotation
    z = cam[:, 2]
    left = np.stack([rig.fx * cam[:, 0] / z + rig.cx, rig.fy * cam[:, 1] / z + rig.cy], axis=1)
    right = np.stack(
        [rig.fx * (cam[:, 0] - rig.baseline) / z + rig.cx, rig.fy * cam[:, 1] / z + rig.cy],
        axis=1,
    )

    rng = np.random.default_rng([scene.seed, 1 + frame_index])
    k = len(ids)
    left = left + rng.normal(scale=scene.noise, size=(k, 2)) if scene.noise else left
    right = right + rng.normal(scale=scene.noise, size=(k, 2)) if scene.noise else right
    left = np.clip(left, 0.0, [rig.width - 1e-3, rig.height - 1e-3])
    right = np.clip(right, 0.0, [rig.width - 1e-3, rig.height - 1e-3])
    scores_left = rng.uniform(0.1, 1.0, k)
    scores_right = rng.uniform(0.1, 1.0, k)

    descriptors = scene.descriptors[ids]
    n_out = int(round(scene.outlier_rate * k))
    if n_out >= 2:
        chosen = rng.choice(k, size=n_out, replace=False)
        descriptors = descriptors.copy()
        descriptors[chosen] = descriptors[np.roll(chosen, 1)]

    def build(xy, scores, side):
        return FeatureSet(
            image_id=f"{frame_index:06d}_{side}",
            width=rig.width,
            height=rig.height,
            xy=xy,
            scores=scores,
            descriptors=descriptors,
            normalized=True,
        )

    return build(left, scores_left, "left"), build(right, scores_right, "right"), visibility


def render_all(scene: SyntheticScene):
    """Stereo pair stream over the whole trajectory (visibility dropped)."""
    for i in range(len(scene.trajectory)):
        left, right, _ = render_frame(scene, i)
        yield left, right


def dump_scene(scene: SyntheticScene, directory) -> Path:
    """Write the rendered dataset: calib.txt, poses.txt, per-frame SPFT files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_kitti_calib(scene.rig, directory / "calib.txt")
    write_trajectory(scene.trajectory, directory / "poses.txt", "kitti")
    for i in range(len(scene.trajectory)):
        left, right, _ = render_frame(scene, i)
        save_features(left, directory / f"{i:06d}_left.spft")
        save_features(right, directory / f"{i:06d}_right.spft")
    return directory
