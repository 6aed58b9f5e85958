"""Shared domain types: keypoints, feature sets, camera rigs, SE(3) poses.

All types are immutable after construction (array fields are copied and
marked read-only) and safe to share between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ROTATION_TOL = 1e-9


def _frozen_array(values, dtype, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"expected array of shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Keypoint:
    """A detected interest point: pixel location and detector response."""

    x: float
    y: float
    score: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.score)):
            raise ValidationError(f"keypoint fields must be finite: {self}")
        if self.x < 0 or self.y < 0:
            raise ValidationError(f"keypoint coordinates must be non-negative: {self}")


@dataclass(frozen=True)
class FeatureSet:
    """Keypoints plus descriptors detected in a single image.

    `xy` is (n, 2) float64 pixel coordinates, `scores` (n,) float64, and
    `descriptors` (n, d) float32 (the on-disk precision). When `normalized`
    is set, every descriptor row must have unit L2 norm within 1e-3.
    """

    image_id: str
    width: int
    height: int
    xy: np.ndarray
    scores: np.ndarray
    descriptors: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        xy = np.atleast_2d(np.asarray(self.xy, dtype=np.float64))
        if xy.size == 0:
            xy = xy.reshape(0, 2)
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        desc = np.atleast_2d(np.asarray(self.descriptors, dtype=np.float32))
        n = xy.shape[0]
        if xy.shape != (n, 2):
            raise ValidationError(f"xy must be (n, 2), got {xy.shape}")
        if scores.shape != (n,):
            raise ValidationError(f"scores must be ({n},), got {scores.shape}")
        if desc.shape[0] != n:
            raise ValidationError(
                f"descriptor count {desc.shape[0]} != keypoint count {n}"
            )
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image size must be positive, got {self.width}x{self.height}")
        if n:
            if not np.all(np.isfinite(xy)) or not np.all(np.isfinite(scores)):
                raise ValidationError("keypoint coordinates and scores must be finite")
            if xy.min() < 0 or xy[:, 0].max() >= self.width or xy[:, 1].max() >= self.height:
                raise ValidationError(
                    f"keypoints outside image bounds {self.width}x{self.height}"
                )
        if not np.all(np.isfinite(desc)):
            raise ValidationError("descriptors must be finite")
        if self.normalized and n:
            norms = np.linalg.norm(desc.astype(np.float64), axis=1)
            if np.abs(norms - 1.0).max() > 1e-3:
                raise ValidationError("descriptors flagged normalized but not unit norm")
        for name, arr in (("xy", xy), ("scores", scores), ("descriptors", desc)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def descriptor_dim(self) -> int:
        return self.descriptors.shape[1]

    def keypoint(self, i: int) -> Keypoint:
        return Keypoint(float(self.xy[i, 0]), float(self.xy[i, 1]), float(self.scores[i]))

    @property
    def keypoints(self) -> list[Keypoint]:
        return [self.keypoint(i) for i in range(len(self))]

    def subset(self, indices, image_id: str | None = None) -> "FeatureSet":
        """New FeatureSet restricted to `indices`, order preserved as given."""
        idx = np.asarray(indices, dtype=np.intp)
        return FeatureSet(
            image_id=image_id if image_id is not None else self.image_id,
            width=self.width,
            height=self.height,
            xy=self.xy[idx],
            scores=self.scores[idx],
            descriptors=self.descriptors[idx],
            normalized=self.normalized,
        )


@dataclass(frozen=True)
class CameraRig:
    """Rectified stereo intrinsics and baseline (both cameras share K)."""

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if self.baseline <= 0:
            raise ValidationError(f"baseline must be positive: {self.baseline}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )


def _so3_project(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def _rotation_drift(r: np.ndarray) -> float:
    return float(max(np.abs(r.T @ r - np.eye(3)).max(), abs(np.linalg.det(r) - 1.0)))


@dataclass(frozen=True)
class PoseSE3:
    """Rigid camera-to-world transform T_wc: x_world = R x_cam + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValidationError(f"bad pose shapes: R {r.shape}, t {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValidationError("pose entries must be finite")
        if _rotation_drift(r) > ROTATION_TOL:
            raise ValidationError("rotation is not orthonormal within 1e-9")
        for name, arr in (("rotation", r), ("translation", t)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray, reorthonormalize: bool = False) -> "PoseSE3":
        m = np.asarray(m, dtype=np.float64)
        r = m[:3, :3]
        if reorthonormalize and _rotation_drift(r) > ROTATION_TOL:
            r = _so3_project(r)
        return cls(r, m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply the transform to (n, 3) or (3,) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


def compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Group product a . b, re-orthonormalized if numerical drift exceeds 1e-9."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    if _rotation_drift(r) > ROTATION_TOL:
        r = _so3_project(r)
    return PoseSE3(r, t)


def inverse(t: PoseSE3) -> PoseSE3:
    rt = t.rotation.T
    return PoseSE3(rt, -rt @ t.translation)


def rotation_from_axis_angle(w: np.ndarray) -> np.ndarray:
    """Rodrigues' formula; series expansion near zero angle."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta2 = float(w @ w)
    theta = np.sqrt(theta2)
    k = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < 1e-6:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * k + b * (k @ k)


def rotation_angle(r: np.ndarray) -> float:
    """Rotation angle in radians; accurate for small angles."""
    r = np.asarray(r, dtype=np.float64)
    s_vec = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = float(np.linalg.norm(s_vec))
    c = (float(np.trace(r)) - 1.0) / 2.0
    return float(np.arctan2(s, c))


def axis_angle_from_rotation(r: np.ndarray) -> np.ndarray:
    """Inverse of rotation_from_axis_angle; handles angles up to and including pi."""
    r = np.asarray(r, dtype=np.float64)
    s_vec = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = float(np.linalg.norm(s_vec))
    c = (float(np.trace(r)) - 1.0) / 2.0
    theta = float(np.arctan2(s, c))
    if s > 1e-10:
        return s_vec * (theta / s)
    if c > 0.0:
        # theta ~ 0: s_vec already equals theta * axis to third order
        return s_vec
    # theta ~ pi: recover axis from the diagonal of (R + I) / 2
    diag = np.clip((np.diag(r) + 1.0) / 2.0, 0.0, None)
    axis = np.sqrt(diag)
    k = int(np.argmax(axis))
    if axis[k] > 0:
        # fix relative signs from the off-diagonal terms of R + I
        b = (r + np.eye(3)) / 2.0
        axis = b[:, k] / axis[k]
        axis = axis / np.linalg.norm(axis)
    return axis * theta


@dataclass(frozen=True)
class TrajectoryEntry:
    frame_index: int
    pose: PoseSE3
    timestamp: float | None = None


@dataclass(frozen=True)
class Trajectory:
    """Timestamped pose sequence with strictly increasing frame indices."""

    entries: tuple[TrajectoryEntry, ...]
    _index_map: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        indices = [e.frame_index for e in entries]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValidationError("trajectory frame indices must be strictly increasing")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_index_map", {fi: i for i, fi in enumerate(indices)})

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def frame_indices(self) -> np.ndarray:
        return np.array([e.frame_index for e in self.entries], dtype=np.int64)

    @property
    def has_timestamps(self) -> bool:
        return len(self.entries) > 0 and all(e.timestamp is not None for e in self.entries)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array(
            [np.nan if e.timestamp is None else e.timestamp for e in self.entries]
        )

    def positions(self) -> np.ndarray:
        """(n, 3) array of camera centers."""
        if not self.entries:
            return np.zeros((0, 3))
        return np.stack([e.pose.translation for e in self.entries])

    def pose_at(self, frame_index: int) -> PoseSE3:
        return self.entries[self._index_map[frame_index]].pose

    def __contains__(self, frame_index: int) -> bool:
        return frame_index in self._index_map


def path_length(traj: Trajectory) -> float:
    """Total travelled distance along the trajectory's camera centers."""
    pos = traj.positions()
    if len(pos) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())
