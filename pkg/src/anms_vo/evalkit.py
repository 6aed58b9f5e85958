"""Trajectory evaluation: ATE, RPE, and KITTI-style segment errors.

Association uses frame indices unless both trajectories carry timestamps, in
which case poses pair by nearest timestamp within 10 ms. Segment errors
follow the KITTI benchmark conventions: start frames every 10 frames,
segment lengths 100..800 m, the end frame being the first whose cumulative
ground-truth path length reaches the nominal length, and errors normalized
by that nominal length.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .core import PoseSE3, Trajectory, TrajectoryEntry, compose, inverse, rotation_angle
from .errors import AssociationError, InsufficientDataError

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
SEGMENT_STEP = 10
TIMESTAMP_TOLERANCE = 0.010  # seconds


def associate(est: Trajectory, gt: Trajectory):
    """Paired (est_indices, gt_indices) into the two entry tuples."""
    if len(est) == 0 or len(gt) == 0:
        raise AssociationError("cannot associate an empty trajectory")
    if est.has_timestamps and gt.has_timestamps:
        ts_est, ts_gt = est.timestamps, gt.timestamps
        order = np.argsort(ts_gt, kind="stable")
        ts_gt_sorted = ts_gt[order]
        pairs = []
        used = set()
        for i, t in enumerate(ts_est):
            k = int(np.searchsorted(ts_gt_sorted, t))
            best, best_dt = None, TIMESTAMP_TOLERANCE
            for j in (k - 1, k):
                if 0 <= j < len(ts_gt_sorted):
                    dt = abs(ts_gt_sorted[j] - t)
                    if dt <= best_dt:
                        best, best_dt = int(order[j]), dt
            if best is not None and best not in used:
                used.add(best)
                pairs.append((i, best))
        if not pairs:
            raise AssociationError(
                f"no pose pairs within {TIMESTAMP_TOLERANCE * 1e3:.0f} ms"
            )
        a, b = zip(*pairs)
        return np.array(a, dtype=np.intp), np.array(b, dtype=np.intp)
    est_frames = est.frame_indices
    gt_frames = gt.frame_indices
    common, ia, ib = np.intersect1d(est_frames, gt_frames, return_indices=True)
    if len(common) == 0:
        raise AssociationError("trajectories share no frame indices")
    return ia.astype(np.intp), ib.astype(np.intp)


# ---------------------------------------------------------------------------
# absolute trajectory error


@dataclass(frozen=True)
class AteReport:
    rmse: float
    residuals: np.ndarray
    alignment: PoseSE3
    n_pairs: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.residuals)
        arr.flags.writeable = False
        object.__setattr__(self, "residuals", arr)


def umeyama_alignment(source: np.ndarray, target: np.ndarray) -> PoseSE3:
    """Least-squares rigid transform (no scale) with R src + t ~ target."""
    mu_s, mu_t = source.mean(axis=0), target.mean(axis=0)
    cov = (target - mu_t).T @ (source - mu_s) / len(source)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    return PoseSE3(rot, mu_t - rot @ mu_s)


def ate_rmse(est: Trajectory, gt: Trajectory, align: str = "rigid") -> AteReport:
    """RMSE of translation residuals, optionally after rigid alignment."""
    if align not in ("none", "rigid"):
        raise ValueError(f"align must be 'none' or 'rigid', got {align!r}")
    ia, ib = associate(est, gt)
    p_est = est.positions()[ia]
    p_gt = gt.positions()[ib]
    if align == "rigid":
        if len(ia) < 3:
            raise InsufficientDataError(
                f"rigid alignment needs >= 3 pose pairs, got {len(ia)}"
            )
        transform = umeyama_alignment(p_est, p_gt)
        p_est = transform.transform(p_est)
    else:
        transform = PoseSE3.identity()
    residuals = np.linalg.norm(p_est - p_gt, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(residuals**2))),
        residuals=residuals,
        alignment=transform,
        n_pairs=len(ia),
    )


# ---------------------------------------------------------------------------
# relative pose error


@dataclass(frozen=True)
class RpeReport:
    delta: int
    residuals: np.ndarray
    rmse: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.residuals)
        arr.flags.writeable = False
        object.__setattr__(self, "residuals", arr)


def rpe(est: Trajectory, gt: Trajectory, delta: int = 1) -> RpeReport:
    """Translational relative pose error over a fixed frame interval."""
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    ia, ib = associate(est, gt)
    if len(ia) < delta + 1:
        raise InsufficientDataError(
            f"need >= {delta + 1} associated poses for delta={delta}, got {len(ia)}"
        )
    est_poses = [est.entries[i].pose for i in ia]
    gt_poses = [gt.entries[i].pose for i in ib]
    residuals = []
    for i in range(len(ia) - delta):
        rel_gt = compose(inverse(gt_poses[i]), gt_poses[i + delta])
        rel_est = compose(inverse(est_poses[i]), est_poses[i + delta])
        err = compose(inverse(rel_gt), rel_est)
        residuals.append(np.linalg.norm(err.translation))
    residuals = np.array(residuals)
    return RpeReport(delta=delta, residuals=residuals, rmse=float(np.sqrt(np.mean(residuals**2))))


# ---------------------------------------------------------------------------
# KITTI segment errors


@dataclass(frozen=True)
class SegmentError:
    start_frame: int
    length: float
    translational_pct: float
    rotational_deg_per_m: float


@dataclass(frozen=True)
class SegmentErrorReport:
    segments: tuple[SegmentError, ...]
    lengths: tuple[float, ...]
    status: str = "ok"  # "ok" or "path-too-short"
    avg_translational_pct: float = field(init=False)
    avg_rotational_deg_per_m: float = field(init=False)

    def __post_init__(self):
        t = [s.translational_pct for s in self.segments]
        r = [s.rotational_deg_per_m for s in self.segments]
        object.__setattr__(self, "avg_translational_pct", float(np.mean(t)) if t else np.nan)
        object.__setattr__(self, "avg_rotational_deg_per_m", float(np.mean(r)) if r else np.nan)

    def by_length(self) -> dict[float, tuple[float, float]]:
        """length -> (mean translational %, mean rotational deg/m)."""
        out = {}
        for length in self.lengths:
            rows = [s for s in self.segments if s.length == length]
            if rows:
                out[length] = (
                    float(np.mean([s.translational_pct for s in rows])),
                    float(np.mean([s.rotational_deg_per_m for s in rows])),
                )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("start_frame,length_m,translational_pct,rotational_deg_per_m\n")
        for s in self.segments:
            buf.write(
                f"{s.start_frame},{s.length:.9g},{s.translational_pct:.9g},"
                f"{s.rotational_deg_per_m:.9g}\n"
            )
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"{'length [m]':>10}  {'trans [%]':>10}  {'rot [deg/m]':>12}"]
        for length, (t, r) in self.by_length().items():
            lines.append(f"{length:>10.0f}  {t:>10.4f}  {r:>12.6f}")
        lines.append(
            f"{'average':>10}  {self.avg_translational_pct:>10.4f}  "
            f"{self.avg_rotational_deg_per_m:>12.6f}"
        )
        if self.status != "ok":
            lines.append(f"status: {self.status}")
        return "\n".join(lines)


def kitti_segment_errors(
    est: Trajectory,
    gt: Trajectory,
    lengths: tuple[float, ...] = SEGMENT_LENGTHS,
    step: int = SEGMENT_STEP,
) -> SegmentErrorReport:
    """Per-segment translational (%) and rotational (deg/m) errors.

    A ground-truth path shorter than the smallest segment length yields an
    empty report flagged "path-too-short" rather than an error.
    """
    ia, ib = associate(est, gt)
    est_poses = [est.entries[i].pose for i in ia]
    gt_poses = [gt.entries[i].pose for i in ib]
    gt_frames = [gt.entries[i].frame_index for i in ib]
    pos = np.stack([p.translation for p in gt_poses])
    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    dist = np.concatenate([[0.0], np.cumsum(seg)])

    if dist[-1] < min(lengths):
        return SegmentErrorReport(segments=(), lengths=tuple(lengths), status="path-too-short")

    segments = []
    n = len(gt_poses)
    for start in range(0, n, step):
        for length in lengths:
            target = dist[start] + length
            end = int(np.searchsorted(dist, target))  # first index with dist >= target
            if end >= n:
                continue
            rel_gt = compose(inverse(gt_poses[start]), gt_poses[end])
            rel_est = compose(inverse(est_poses[start]), est_poses[end])
            err = compose(inverse(rel_gt), rel_est)
            segments.append(
                SegmentError(
                    start_frame=int(gt_frames[start]),
                    length=length,
                    translational_pct=float(np.linalg.norm(err.translation)) / length * 100.0,
                    rotational_deg_per_m=float(np.degrees(rotation_angle(err.rotation))) / length,
                )
            )
    return SegmentErrorReport(segments=tuple(segments), lengths=tuple(lengths))


# ---------------------------------------------------------------------------
# planar projection


def yaw_of(rotation: np.ndarray) -> float:
    """Heading of the camera's forward (z) axis in the XZ plane."""
    fwd = rotation[:, 2]
    return float(np.arctan2(fwd[0], fwd[2]))


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def project_xz(traj: Trajectory) -> Trajectory:
    """Planar reduction: y set to zero, rotations reduced to yaw only.

    This is the interpretation used for "2D" error variants and XZ plots; it
    is a projection choice, not a benchmark definition.
    """
    entries = tuple(
        TrajectoryEntry(
            frame_index=e.frame_index,
            pose=PoseSE3(
                yaw_rotation(yaw_of(e.pose.rotation)),
                np.array([e.pose.translation[0], 0.0, e.pose.translation[2]]),
            ),
            timestamp=e.timestamp,
        )
        for e in traj
    )
    return Trajectory(entries)
