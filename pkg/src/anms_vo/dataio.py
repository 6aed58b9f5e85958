"""Dataset and trajectory file handling: KITTI calibration and pose files,
TUM-style timestamped trajectories, and stereo SPFT feature directories.

KITTI pose lines are row-major 3x4 camera-to-world transforms of the left
camera; text output uses 9 significant digits throughout.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

from .core import CameraRig, PoseSE3, Trajectory, TrajectoryEntry, _rotation_drift, _so3_project
from .detector import load_features
from .errors import FormatError, PairingError, ValidationError

log = logging.getLogger(__name__)

_FEATURE_NAME = re.compile(r"^(\d{6})_(left|right)\.spft$")


# ---------------------------------------------------------------------------
# KITTI calibration


def parse_kitti_calib_text(
    text: str, width: int | None = None, height: int | None = None, path=None
) -> CameraRig:
    """CameraRig from KITTI calib.txt content (P0/P1 projection rows).

    fx, fy, cx, cy come from P0; the baseline is -P1[0,3] / P1[0,0]. KITTI
    odometry calibration files carry no image size, so an optional `S0:
    width height` line is honored and otherwise the size is inferred from
    the principal point (or overridden by the keyword arguments).
    """
    rows: dict[str, list[float]] = {}
    size: tuple[int, int] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        key = key.strip()
        values = rest.split()
        if key in ("P0", "P1"):
            if len(values) != 12:
                raise FormatError(
                    f"{key} needs 12 values, got {len(values)}", path=path, line=lineno
                )
            try:
                rows[key] = [float(v) for v in values]
            except ValueError:
                raise FormatError(f"non-numeric value in {key}", path=path, line=lineno) from None
        elif key == "S0":
            if len(values) != 2:
                raise FormatError("S0 needs 2 values", path=path, line=lineno)
            try:
                size = (int(round(float(values[0]))), int(round(float(values[1]))))
            except ValueError:
                raise FormatError("non-numeric value in S0", path=path, line=lineno) from None
    for key in ("P0", "P1"):
        if key not in rows:
            raise FormatError(f"missing {key} row", path=path, line=None)
    p0 = np.array(rows["P0"]).reshape(3, 4)
    p1 = np.array(rows["P1"]).reshape(3, 4)
    if p1[0, 0] == 0:
        raise FormatError("P1 focal length is zero", path=path, line=None)
    fx, fy = p0[0, 0], p0[1, 1]
    cx, cy = p0[0, 2], p0[1, 2]
    baseline = -p1[0, 3] / p1[0, 0]
    if width is None or height is None:
        if size is not None:
            width, height = size
        else:
            width = int(np.ceil(2 * cx)) + 1
            height = int(np.ceil(2 * cy)) + 1
    return CameraRig(fx=fx, fy=fy, cx=cx, cy=cy, baseline=baseline, width=width, height=height)


def read_kitti_calib(path, width: int | None = None, height: int | None = None) -> CameraRig:
    """CameraRig from a KITTI calib.txt file (see parse_kitti_calib_text)."""
    path = Path(path)
    return parse_kitti_calib_text(
        path.read_text(encoding="utf-8"), width=width, height=height, path=path
    )


def write_kitti_calib(rig: CameraRig, path) -> None:
    p0 = np.zeros((3, 4))
    p0[0, 0], p0[1, 1], p0[2, 2] = rig.fx, rig.fy, 1.0
    p0[0, 2], p0[1, 2] = rig.cx, rig.cy
    p1 = p0.copy()
    # nudge the encoded product so the reader's -P1[0,3]/fx division recovers
    # the baseline bit-exactly; when the quotient granularity is coarser than
    # one baseline ulp that is impossible and the nearest value (1 ulp) stays
    val = -rig.baseline * rig.fx
    best = val
    for _ in range(4):
        q = -val / rig.fx
        if q == rig.baseline:
            best = val
            break
        if abs(-best / rig.fx - rig.baseline) > abs(q - rig.baseline):
            best = val
        val = np.nextafter(val, -np.inf if q < rig.baseline else np.inf)
    p1[0, 3] = best
    with open(path, "w", encoding="utf-8") as fh:
        for name, mat in (("P0", p0), ("P1", p1)):
            fh.write(name + ": " + " ".join(repr(float(v)) for v in mat.reshape(-1)) + "\n")
        fh.write(f"S0: {rig.width} {rig.height}\n")


# ---------------------------------------------------------------------------
# trajectories


def _parse_kitti_poses(text: str, path=None) -> Trajectory:
    entries = []
    flagged = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 12:
            raise FormatError(
                f"expected 12 values per pose line, got {len(tokens)}",
                path=path, line=lineno,
            )
        try:
            values = np.array([float(t) for t in tokens])
        except ValueError:
            raise FormatError("non-numeric pose value", path=path, line=lineno) from None
        mat = values.reshape(3, 4)
        rot = mat[:, :3]
        if _rotation_drift(rot) > 1e-9:
            rot = _so3_project(rot)
            flagged = True
        try:
            pose = PoseSE3(rot, mat[:, 3])
        except ValidationError as exc:
            raise FormatError(f"invalid pose: {exc}", path=path, line=lineno) from None
        entries.append(TrajectoryEntry(frame_index=len(entries), pose=pose))
    if flagged:
        log.warning("%s: re-orthonormalized rotations with drift > 1e-9", path or "<text>")
    return Trajectory(tuple(entries))


def _parse_tum_trajectory(text: str, path=None) -> Trajectory:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 8:
            raise FormatError(
                f"expected 8 values per line, got {len(tokens)}", path=path, line=lineno
            )
        try:
            ts, tx, ty, tz, qx, qy, qz, qw = (float(t) for t in tokens)
        except ValueError:
            raise FormatError("non-numeric value", path=path, line=lineno) from None
        rot = rotation_from_quaternion(np.array([qx, qy, qz, qw]))
        entries.append(
            TrajectoryEntry(
                frame_index=len(entries),
                pose=PoseSE3(rot, np.array([tx, ty, tz])),
                timestamp=ts,
            )
        )
    return Trajectory(tuple(entries))


def parse_trajectory_text(text: str, fmt: str = "kitti", path=None) -> Trajectory:
    if fmt == "kitti":
        return _parse_kitti_poses(text, path=path)
    if fmt == "tum":
        return _parse_tum_trajectory(text, path=path)
    raise ValidationError(f"unknown trajectory format {fmt!r}")


def read_kitti_poses(path) -> Trajectory:
    """Trajectory from a KITTI pose file (12 reals per line, row-major 3x4).

    Rotations with drift beyond the pose tolerance are re-orthonormalized
    and the file is flagged in the log.
    """
    path = Path(path)
    return _parse_kitti_poses(path.read_text(encoding="utf-8"), path=path)


def read_tum_trajectory(path) -> Trajectory:
    """Trajectory from TUM format: `timestamp tx ty tz qx qy qz qw` lines."""
    path = Path(path)
    return _parse_tum_trajectory(path.read_text(encoding="utf-8"), path=path)


def read_trajectory(path, fmt: str = "kitti") -> Trajectory:
    return parse_trajectory_text(Path(path).read_text(encoding="utf-8"), fmt, path=path)


def format_trajectory_text(traj: Trajectory, fmt: str = "kitti") -> str:
    """Render kitti (12 reals/line) or tum (`ts tx ty tz qx qy qz qw`) text."""
    if fmt not in ("kitti", "tum"):
        raise ValidationError(f"unknown trajectory format {fmt!r}")
    if fmt == "tum" and not traj.has_timestamps:
        raise ValidationError("tum output requires timestamps on every pose")
    lines = []
    for entry in traj:
        if fmt == "kitti":
            mat = np.c_[entry.pose.rotation, entry.pose.translation]
            lines.append(" ".join(f"{v:.9g}" for v in mat.reshape(-1)))
        else:
            q = quaternion_from_rotation(entry.pose.rotation)
            t = entry.pose.translation
            fields = [entry.timestamp, t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
            lines.append(" ".join(f"{v:.9g}" for v in fields))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trajectory(traj: Trajectory, path, fmt: str = "kitti") -> None:
    """Write kitti (12 reals/line) or tum (`ts tx ty tz qx qy qz qw`) text."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trajectory_text(traj, fmt))


# ---------------------------------------------------------------------------
# quaternions (x, y, z, w), scalar-last as in TUM files


def quaternion_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (x, y, z, w) with non-negative w (Shepperd's method)."""
    r = np.asarray(r, dtype=np.float64)
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0:
        s = np.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, 0.25 * s]
        )
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s, (r[2, 1] - r[1, 2]) / s]
        )
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s, (r[0, 2] - r[2, 0]) / s]
        )
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s, (r[1, 0] - r[0, 1]) / s]
        )
    q /= np.linalg.norm(q)
    return -q if q[3] < 0 else q


def rotation_from_quaternion(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise ValidationError("zero quaternion")
    x, y, z, w = q / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# ---------------------------------------------------------------------------
# stereo feature directories


def scan_feature_dir(directory) -> list[tuple[str, Path, Path]]:
    """Validated, ordered (frame, left path, right path) triples.

    Files are named <frame:06>_{left|right}.spft; a frame missing one side
    raises PairingError naming the frame.
    """
    directory = Path(directory)
    frames: dict[str, dict[str, Path]] = {}
    for p in sorted(directory.iterdir()):
        m = _FEATURE_NAME.match(p.name)
        if m:
            frames.setdefault(m.group(1), {})[m.group(2)] = p
    out = []
    for frame in sorted(frames):
        sides = frames[frame]
        for side in ("left", "right"):
            if side not in sides:
                raise PairingError(
                    f"frame {frame} has no {side} feature file in {directory}", frame=frame
                )
        out.append((frame, sides["left"], sides["right"]))
    return out


def read_feature_dir(directory):
    """Ordered stream of (left FeatureSet, right FeatureSet) stereo pairs."""
    for _, left_path, right_path in scan_feature_dir(directory):
        yield load_features(left_path), load_features(right_path)
