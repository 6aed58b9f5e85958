"""Stereo triangulation, P3P, RANSAC pose estimation, Gauss-Newton refinement.

Conventions: poses are camera-to-world (PoseSE3); 3D points handed to the
pose solvers live in the frame the pose is expressed in. The pixel model is
the rectified pinhole u = fx*x/z + cx, v = fy*y/z + cy with the right camera
displaced by `baseline` along +x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RansacConfig
from .core import CameraRig, Keypoint, PoseSE3, rotation_from_axis_angle
from .errors import InsufficientDataError, TrackingFailureError, ValidationError

_MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class Landmark:
    """3D point in the camera frame of its creating keyframe."""

    position: np.ndarray
    source_keypoint: int
    depth: float

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.position, dtype=np.float64).reshape(3))
        if self.depth <= 0:
            raise ValidationError(f"landmark depth must be positive, got {self.depth}")
        if abs(self.depth - pos[2]) > 1e-9:
            raise ValidationError("landmark depth must equal its camera-frame z")
        pos.flags.writeable = False
        object.__setattr__(self, "position", pos)

    @classmethod
    def from_camera_point(cls, position, source_keypoint: int = -1) -> "Landmark":
        position = np.asarray(position, dtype=np.float64).reshape(3)
        return cls(position=position, source_keypoint=source_keypoint, depth=float(position[2]))


# ---------------------------------------------------------------------------
# projection


def project_camera_points(rig: CameraRig, pts_cam: np.ndarray) -> np.ndarray:
    """Pixels for (n, 3) camera-frame points (caller guarantees z > 0)."""
    pts_cam = np.asarray(pts_cam, dtype=np.float64)
    z = pts_cam[..., 2]
    return np.stack(
        [rig.fx * pts_cam[..., 0] / z + rig.cx, rig.fy * pts_cam[..., 1] / z + rig.cy],
        axis=-1,
    )


def world_to_camera(pose_wc: PoseSE3, points_world: np.ndarray) -> np.ndarray:
    pts = np.asarray(points_world, dtype=np.float64)
    return (pts - pose_wc.translation) @ pose_wc.rotation


def project_points(rig: CameraRig, pose_wc: PoseSE3, points_world: np.ndarray):
    """(pixels, depths) of world points through the left camera at pose_wc."""
    cam = world_to_camera(pose_wc, points_world)
    return project_camera_points(rig, cam), cam[..., 2]


def reprojection_errors(
    rig: CameraRig, pose_wc: PoseSE3, points_world: np.ndarray, pixels: np.ndarray
) -> np.ndarray:
    """Per-point pixel error; points at or behind the camera get +inf."""
    cam = world_to_camera(pose_wc, np.atleast_2d(points_world))
    pixels = np.atleast_2d(pixels)
    errs = np.full(len(cam), np.inf)
    ok = cam[:, 2] > _MIN_DEPTH
    if ok.any():
        pred = project_camera_points(rig, cam[ok])
        errs[ok] = np.linalg.norm(pred - pixels[ok], axis=1)
    return errs


# ---------------------------------------------------------------------------
# stereo triangulation


def triangulate_stereo(
    rig: CameraRig,
    left: Keypoint,
    right: Keypoint,
    epipolar_tolerance: float = 2.0,
    source_keypoint: int = -1,
) -> Landmark | None:
    """Depth from disparity; returns None when the pair is rejected.

    Rejection (not an error): non-positive disparity or an epipolar row gap
    beyond `epipolar_tolerance` pixels.
    """
    disparity = left.x - right.x
    if disparity <= 0:
        return None
    if abs(left.y - right.y) > epipolar_tolerance:
        return None
    z = rig.fx * rig.baseline / disparity
    x = (left.x - rig.cx) * z / rig.fx
    y = (left.y - rig.cy) * z / rig.fy
    return Landmark(position=np.array([x, y, z]), source_keypoint=source_keypoint, depth=z)


def triangulate_matches(
    rig: CameraRig,
    left_xy: np.ndarray,
    right_xy: np.ndarray,
    epipolar_tolerance: float = 2.0,
):
    """Vectorized stereo triangulation: (positions (k, 3), valid mask (n,))."""
    left_xy = np.atleast_2d(np.asarray(left_xy, dtype=np.float64))
    right_xy = np.atleast_2d(np.asarray(right_xy, dtype=np.float64))
    disparity = left_xy[:, 0] - right_xy[:, 0]
    valid = (disparity > 0) & (np.abs(left_xy[:, 1] - right_xy[:, 1]) <= epipolar_tolerance)
    z = np.where(valid, rig.fx * rig.baseline / np.where(valid, disparity, 1.0), np.nan)
    x = (left_xy[:, 0] - rig.cx) * z / rig.fx
    y = (left_xy[:, 1] - rig.cy) * z / rig.fy
    positions = np.stack([x, y, z], axis=1)[valid]
    return positions, valid


def depth_filter(landmarks, max_depth: float):
    """Keep landmarks with depth <= max_depth (boundary inclusive), order kept."""
    if max_depth <= 0:
        raise ValidationError(f"max_depth must be positive, got {max_depth}")
    return [lm for lm in landmarks if lm.depth <= max_depth]


# ---------------------------------------------------------------------------
# P3P (Grunert's quartic) with fourth-point disambiguation


def _as_points3d(points3d) -> np.ndarray:
    if isinstance(points3d, np.ndarray):
        return points3d.astype(np.float64).reshape(-1, 3)
    rows = [p.position if isinstance(p, Landmark) else np.asarray(p, dtype=np.float64) for p in points3d]
    return np.stack(rows).reshape(-1, 3)


def _as_pixels(points2d) -> np.ndarray:
    if isinstance(points2d, np.ndarray):
        return points2d.astype(np.float64).reshape(-1, 2)
    rows = [
        np.array([p.x, p.y]) if isinstance(p, Keypoint) else np.asarray(p, dtype=np.float64)
        for p in points2d
    ]
    return np.stack(rows).reshape(-1, 2)


def _rigid_from_three_points(src: np.ndarray, dst: np.ndarray) -> PoseSE3 | None:
    """Least-squares rigid transform with R src + t = dst (Kabsch)."""
    src_c = src - src.mean(axis=0)
    dst_c = dst - dst.mean(axis=0)
    u, _, vt = np.linalg.svd(src_c.T @ dst_c)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = dst.mean(axis=0) - r @ src.mean(axis=0)
    try:
        return PoseSE3(r, t)
    except ValidationError:
        return None


def solve_p3p(points3d, points2d, rig: CameraRig) -> list[PoseSE3]:
    """Minimal three-point pose solver; up to four camera-to-world candidates.

    Each returned candidate reprojects the three points within 1e-6 px (a
    short Newton polish enforces this); degenerate configurations yield an
    empty list.
    """
    pw = _as_points3d(points3d)
    px = _as_pixels(points2d)
    if pw.shape != (3, 3) or px.shape != (3, 2):
        raise ValidationError("solve_p3p needs exactly 3 points and 3 pixels")
    candidates = []
    for pose in _p3p_candidates(pw, px, rig):
        pose = _polish_pose(pose, pw, px, rig)
        if pose is None or reprojection_errors(rig, pose, pw, px).max() > 1e-6:
            continue
        if any(_poses_close(pose, existing) for existing in candidates):
            continue
        candidates.append(pose)
    return candidates[:4]


def _p3p_candidates(pw: np.ndarray, px: np.ndarray, rig: CameraRig) -> list[PoseSE3]:
    """Raw Grunert-quartic candidates, unpolished (hypothesis quality only)."""

    e1, e2 = pw[1] - pw[0], pw[2] - pw[0]
    scale = np.linalg.norm(e1) * np.linalg.norm(e2)
    if scale == 0 or np.linalg.norm(np.cross(e1, e2)) <= 1e-10 * scale:
        return []

    # unit bearing vectors of the three pixels
    f = np.stack(
        [(px[:, 0] - rig.cx) / rig.fx, (px[:, 1] - rig.cy) / rig.fy, np.ones(3)], axis=1
    )
    f /= np.linalg.norm(f, axis=1, keepdims=True)

    a2 = float(((pw[1] - pw[2]) ** 2).sum())
    b2 = float(((pw[0] - pw[2]) ** 2).sum())
    c2 = float(((pw[0] - pw[1]) ** 2).sum())
    ca, cb, cg = float(f[1] @ f[2]), float(f[0] @ f[2]), float(f[0] @ f[1])
    A, C = a2 / b2, c2 / b2

    # Grunert's quartic in v = s3/s1 (coefficients derived symbolically)
    a4 = (A - C - 1.0) ** 2 - 4.0 * C * ca * ca
    a3 = -4.0 * (
        A * A * cb - 2 * A * C * cb - A * ca * cg - A * cb
        + C * C * cb - 2 * C * ca * ca * cb - C * ca * cg + C * cb + ca * cg
    )
    a2_ = 2.0 * (
        2 * A * A * cb * cb + A * A - 4 * A * C * cb * cb - 2 * A * C
        - 4 * A * ca * cb * cg - 2 * A * cg * cg + 2 * C * C * cb * cb + C * C
        - 2 * C * ca * ca - 4 * C * ca * cb * cg + 2 * ca * ca + 2 * cg * cg - 1.0
    )
    a1 = -4.0 * (
        A * A * cb - 2 * A * C * cb - A * ca * cg - 2 * A * cb * cg * cg
        + A * cb + C * C * cb - C * ca * cg - C * cb + ca * cg
    )
    a0 = (A - C + 1.0) ** 2 - 4.0 * A * cg * cg

    coeffs = np.array([a4, a3, a2_, a1, a0])
    if not np.all(np.isfinite(coeffs)) or np.abs(coeffs).max() == 0:
        return []
    roots = np.roots(coeffs)

    candidates = []
    for root in roots:
        if abs(root.imag) > 1e-6 * (1.0 + abs(root.real)):
            continue
        v = float(root.real)
        if v <= 0:
            continue
        den = 2.0 * (cg - v * ca)
        if abs(den) < 1e-12:
            continue
        u = (((A - C) * (1.0 + v * v - 2.0 * v * cb)) + 1.0 - v * v) / den
        if u <= 0:
            continue
        s1_sq = b2 / (1.0 + v * v - 2.0 * v * cb)
        if s1_sq <= 0:
            continue
        s1 = np.sqrt(s1_sq)
        depths = np.array([s1, u * s1, v * s1])
        cam_pts = depths[:, None] * f
        pose = _rigid_from_three_points(cam_pts, pw)
        if pose is None:
            continue
        if any(_poses_close(pose, existing, tol=1e-4) for existing in candidates):
            continue
        candidates.append(pose)
    return candidates[:4]


def _poses_close(a: PoseSE3, b: PoseSE3, tol: float = 1e-6) -> bool:
    return (
        np.abs(a.rotation - b.rotation).max() < tol
        and np.abs(a.translation - b.translation).max() < tol * (1.0 + np.abs(b.translation).max())
    )


# ---------------------------------------------------------------------------
# Gauss-Newton refinement on reprojection error


def reprojection_residuals(
    rig: CameraRig, pose_wc: PoseSE3, points_world: np.ndarray, pixels: np.ndarray
) -> np.ndarray:
    """(2n,) stacked (predicted - observed) pixel residuals."""
    pred, _ = project_points(rig, pose_wc, points_world)
    return (pred - np.atleast_2d(pixels)).reshape(-1)


def reprojection_jacobian(
    rig: CameraRig, pose_wc: PoseSE3, points_world: np.ndarray
) -> np.ndarray:
    """(2n, 6) Jacobian of the residuals w.r.t. the twist update.

    The twist is (translation, rotation) applied as a left-multiplicative
    update to the world-to-camera transform: R_cw <- exp([w]x) R_cw,
    t_cw <- exp([w]x) t_cw + dt.
    """
    cam = world_to_camera(pose_wc, np.atleast_2d(points_world))
    n = len(cam)
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    inv_z = 1.0 / z
    jac = np.zeros((n, 2, 6))
    # d(pixel)/d(cam point)
    jp = np.zeros((n, 2, 3))
    jp[:, 0, 0] = rig.fx * inv_z
    jp[:, 0, 2] = -rig.fx * x * inv_z * inv_z
    jp[:, 1, 1] = rig.fy * inv_z
    jp[:, 1, 2] = -rig.fy * y * inv_z * inv_z
    # d(cam point)/d(translation) = I ; d(cam point)/d(rotation) = -[p]x
    neg_skew = np.zeros((n, 3, 3))
    neg_skew[:, 0, 1], neg_skew[:, 0, 2] = z, -y
    neg_skew[:, 1, 0], neg_skew[:, 1, 2] = -z, x
    neg_skew[:, 2, 0], neg_skew[:, 2, 1] = y, -x
    jac[:, :, :3] = jp
    jac[:, :, 3:] = jp @ neg_skew
    return jac.reshape(2 * n, 6)


def _apply_twist(pose_wc: PoseSE3, delta: np.ndarray) -> PoseSE3:
    r_cw = pose_wc.rotation.T
    t_cw = -r_cw @ pose_wc.translation
    rot = rotation_from_axis_angle(delta[3:])
    r_cw = rot @ r_cw
    t_cw = rot @ t_cw + delta[:3]
    u, _, vt = np.linalg.svd(r_cw)
    r_cw = u @ vt
    if np.linalg.det(r_cw) < 0:
        r_cw = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return PoseSE3(r_cw.T, -r_cw.T @ t_cw)


def _reprojection_cost(rig, pose, points, pixels) -> float:
    cam = world_to_camera(pose, np.atleast_2d(points))
    if np.any(cam[:, 2] <= _MIN_DEPTH):
        return np.inf
    r = reprojection_residuals(rig, pose, points, pixels)
    return float(r @ r)


@dataclass(frozen=True)
class RefineResult:
    pose: PoseSE3
    iterations: int
    initial_cost: float
    final_cost: float
    degenerate: bool


def refine_pose(
    initial: PoseSE3,
    points_world: np.ndarray,
    pixels: np.ndarray,
    rig: CameraRig,
    inlier_mask: np.ndarray | None = None,
    max_iterations: int = 20,
    step_tol: float = 1e-8,
    cost_tol: float = 1e-10,
) -> RefineResult:
    """Gauss-Newton on total squared reprojection error over the inliers.

    Stops when the step norm drops below `step_tol`, the relative cost
    decrease drops below `cost_tol`, or after `max_iterations`. The returned
    pose never has a higher inlier cost than the initial one; singular normal
    equations return the initial pose flagged degenerate.
    """
    points = np.atleast_2d(np.asarray(points_world, dtype=np.float64))
    pix = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    if inlier_mask is not None:
        mask = np.asarray(inlier_mask, dtype=bool)
        points, pix = points[mask], pix[mask]
    if len(points) < 4:
        raise InsufficientDataError(f"refine_pose needs >= 4 inliers, got {len(points)}")

    pose = initial
    cost = _reprojection_cost(rig, pose, points, pix)
    initial_cost = cost
    iterations = 0
    degenerate = False
    for _ in range(max_iterations):
        jac = reprojection_jacobian(rig, pose, points)
        res = reprojection_residuals(rig, pose, points, pix)
        h = jac.T @ jac
        g = jac.T @ res
        try:
            delta = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            degenerate = iterations == 0
            break
        if not np.all(np.isfinite(delta)):
            degenerate = iterations == 0
            break
        new_pose = _apply_twist(pose, delta)
        new_cost = _reprojection_cost(rig, new_pose, points, pix)
        iterations += 1
        if new_cost > cost:
            break
        decreased = cost - new_cost
        pose, cost = new_pose, new_cost
        if np.linalg.norm(delta) < step_tol:
            break
        if decreased < cost_tol * max(cost, 1e-300):
            break
    if degenerate:
        return RefineResult(initial, 0, initial_cost, initial_cost, True)
    return RefineResult(pose, iterations, initial_cost, cost, False)


def _polish_pose(pose: PoseSE3, points, pixels, rig: CameraRig) -> PoseSE3 | None:
    """Drive an exactly-solvable reprojection problem to machine precision."""
    try:
        result = refine_pose(
            pose,
            np.vstack([points, points[:1]]),  # refine needs >= 4 rows
            np.vstack([pixels, pixels[:1]]),
            rig,
            max_iterations=8,
            step_tol=1e-15,
            cost_tol=0.0,
        )
    except InsufficientDataError:
        return None
    return result.pose


# ---------------------------------------------------------------------------
# RANSAC PnP


def _coerce_correspondences(correspondences):
    """Accept (points (n,3), pixels (n,2)) arrays or (Landmark, Keypoint) pairs."""
    if (
        isinstance(correspondences, tuple)
        and len(correspondences) == 2
        and isinstance(correspondences[0], np.ndarray)
    ):
        pts = np.asarray(correspondences[0], dtype=np.float64).reshape(-1, 3)
        pix = np.asarray(correspondences[1], dtype=np.float64).reshape(-1, 2)
        return pts, pix
    pts, pix = [], []
    for lm, kp in correspondences:
        pts.append(lm.position if isinstance(lm, Landmark) else np.asarray(lm, dtype=np.float64))
        pix.append(np.array([kp.x, kp.y]) if isinstance(kp, Keypoint) else np.asarray(kp, dtype=np.float64))
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 2))
    return np.stack(pts), np.stack(pix)


def ransac_pnp(
    correspondences,
    rig: CameraRig,
    cfg: RansacConfig | None = None,
    rng=None,
) -> tuple[PoseSE3, np.ndarray]:
    """Robust pose from 3D-2D correspondences: (pose_wc, inlier mask).

    Minimal P3P samples with a fourth point disambiguating the candidates;
    the iteration budget adapts to the running inlier ratio and the
    configured confidence. The best model is refined by Gauss-Newton on all
    of its inliers and the mask recomputed from the refined pose.

    Raises InsufficientDataError with fewer than 4 correspondences and
    TrackingFailureError when the inlier count stays below cfg.min_inliers.
    """
    cfg = cfg or RansacConfig()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    points, pixels = _coerce_correspondences(correspondences)
    n = len(points)
    if n < 4:
        raise InsufficientDataError(f"ransac_pnp needs >= 4 correspondences, got {n}")

    best_count = 0
    best_pose = None
    best_mask = None
    needed = cfg.max_iterations
    i = 0
    while i < needed:
        sample = rng.choice(n, size=4, replace=False)
        tri, check = sample[:3], sample[3]
        pose = None
        check_err = np.inf
        # raw candidates suffice for consensus scoring; Gauss-Newton
        # refinement of the winning model recovers full precision
        for cand in _p3p_candidates(points[tri], pixels[tri], rig):
            err = reprojection_errors(rig, cand, points[check][None], pixels[check][None])[0]
            if err < check_err:
                pose, check_err = cand, err
        i += 1
        if pose is None:
            continue
        mask = reprojection_errors(rig, pose, points, pixels) < cfg.reproj_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_pose, best_mask = count, pose, mask
            w = count / n
            if w >= 1.0:
                needed = i
            else:
                denom = np.log1p(-(w ** 3))
                est = int(np.ceil(np.log1p(-cfg.confidence) / denom)) if denom < 0 else cfg.max_iterations
                needed = min(cfg.max_iterations, max(est, 1))

    if best_pose is None or best_count < cfg.min_inliers:
        raise TrackingFailureError(
            f"only {best_count} inliers, need >= {cfg.min_inliers}"
        )
    refined = refine_pose(best_pose, points, pixels, rig, inlier_mask=best_mask).pose
    final_mask = reprojection_errors(rig, refined, points, pixels) < cfg.reproj_threshold
    if int(final_mask.sum()) < cfg.min_inliers:
        raise TrackingFailureError(
            f"only {int(final_mask.sum())} inliers after refinement, need >= {cfg.min_inliers}"
        )
    return refined, final_mask
