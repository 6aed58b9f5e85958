"""FastAPI service exposing keypoint selection, trajectory evaluation, and
stateful stereo tracking sessions.

A session holds one tracker: create it with a camera rig and pipeline
configuration, post stereo frames in order (base64 SPFT payloads), and fetch
the accumulated trajectory at any point. Per-frame randomness is derived
from (seed, frame index), so a session replays bit-identically.
"""

from __future__ import annotations

import base64
import binascii
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException
from scipy.spatial.distance import pdist

from .. import __version__
from ..anms import select_top_n
from ..config import PipelineConfig, RansacConfig
from ..core import CameraRig, Trajectory, TrajectoryEntry
from ..dataio import format_trajectory_text, parse_kitti_calib_text, parse_trajectory_text
from ..detector import decode_features, encode_features
from ..errors import (
    AnmsVoError,
    AssociationError,
    FormatError,
    InitializationError,
    InsufficientDataError,
    ValidationError,
)
from ..evalkit import ate_rmse, kitti_segment_errors, project_xz, rpe
from ..odometry import TrackingStatus, initialize, process_frame
from ..svgplot import trajectory_xz_svg
from . import schemas


def _http_error(exc: AnmsVoError) -> HTTPException:
    if isinstance(exc, (FormatError, ValidationError)):
        return HTTPException(status_code=400, detail=str(exc))
    if isinstance(exc, (AssociationError, InsufficientDataError, InitializationError)):
        return HTTPException(status_code=422, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


def _decode_b64(payload: str, what: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail=f"{what}: invalid base64") from None


class _Session:
    def __init__(self, rig: CameraRig, cfg: PipelineConfig, seed: int):
        self.rig = rig
        self.cfg = cfg
        self.seed = seed
        self.lock = threading.Lock()
        self.state = None
        self.entries: list[TrajectoryEntry] = []
        self.statuses: list[str] = []
        self.inliers: list[int] = []

    def trajectory(self) -> Trajectory:
        return Trajectory(tuple(self.entries))


def _to_config(model: schemas.PipelineConfigModel) -> PipelineConfig:
    try:
        return PipelineConfig(
            anms_n=model.anms_n,
            ratio=model.ratio,
            mutual=model.mutual,
            max_depth=model.max_depth,
            epipolar_tolerance=model.epipolar_tolerance,
            ransac=RansacConfig(**model.ransac.model_dump()),
            keyframe_min_tracked=model.keyframe_min_tracked,
            keyframe_max_gap=model.keyframe_max_gap,
        )
    except ValidationError as exc:
        raise _http_error(exc) from None


def create_app() -> FastAPI:
    app = FastAPI(title="anms-vo", version=__version__)
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/anms/select", response_model=schemas.AnmsSelectResponse)
    def anms_select(req: schemas.AnmsSelectRequest):
        data = _decode_b64(req.spft_b64, "spft_b64")
        try:
            features = decode_features(data, image_id="request")
            result = select_top_n(features, req.n)
            subset = features.subset(result.selected)
        except AnmsVoError as exc:
            raise _http_error(exc) from None
        chosen = result.radii[result.selected]
        finite = chosen[np.isfinite(chosen)]

        def _stat(value: float) -> float | None:
            return float(value) if np.isfinite(value) else None

        quantiles: dict[str, float | None] = {}
        if len(chosen):
            quantiles = {
                "min": _stat(chosen.min()),
                "p25": _stat(np.percentile(finite, 25) if len(finite) else np.inf),
                "p50": _stat(np.percentile(finite, 50) if len(finite) else np.inf),
                "p75": _stat(np.percentile(finite, 75) if len(finite) else np.inf),
                "max": _stat(chosen.max()),
            }
        min_dist = None
        if len(subset) >= 2:
            min_dist = float(pdist(subset.xy).min())
        return schemas.AnmsSelectResponse(
            spft_b64=base64.b64encode(encode_features(subset)).decode("ascii"),
            stats=schemas.SelectionStats(
                count=len(subset),
                min_pairwise_distance=min_dist,
                radius_quantiles=quantiles,
            ),
        )

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        try:
            est = parse_trajectory_text(req.est_text, req.est_format, path="est")
            gt = parse_trajectory_text(req.gt_text, req.gt_format, path="gt")
            response = schemas.EvalResponse(mode=req.mode)
            if req.mode == "ate":
                report = ate_rmse(est, gt, align=req.align)
                response.ate = schemas.AteMetrics(
                    rmse=report.rmse, n_pairs=report.n_pairs, align=req.align
                )
            elif req.mode == "rpe":
                report = rpe(est, gt, delta=req.delta)
                response.rpe = schemas.RpeMetrics(
                    rmse=report.rmse, delta=req.delta, n_pairs=len(report.residuals)
                )
            else:
                report = kitti_segment_errors(est, gt)
                response.kitti = schemas.KittiMetrics(
                    status=report.status,
                    avg_translational_pct=(
                        None if np.isnan(report.avg_translational_pct)
                        else report.avg_translational_pct
                    ),
                    avg_rotational_deg_per_m=(
                        None if np.isnan(report.avg_rotational_deg_per_m)
                        else report.avg_rotational_deg_per_m
                    ),
                    by_length={
                        f"{length:g}": value for length, value in report.by_length().items()
                    },
                    n_segments=len(report.segments),
                    csv=report.to_csv(),
                )
            if req.plot:
                response.plot_svg = trajectory_xz_svg(project_xz(est), project_xz(gt))
            return response
        except AnmsVoError as exc:
            raise _http_error(exc) from None

    @app.post("/sessions", response_model=schemas.SessionSummary)
    def create_session(req: schemas.SessionCreateRequest):
        if (req.rig is None) == (req.calib_text is None):
            raise HTTPException(
                status_code=400, detail="provide exactly one of rig or calib_text"
            )
        try:
            if req.rig is not None:
                rig = CameraRig(**req.rig.model_dump())
            else:
                rig = parse_kitti_calib_text(req.calib_text, path="calib_text")
        except AnmsVoError as exc:
            raise _http_error(exc) from None
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = _Session(rig, _to_config(req.config), req.seed)
        return schemas.SessionSummary(
            session_id=session_id, n_frames=0, n_lost=0, status="EMPTY", mean_inliers=0.0
        )

    def _get_session(session_id: str) -> _Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.post("/sessions/{session_id}/frames", response_model=schemas.FrameResponse)
    def push_frame(session_id: str, req: schemas.FrameRequest):
        session = _get_session(session_id)
        left = decode_features(
            _decode_b64(req.left_spft_b64, "left_spft_b64"),
            image_id=f"{req.frame_index:06d}_left",
        )
        right = decode_features(
            _decode_b64(req.right_spft_b64, "right_spft_b64"),
            image_id=f"{req.frame_index:06d}_right",
        )
        with session.lock:
            expected = len(session.entries)
            if req.frame_index != expected:
                raise HTTPException(
                    status_code=409,
                    detail=f"expected frame_index {expected}, got {req.frame_index}",
                )
            try:
                if session.state is None:
                    session.state = initialize(
                        left, right, session.rig, session.cfg, frame_index=req.frame_index
                    )
                else:
                    session.state = process_frame(
                        session.state, left, right, session.rig, session.cfg,
                        rng=np.random.default_rng([session.seed, req.frame_index]),
                    )
            except AnmsVoError as exc:
                raise _http_error(exc) from None
            state = session.state
            session.entries.append(
                TrajectoryEntry(frame_index=req.frame_index, pose=state.pose)
            )
            session.statuses.append(state.status.value)
            session.inliers.append(state.n_inliers)
        mat = np.c_[state.pose.rotation, state.pose.translation]
        return schemas.FrameResponse(
            frame_index=req.frame_index,
            status=state.status.value,
            pose_row_major=[float(v) for v in mat.reshape(-1)],
            n_matches=state.n_matches,
            n_inliers=state.n_inliers,
            is_keyframe=state.is_keyframe,
        )

    @app.get("/sessions/{session_id}", response_model=schemas.SessionSummary)
    def session_summary(session_id: str):
        session = _get_session(session_id)
        with session.lock:
            n = len(session.entries)
            lost = sum(1 for s in session.statuses if s == TrackingStatus.LOST.value)
            mean_inl = float(np.mean(session.inliers)) if session.inliers else 0.0
            status = session.statuses[-1] if session.statuses else "EMPTY"
        return schemas.SessionSummary(
            session_id=session_id, n_frames=n, n_lost=lost, status=status,
            mean_inliers=mean_inl,
        )

    @app.get("/sessions/{session_id}/trajectory", response_model=schemas.TrajectoryResponse)
    def session_trajectory(session_id: str, format: str = "kitti"):
        session = _get_session(session_id)
        with session.lock:
            try:
                text = format_trajectory_text(session.trajectory(), format)
            except AnmsVoError as exc:
                raise _http_error(exc) from None
            statuses = list(session.statuses)
        return schemas.TrajectoryResponse(format=format, text=text, statuses=statuses)

    @app.delete("/sessions/{session_id}", response_model=schemas.DeleteResponse)
    def delete_session(session_id: str):
        with registry_lock:
            existed = sessions.pop(session_id, None) is not None
        if not existed:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return schemas.DeleteResponse(deleted=True)

    return app


app = create_app()
