"""Pydantic request/response models for the tracking and evaluation service.

Feature payloads travel as base64-encoded SPFT bytes; trajectories as the
text formats the file tools use (kitti or tum). Non-finite statistics are
reported as null to keep the JSON strict.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


# ---------------------------------------------------------------------------
# keypoint selection


class AnmsSelectRequest(BaseModel):
    spft_b64: str
    n: int = Field(ge=0)


class SelectionStats(BaseModel):
    count: int
    min_pairwise_distance: Optional[float] = None
    radius_quantiles: dict[str, Optional[float]]


class AnmsSelectResponse(BaseModel):
    spft_b64: str
    stats: SelectionStats


# ---------------------------------------------------------------------------
# evaluation


class EvalRequest(BaseModel):
    est_text: str
    gt_text: str
    est_format: Literal["kitti", "tum"] = "kitti"
    gt_format: Literal["kitti", "tum"] = "kitti"
    mode: Literal["ate", "rpe", "kitti"]
    align: Literal["rigid", "none"] = "rigid"
    delta: int = Field(default=1, ge=1)
    plot: bool = False


class AteMetrics(BaseModel):
    rmse: float
    n_pairs: int
    align: str


class RpeMetrics(BaseModel):
    rmse: float
    delta: int
    n_pairs: int


class KittiSegmentRow(BaseModel):
    start_frame: int
    length: float
    translational_pct: float
    rotational_deg_per_m: float


class KittiMetrics(BaseModel):
    status: str
    avg_translational_pct: Optional[float]
    avg_rotational_deg_per_m: Optional[float]
    by_length: dict[str, tuple[float, float]]
    n_segments: int
    csv: str


class EvalResponse(BaseModel):
    mode: str
    ate: Optional[AteMetrics] = None
    rpe: Optional[RpeMetrics] = None
    kitti: Optional[KittiMetrics] = None
    plot_svg: Optional[str] = None


# ---------------------------------------------------------------------------
# tracking sessions


class RansacModel(BaseModel):
    reproj_threshold: float = 2.0
    confidence: float = 0.99
    max_iterations: int = 500
    min_inliers: int = 15


class PipelineConfigModel(BaseModel):
    anms_n: int = 1000
    ratio: float = 0.7
    mutual: bool = True
    max_depth: float = 20.0
    epipolar_tolerance: float = 2.0
    ransac: RansacModel = Field(default_factory=RansacModel)
    keyframe_min_tracked: int = 50
    keyframe_max_gap: int = 10


class RigModel(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    width: int
    height: int


class SessionCreateRequest(BaseModel):
    config: PipelineConfigModel = Field(default_factory=PipelineConfigModel)
    rig: Optional[RigModel] = None
    calib_text: Optional[str] = None
    seed: int = 0


class SessionSummary(BaseModel):
    session_id: str
    n_frames: int
    n_lost: int
    status: str
    mean_inliers: float


class FrameRequest(BaseModel):
    frame_index: int = Field(ge=0)
    left_spft_b64: str
    right_spft_b64: str


class FrameResponse(BaseModel):
    frame_index: int
    status: str
    pose_row_major: list[float]
    n_matches: int
    n_inliers: int
    is_keyframe: bool


class TrajectoryResponse(BaseModel):
    format: str
    text: str
    statuses: list[str]


class DeleteResponse(BaseModel):
    deleted: bool
