"""Pydantic request/response models for the review and pipeline API."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class BoxModel(BaseModel):
    x: int
    y: int
    w: int
    h: int


class ErrorBody(BaseModel):
    error: str
    detail: str


class ColumnSummary(BaseModel):
    column_id: str
    manuscript: str
    page: int
    side: str
    column_index: int
    width: int
    height: int
    scribe: Optional[str] = None
    pending_boxes: int
    decided_boxes: int


class ColumnPage(BaseModel):
    items: list[ColumnSummary]
    total: int
    page: int
    page_size: int


class BoxView(BaseModel):
    id: str
    column_id: str
    box: BoxModel
    adjusted_box: Optional[BoxModel] = None
    class_id: int
    origin: str
    status: str
    cycle: int
    confidence: Optional[float] = None
    model_id: Optional[str] = None


class BoxList(BaseModel):
    column_id: str
    items: list[BoxView]


class DecisionRequest(BaseModel):
    action: Literal["accept", "reject", "adjust"]
    box: Optional[BoxModel] = None


class Progress(BaseModel):
    cycle: int
    phase: str
    pending_count: int


class PreprocessRequest(BaseModel):
    images_dir: Optional[str] = None
    manuscript: Optional[str] = None


class PreprocessResponse(BaseModel):
    pages: int
    columns: int


class BootstrapRequest(BaseModel):
    scribe: str
    manuscript: Optional[str] = None
    tau: float = 0.55
    nms_iou: float = 0.3
    sides: list[str] = Field(default_factory=lambda: ["recto", "verso"])
    max_pages: Optional[int] = None


class BootstrapResponse(BaseModel):
    created: int


class ManifestView(BaseModel):
    cycle: int
    class_names: list[str]
    train_columns: list[str]
    val_columns: list[str]
    inference_columns: list[str]


class CycleStateView(BaseModel):
    cycle: int
    phase: str
    pending_count: int
    manifest: Optional[ManifestView] = None


class CycleStartRequest(BaseModel):
    cycle: Optional[int] = None


class DetectionsSubmitRequest(BaseModel):
    path: Optional[str] = None
    content: Optional[str] = None


class SweepRequest(BaseModel):
    target: str
    taus: list[float]
    manuscript: Optional[str] = None


class SweepPointView(BaseModel):
    tau: float
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    f_score: float


class SweepResponse(BaseModel):
    points: list[SweepPointView]


class StatsRequest(BaseModel):
    manuscript: Optional[str] = None


class StatsRow(BaseModel):
    scribe: str
    occurrences: int
    columns: int
    occ_per_column: float
    mean_confidence: float


class StatsResponse(BaseModel):
    rows: list[StatsRow]


class AttributeRequest(BaseModel):
    rule: Literal["any_above", "fraction_above", "majority_vote"]
    tau: float = 0.0
    fraction: float = 1.0
    unit: Literal["page", "column"] = "page"
    manuscript: Optional[str] = None


class AttributionRow(BaseModel):
    unit_id: str
    detections: int
    decision: str


class AttributeResponse(BaseModel):
    rows: list[AttributionRow]
