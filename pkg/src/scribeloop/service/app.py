"""FastAPI service wrapping a workspace: review API plus pipeline commands.

All mutations funnel through one writer lock, honoring the store's
single-writer model; reads are served concurrently. Domain errors map to
status codes with a machine-readable body {error, detail}.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import evaluation
from ..errors import (
    AlreadyDecided,
    BoxOutOfBounds,
    ColumnNotInInferenceSet,
    ConfidenceOutOfRange,
    ConstantTemplate,
    DuplicateAccepted,
    EmptyImage,
    InferenceError,
    LayoutMismatch,
    MalformedLine,
    MalformedRecord,
    ModelLoadError,
    OverlapError,
    PendingReviewsRemain,
    PreviousCycleOpen,
    RoiOutOfBounds,
    ScribeloopError,
    TemplateTooLarge,
    UndecidedAnnotation,
    UnknownColumn,
    UnknownId,
    UnlabeledColumn,
)
from ..evaluation import AttributionKind, AttributionRule
from ..model import Annotation, BBox, Origin, Side, Status
from ..orchestrator import CycleState, Workspace
from ..store import Decision
from . import schemas

_STATUS_CODES: dict[type, int] = {
    UnknownId: 404,
    UnknownColumn: 404,
    AlreadyDecided: 409,
    DuplicateAccepted: 409,
    PreviousCycleOpen: 409,
    PendingReviewsRemain: 409,
    ColumnNotInInferenceSet: 409,
    OverlapError: 409,
    BoxOutOfBounds: 422,
    MalformedLine: 422,
    MalformedRecord: 422,
    ConfidenceOutOfRange: 422,
    LayoutMismatch: 422,
    RoiOutOfBounds: 422,
    UndecidedAnnotation: 422,
    EmptyImage: 422,
    TemplateTooLarge: 422,
    ConstantTemplate: 422,
    UnlabeledColumn: 422,
    ModelLoadError: 503,
    InferenceError: 500,
}


def _status_for(exc: ScribeloopError) -> int:
    return _STATUS_CODES.get(type(exc), 400)


def _box_model(box: Optional[BBox]) -> Optional[schemas.BoxModel]:
    if box is None:
        return None
    return schemas.BoxModel(x=box.x, y=box.y, w=box.w, h=box.h)


def _box_view(ann: Annotation) -> schemas.BoxView:
    return schemas.BoxView(
        id=ann.id,
        column_id=ann.column_id,
        box=_box_model(ann.box),
        adjusted_box=_box_model(ann.adjusted_box),
        class_id=ann.class_id,
        origin=ann.origin.value,
        status=ann.status.value,
        cycle=ann.cycle,
        confidence=ann.confidence,
        model_id=ann.model_id,
    )


def _state_view(state: Optional[CycleState]) -> schemas.CycleStateView:
    if state is None:
        return schemas.CycleStateView(cycle=0, phase="none", pending_count=0)
    manifest = None
    if state.manifest is not None:
        manifest = schemas.ManifestView(
            cycle=state.manifest.cycle,
            class_names=list(state.manifest.class_names),
            train_columns=state.manifest.train_columns,
            val_columns=state.manifest.val_columns,
            inference_columns=state.manifest.inference_columns,
        )
    return schemas.CycleStateView(
        cycle=state.cycle,
        phase=state.phase.value,
        pending_count=state.pending_count,
        manifest=manifest,
    )


def create_app(workspace: Workspace, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="scribeloop", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    writer_lock = threading.Lock()
    ws = workspace

    @app.exception_handler(ScribeloopError)
    async def scribeloop_error(request: Request, exc: ScribeloopError):
        return JSONResponse(
            status_code=_status_for(exc),
            content=schemas.ErrorBody(error=exc.code, detail=str(exc)).model_dump(),
        )

    @app.exception_handler(ValueError)
    async def value_error(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422,
            content=schemas.ErrorBody(error="ValueError", detail=str(exc)).model_dump(),
        )

    # -- review API ------------------------------------------------------------

    @app.get("/api/progress", response_model=schemas.Progress)
    def progress():
        state = ws.cycle_state()
        pending = len(ws.store.query(status=Status.PENDING))
        return schemas.Progress(
            cycle=state.cycle if state else 0,
            phase=state.phase.value if state else "none",
            pending_count=pending,
        )

    @app.get("/api/columns", response_model=schemas.ColumnPage)
    def columns(
        status: Optional[str] = None,
        page: int = Query(1, ge=1),
        page_size: int = Query(50, ge=1, le=500),
    ):
        wanted = Status(status) if status else None
        infos = ws.store.columns()
        summaries = []
        for info in infos:
            anns = ws.store.query(column=info.column_id)
            n_pending = sum(a.status is Status.PENDING for a in anns)
            if wanted is not None and not any(a.status is wanted for a in anns):
                continue
            summaries.append(
                schemas.ColumnSummary(
                    column_id=info.column_id,
                    manuscript=info.manuscript,
                    page=info.page_number,
                    side=info.side.value,
                    column_index=info.column_index,
                    width=info.width,
                    height=info.height,
                    scribe=info.scribe,
                    pending_boxes=n_pending,
                    decided_boxes=len(anns) - n_pending,
                )
            )
        start = (page - 1) * page_size
        return schemas.ColumnPage(
            items=summaries[start : start + page_size],
            total=len(summaries),
            page=page,
            page_size=page_size,
        )

    @app.get("/api/columns/{column_id}/image")
    def column_image(column_id: str):
        ws.store.column(column_id)  # 404 when unknown
        path = ws.columns_dir / f"{column_id}.png"
        if not path.is_file():
            raise UnknownColumn(f"no raster on disk for column {column_id}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/columns/{column_id}/boxes", response_model=schemas.BoxList)
    def column_boxes(column_id: str):
        ws.store.column(column_id)
        anns = ws.store.query(column=column_id)
        return schemas.BoxList(column_id=column_id, items=[_box_view(a) for a in anns])

    @app.post("/api/boxes/{box_id}/decision", response_model=schemas.BoxView)
    def decide_box(box_id: str, req: schemas.DecisionRequest):
        new_box = BBox(req.box.x, req.box.y, req.box.w, req.box.h) if req.box else None
        with writer_lock:
            ann = ws.store.decide(box_id, Decision(action=req.action, new_box=new_box))
        return _box_view(ann)

    # -- pipeline commands --------------------------------------------------------

    @app.post("/api/pipeline/preprocess", response_model=schemas.PreprocessResponse)
    def preprocess(req: schemas.PreprocessRequest):
        with writer_lock:
            report = ws.preprocess_images(
                images_dir=Path(req.images_dir) if req.images_dir else None,
                manuscript=req.manuscript,
            )
        return schemas.PreprocessResponse(**report)

    @app.post("/api/pipeline/bootstrap", response_model=schemas.BootstrapResponse)
    def bootstrap(req: schemas.BootstrapRequest):
        with writer_lock:
            created = ws.bootstrap(
                scribe=req.scribe,
                tau_tm=req.tau,
                iou_thresh=req.nms_iou,
                manuscript=req.manuscript,
                sides=tuple(Side(s) for s in req.sides),
                max_pages=req.max_pages,
            )
        return schemas.BootstrapResponse(created=created)

    @app.post("/api/cycles/start", response_model=schemas.CycleStateView)
    def start_cycle(req: schemas.CycleStartRequest):
        with writer_lock:
            state = ws.start_cycle(cycle=req.cycle)
        return _state_view(state)

    @app.get("/api/cycles/current", response_model=schemas.CycleStateView)
    def current_cycle():
        return _state_view(ws.cycle_state())

    @app.post("/api/cycles/merge", response_model=schemas.CycleStateView)
    def merge_cycle():
        with writer_lock:
            state = ws.merge_cycle()
        return _state_view(state)

    @app.post("/api/detections", response_model=schemas.CycleStateView)
    def submit_detections(req: schemas.DetectionsSubmitRequest):
        from ..dataset import parse_detections

        if (req.path is None) == (req.content is None):
            raise MalformedRecord("provide exactly one of path or content")
        with writer_lock:
            if req.content is not None:
                state = ws.submit_detections(parse_detections(req.content))
            else:
                state = ws.submit_detections(Path(req.path))
        return _state_view(state)

    # -- evaluation ---------------------------------------------------------------

    @app.post("/api/eval/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        points = evaluation.sweep_corpus(ws.store, req.target, req.taus, req.manuscript)
        return schemas.SweepResponse(
            points=[
                schemas.SweepPointView(
                    tau=p.tau,
                    tp=p.confusion.tp,
                    fp=p.confusion.fp,
                    fn=p.confusion.fn,
                    tn=p.confusion.tn,
                    accuracy=p.accuracy,
                    f_score=p.f_score,
                )
                for p in points
            ]
        )

    @app.post("/api/eval/stats", response_model=schemas.StatsResponse)
    def stats(req: schemas.StatsRequest):
        manuscript = req.manuscript or ws.config().name
        rows = evaluation.scribe_stats(ws.store, manuscript)
        return schemas.StatsResponse(
            rows=[
                schemas.StatsRow(
                    scribe=r.scribe,
                    occurrences=r.occurrences,
                    columns=r.columns,
                    occ_per_column=r.occ_per_column,
                    mean_confidence=r.mean_confidence,
                )
                for r in rows
            ]
        )

    @app.post("/api/eval/attribute", response_model=schemas.AttributeResponse)
    def attribute(req: schemas.AttributeRequest):
        manuscript = req.manuscript or ws.config().name
        rule = AttributionRule(
            kind=AttributionKind(req.rule), tau=req.tau, fraction=req.fraction
        )
        groups: dict[str, list[Annotation]] = {}
        for info in ws.store.columns(manuscript=manuscript):
            key = (
                info.column_id
                if req.unit == "column"
                else f"{info.manuscript}_{info.page_number}{info.side.short}"
            )
            groups.setdefault(key, [])
        for ann in ws.store.query(manuscript=manuscript, origin=Origin.DETECTOR):
            info = ws.store.column(ann.column_id)
            key = (
                ann.column_id
                if req.unit == "column"
                else f"{info.manuscript}_{info.page_number}{info.side.short}"
            )
            groups.setdefault(key, []).append(ann)
        rows = [
            schemas.AttributionRow(
                unit_id=key,
                detections=len(dets),
                decision=evaluation.attribute(dets, rule).value,
            )
            for key, dets in sorted(groups.items())
        ]
        return schemas.AttributeResponse(rows=rows)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
