"""Append-only annotation store with a replayable newline-delimited log.

One JSON object per line. Field order is fixed:

    record_type, id, manuscript, page, side, column, x, y, w, h,
    class, origin, status, cycle, confidence, model_id, scribe, timestamp

Fields that do not apply to a record type are omitted. Record types:

    column      registers a column raster (w/h are its dimensions,
                scribe its page label)
    annotation  a new pending/manual box
    decision    accept/reject/adjust of an existing annotation
                (x/y/w/h present only for adjust)
    cycle       an annotation-cycle phase transition (status = phase)

Replaying the log into an empty store reproduces the in-memory state
exactly; `serialize_state()` is the canonical witness for that property.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Optional

from .errors import (
    AlreadyDecided,
    BoxOutOfBounds,
    DuplicateAccepted,
    UnknownColumn,
    UnknownId,
)
from .model import Annotation, BBox, ColumnInfo, Origin, Side, Status

_FIELD_ORDER = (
    "record_type",
    "id",
    "manuscript",
    "page",
    "side",
    "column",
    "x",
    "y",
    "w",
    "h",
    "class",
    "origin",
    "status",
    "cycle",
    "confidence",
    "model_id",
    "scribe",
    "timestamp",
)

_SIDE_ORDER = {Side.RECTO: 0, Side.VERSO: 1}


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _encode(record: dict) -> str:
    ordered = {k: record[k] for k in _FIELD_ORDER if k in record and record[k] is not None}
    return json.dumps(ordered, separators=(",", ":"))


@dataclass(frozen=True)
class Decision:
    action: str  # accept | reject | adjust
    new_box: Optional[BBox] = None

    def __post_init__(self) -> None:
        if self.action not in ("accept", "reject", "adjust"):
            raise ValueError(f"unknown decision action {self.action!r}")
        if self.action == "adjust" and self.new_box is None:
            raise ValueError("adjust decision requires a replacement box")
        if self.action != "adjust" and self.new_box is not None:
            raise ValueError(f"{self.action} decision must not carry a box")

    @property
    def status(self) -> Status:
        return {"accept": Status.ACCEPTED, "reject": Status.REJECTED, "adjust": Status.ADJUSTED}[
            self.action
        ]


class AnnotationStore:
    """Single-writer annotation store; mutations serialize through one lock."""

    def __init__(self, log_path: Optional[Path] = None):
        self._lock = threading.RLock()
        self._columns: dict[str, ColumnInfo] = {}
        self._annotations: dict[str, Annotation] = {}
        self._by_column: dict[str, list[str]] = {}
        self._cycle_phases: list[tuple[int, str]] = []
        self._next_id = 1
        self._log_path = Path(log_path) if log_path else None
        self._log_file: Optional[IO[str]] = None
        if self._log_path is not None:
            if self._log_path.exists():
                with self._log_path.open("r", encoding="utf-8") as fh:
                    self._replay(fh)
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            self._log_file = self._log_path.open("a", encoding="utf-8")

    @classmethod
    def open(cls, log_path: Path) -> "AnnotationStore":
        return cls(log_path=log_path)

    def close(self) -> None:
        with self._lock:
            if self._log_file is not None:
                self._log_file.close()
                self._log_file = None

    # -- log plumbing ------------------------------------------------------

    def _append(self, record: dict) -> None:
        if self._log_file is not None:
            self._log_file.write(_encode(record) + "\n")
            self._log_file.flush()

    def _replay(self, lines: Iterable[str]) -> None:
        for line in lines:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            kind = rec["record_type"]
            if kind == "column":
                self._apply_column(
                    ColumnInfo(
                        column_id=rec["id"],
                        manuscript=rec["manuscript"],
                        page_number=rec["page"],
                        side=Side(rec["side"]),
                        column_index=rec["column"],
                        width=rec["w"],
                        height=rec["h"],
                        scribe=rec.get("scribe"),
                    )
                )
            elif kind == "annotation":
                ann = Annotation(
                    id=rec["id"],
                    column_id=_column_id_of(rec),
                    box=BBox(rec["x"], rec["y"], rec["w"], rec["h"]),
                    class_id=rec["class"],
                    origin=Origin(rec["origin"]),
                    status=Status(rec["status"]),
                    cycle=rec["cycle"],
                    confidence=rec.get("confidence"),
                    model_id=rec.get("model_id"),
                    timestamp=rec.get("timestamp"),
                )
                self._apply_annotation(ann)
            elif kind == "decision":
                new_box = None
                if rec["status"] == Status.ADJUSTED.value:
                    new_box = BBox(rec["x"], rec["y"], rec["w"], rec["h"])
                self._apply_decision(rec["id"], Status(rec["status"]), new_box)
            elif kind == "cycle":
                self._cycle_phases.append((rec["cycle"], rec["status"]))
            else:
                raise ValueError(f"unknown record type {kind!r} in log")

    # -- columns -------------------------------------------------------------

    def _apply_column(self, info: ColumnInfo) -> None:
        self._columns[info.column_id] = info

    def register_column(self, info: ColumnInfo) -> None:
        with self._lock:
            existing = self._columns.get(info.column_id)
            if existing == info:
                return
            self._apply_column(info)
            self._append(
                {
                    "record_type": "column",
                    "id": info.column_id,
                    "manuscript": info.manuscript,
                    "page": info.page_number,
                    "side": info.side.value,
                    "column": info.column_index,
                    "w": info.width,
                    "h": info.height,
                    "scribe": info.scribe,
                    "timestamp": _now(),
                }
            )

    def column(self, cid: str) -> ColumnInfo:
        with self._lock:
            try:
                return self._columns[cid]
            except KeyError:
                raise UnknownColumn(f"column {cid!r} is not registered") from None

    def has_column(self, cid: str) -> bool:
        with self._lock:
            return cid in self._columns

    def columns(
        self,
        manuscript: Optional[str] = None,
        scribe: Optional[str] = None,
        side: Optional[Side] = None,
    ) -> list[ColumnInfo]:
        with self._lock:
            out = [
                c
                for c in self._columns.values()
                if (manuscript is None or c.manuscript == manuscript)
                and (scribe is None or c.scribe == scribe)
                and (side is None or c.side == side)
            ]
        out.sort(key=lambda c: (c.manuscript, c.page_number, _SIDE_ORDER[c.side], c.column_index))
        return out

    # -- annotations -----------------------------------------------------------

    def _apply_annotation(self, ann: Annotation) -> None:
        if ann.id not in self._annotations:
            self._by_column.setdefault(ann.column_id, []).append(ann.id)
        self._annotations[ann.id] = ann
        seq = _id_seq(ann.id)
        if seq is not None and seq >= self._next_id:
            self._next_id = seq + 1

    def _check_unique_accepted(self, candidate: Annotation, skip_id: Optional[str]) -> None:
        for other_id in self._by_column.get(candidate.column_id, ()):
            other = self._annotations[other_id]
            if other.id == skip_id:
                continue
            if other.status in (Status.ACCEPTED, Status.ADJUSTED) and (
                other.effective_box == candidate.effective_box
                and other.class_id == candidate.class_id
            ):
                raise DuplicateAccepted(
                    f"column {candidate.column_id} already has an accepted box "
                    f"{candidate.effective_box} with class {candidate.class_id} ({other.id})"
                )

    def put_annotation(self, ann: Annotation) -> str:
        with self._lock:
            if ann.origin is not Origin.MANUAL and ann.status is not Status.PENDING:
                raise ValueError(f"{ann.origin.value} annotations must enter as pending")
            col = self.column(ann.column_id)
            ann.box.require_within(col.width, col.height)
            if ann.status in (Status.ACCEPTED, Status.ADJUSTED):
                self._check_unique_accepted(ann, skip_id=None)
            ann_id = ann.id or f"a{self._next_id}"
            if ann_id in self._annotations:
                raise ValueError(f"annotation id {ann_id!r} already present")
            stored = Annotation(
                id=ann_id,
                column_id=ann.column_id,
                box=ann.box,
                class_id=ann.class_id,
                origin=ann.origin,
                status=ann.status,
                cycle=ann.cycle,
                adjusted_box=ann.adjusted_box,
                confidence=ann.confidence,
                model_id=ann.model_id,
                timestamp=ann.timestamp or _now(),
            )
            self._apply_annotation(stored)
            self._append(
                {
                    "record_type": "annotation",
                    "id": stored.id,
                    "manuscript": col.manuscript,
                    "page": col.page_number,
                    "side": col.side.value,
                    "column": col.column_index,
                    "x": stored.box.x,
                    "y": stored.box.y,
                    "w": stored.box.w,
                    "h": stored.box.h,
                    "class": stored.class_id,
                    "origin": stored.origin.value,
                    "status": stored.status.value,
                    "cycle": stored.cycle,
                    "confidence": stored.confidence,
                    "model_id": stored.model_id,
                    "timestamp": stored.timestamp,
                }
            )
            return stored.id

    def get(self, ann_id: str) -> Annotation:
        with self._lock:
            try:
                return self._annotations[ann_id]
            except KeyError:
                raise UnknownId(f"no annotation with id {ann_id!r}") from None

    def _apply_decision(self, ann_id: str, status: Status, new_box: Optional[BBox]) -> Annotation:
        updated = self._annotations[ann_id].with_decision(status, new_box)
        self._annotations[ann_id] = updated
        return updated

    def decide(self, ann_id: str, decision: Decision) -> Annotation:
        with self._lock:
            ann = self.get(ann_id)
            target = decision.status
            if ann.status is not Status.PENDING:
                # repeating the identical decision is a no-op
                if ann.status is target and ann.adjusted_box == decision.new_box:
                    return ann
                raise AlreadyDecided(
                    f"annotation {ann_id} already {ann.status.value}; cannot {decision.action}"
                )
            col = self.column(ann.column_id)
            if decision.new_box is not None:
                decision.new_box.require_within(col.width, col.height)
            if target in (Status.ACCEPTED, Status.ADJUSTED):
                self._check_unique_accepted(
                    ann.with_decision(target, decision.new_box), skip_id=ann_id
                )
            updated = self._apply_decision(ann_id, target, decision.new_box)
            rec: dict = {
                "record_type": "decision",
                "id": ann_id,
                "status": target.value,
                "timestamp": _now(),
            }
            if decision.new_box is not None:
                rec.update(
                    x=decision.new_box.x,
                    y=decision.new_box.y,
                    w=decision.new_box.w,
                    h=decision.new_box.h,
                )
            self._append(rec)
            return updated

    def query(
        self,
        manuscript: Optional[str] = None,
        scribe: Optional[str] = None,
        status: Optional[Status] = None,
        class_id: Optional[int] = None,
        cycle: Optional[int] = None,
        origin: Optional[Origin] = None,
        column: Optional[str] = None,
    ) -> list[Annotation]:
        """Annotations matching all supplied filters, ordered by (page, column, y, x)."""
        with self._lock:
            cols = self._columns
            if column is not None:
                pool = [self._annotations[i] for i in self._by_column.get(column, ())]
            else:
                pool = self._annotations.values()
            out = []
            for ann in pool:
                info = cols[ann.column_id]
                if manuscript is not None and info.manuscript != manuscript:
                    continue
                if scribe is not None and info.scribe != scribe:
                    continue
                if status is not None and ann.status is not status:
                    continue
                if class_id is not None and ann.class_id != class_id:
                    continue
                if cycle is not None and ann.cycle != cycle:
                    continue
                if origin is not None and ann.origin is not origin:
                    continue
                if column is not None and ann.column_id != column:
                    continue
                out.append(ann)
        out.sort(
            key=lambda a: (
                cols[a.column_id].manuscript,
                cols[a.column_id].page_number,
                _SIDE_ORDER[cols[a.column_id].side],
                cols[a.column_id].column_index,
                a.effective_box.y,
                a.effective_box.x,
                _id_seq(a.id) or 0,
            )
        )
        return out

    def __len__(self) -> int:
        with self._lock:
            return len(self._annotations)

    # -- cycle phases ----------------------------------------------------------

    def put_cycle_phase(self, cycle: int, phase: str) -> None:
        with self._lock:
            self._cycle_phases.append((cycle, phase))
            self._append(
                {
                    "record_type": "cycle",
                    "cycle": cycle,
                    "status": phase,
                    "timestamp": _now(),
                }
            )

    def cycle_phases(self) -> list[tuple[int, str]]:
        with self._lock:
            return list(self._cycle_phases)

    # -- canonical state dump ----------------------------------------------------

    def serialize_state(self) -> str:
        """Canonical JSON dump of the current-state index (not the log)."""
        with self._lock:
            cols = [
                {
                    "id": c.column_id,
                    "manuscript": c.manuscript,
                    "page": c.page_number,
                    "side": c.side.value,
                    "column": c.column_index,
                    "w": c.width,
                    "h": c.height,
                    "scribe": c.scribe,
                }
                for c in sorted(self._columns.values(), key=lambda c: c.column_id)
            ]
            anns = []
            for a in sorted(self._annotations.values(), key=lambda a: _id_seq(a.id) or 0):
                entry = {
                    "id": a.id,
                    "column": a.column_id,
                    "x": a.box.x,
                    "y": a.box.y,
                    "w": a.box.w,
                    "h": a.box.h,
                    "class": a.class_id,
                    "origin": a.origin.value,
                    "status": a.status.value,
                    "cycle": a.cycle,
                    "confidence": a.confidence,
                    "model_id": a.model_id,
                    "timestamp": a.timestamp,
                }
                if a.adjusted_box is not None:
                    entry["adjusted"] = [
                        a.adjusted_box.x,
                        a.adjusted_box.y,
                        a.adjusted_box.w,
                        a.adjusted_box.h,
                    ]
                anns.append(entry)
            state = {"columns": cols, "annotations": anns, "cycles": self._cycle_phases}
        return json.dumps(state, separators=(",", ":"), sort_keys=False)

    def replay_copy(self) -> "AnnotationStore":
        """Fresh store built by replaying this store's log file."""
        if self._log_path is None:
            raise ValueError("store has no backing log to replay")
        if self._log_file is not None:
            self._log_file.flush()
        fresh = AnnotationStore()
        with self._log_path.open("r", encoding="utf-8") as fh:
            fresh._replay(fh)
        return fresh


def _column_id_of(rec: dict) -> str:
    side = Side(rec["side"])
    return f"{rec['manuscript']}_{rec['page']}{side.short}_c{rec['column']}"


def _id_seq(ann_id: Optional[str]) -> Optional[int]:
    if ann_id and ann_id[0] == "a" and ann_id[1:].isdigit():
        return int(ann_id[1:])
    return None
