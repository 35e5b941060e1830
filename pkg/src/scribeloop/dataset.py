"""Training-data serialization: label files, detection files, cycle manifests.

Label files hold one `class cx cy w h` line per box, center-format and
normalized by image dimensions, 6 decimal places. Detection files hold one
JSON record per line (column, x, y, w, h, class, confidence, model_id) with
confidence at 4 decimals. All text is UTF-8 with LF line endings.

Dataset directory layout:

    dataset/
      manifest.json
      images/train/  images/val/   (column PNGs)
      labels/train/  labels/val/   (one .txt per column, may be empty)
"""
from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import (
    ConfidenceOutOfRange,
    MalformedLine,
    MalformedRecord,
    OverlapError,
    UndecidedAnnotation,
)
from .model import Annotation, BBox, DetectionRecord, Side, Status
from .store import AnnotationStore

CLASS_NAMES = ("other", "target")
VAL_HASH_BUCKETS = 10  # stable-hash bucket 0 of 10 -> validation split


def write_labels(annotations: Sequence[Annotation], img_w: int, img_h: int) -> str:
    """Serialize accepted/adjusted annotations for one column image."""
    rows = []
    for ann in annotations:
        if ann.status not in (Status.ACCEPTED, Status.ADJUSTED):
            raise UndecidedAnnotation(
                f"annotation {ann.id or '?'} is {ann.status.value}; labels take accepted/adjusted only"
            )
        box = ann.effective_box
        box.require_within(img_w, img_h)
        rows.append((box.y, box.x, ann.class_id, box))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = []
    for _, _, class_id, box in rows:
        cx = (box.x + box.w / 2) / img_w
        cy = (box.y + box.h / 2) / img_h
        w = box.w / img_w
        h = box.h / img_h
        lines.append(f"{class_id} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_labels(text: str, img_w: int, img_h: int) -> list[tuple[int, BBox]]:
    """Invert write_labels; recovered pixel boxes are within 1 px per coordinate."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise MalformedLine(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError:
            raise MalformedLine(f"line {lineno}: non-numeric field") from None
        if class_id not in (0, 1):
            raise MalformedLine(f"line {lineno}: unknown class {class_id}")
        for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
            if not 0.0 <= v <= 1.0:
                raise MalformedLine(f"line {lineno}: {name}={v} outside [0,1]")
        pw = max(1, round(w * img_w))
        ph = max(1, round(h * img_h))
        px = round(cx * img_w - pw / 2)
        py = round(cy * img_h - ph / 2)
        px = min(max(px, 0), img_w - pw)
        py = min(max(py, 0), img_h - ph)
        out.append((class_id, BBox(px, py, pw, ph)))
    return out


# -- detection files ---------------------------------------------------------------


def format_detection(rec: DetectionRecord) -> str:
    return json.dumps(
        {
            "column": rec.column_id,
            "x": rec.box.x,
            "y": rec.box.y,
            "w": rec.box.w,
            "h": rec.box.h,
            "class": rec.class_id,
            "confidence": round(rec.confidence, 4),
            "model_id": rec.model_id,
        },
        separators=(",", ":"),
    )


def write_detections(records: Sequence[DetectionRecord], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(format_detection(rec) + "\n")


def parse_detections(text: str) -> list[DetectionRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError:
            raise MalformedRecord(f"line {lineno}: not valid JSON") from None
        try:
            column = raw["column"]
            box = BBox(int(raw["x"]), int(raw["y"]), int(raw["w"]), int(raw["h"]))
            class_id = int(raw["class"])
            confidence = float(raw["confidence"])
            model_id = str(raw["model_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from None
        if class_id not in (0, 1):
            raise MalformedRecord(f"line {lineno}: class {class_id} outside {{0,1}}")
        if not 0.0 <= confidence <= 1.0:
            raise ConfidenceOutOfRange(f"line {lineno}: confidence {confidence} outside [0,1]")
        records.append(
            DetectionRecord(
                column_id=column, box=box, class_id=class_id, confidence=confidence, model_id=model_id
            )
        )
    return records


def read_detections(path: Path) -> list[DetectionRecord]:
    return parse_detections(Path(path).read_text(encoding="utf-8"))


# -- cycle manifests ------------------------------------------------------------------


@dataclass(frozen=True)
class PageWindow:
    """Selects columns of a window of matching pages, in page order.

    The window skips the first `skip` matching pages and then takes `pages`
    of them (all remaining when `pages` is None).
    """

    sides: tuple[Side, ...] = (Side.RECTO,)
    scribe: Optional[str] = None
    pages: Optional[int] = None
    skip: int = 0


Selector = Union[PageWindow, Sequence[str], str]


@dataclass
class CycleSpec:
    """Column roles for one annotation cycle.

    `inference` may be the string "remainder" to select every registered
    column not already claimed for training.
    """

    cycle: int
    train: Selector
    inference: Selector = ()
    val_fraction: float = 0.10
    manuscript: Optional[str] = None


@dataclass
class DatasetManifest:
    cycle: int
    train_columns: list[str]
    val_columns: list[str]
    inference_columns: list[str]
    class_names: tuple[str, ...] = CLASS_NAMES

    def __post_init__(self) -> None:
        roles = (set(self.train_columns), set(self.val_columns), set(self.inference_columns))
        names = ("train", "val", "inference")
        for i in range(3):
            for j in range(i + 1, 3):
                both = roles[i] & roles[j]
                if both:
                    raise OverlapError(
                        f"columns {sorted(both)[:5]} appear in both {names[i]} and {names[j]}"
                    )

    @property
    def training_set(self) -> list[str]:
        """Every column exported for training (train plus held-out val)."""
        return self.train_columns + self.val_columns

    def to_json(self) -> str:
        return json.dumps(
            {
                "cycle": self.cycle,
                "class_names": list(self.class_names),
                "train_columns": self.train_columns,
                "val_columns": self.val_columns,
                "inference_columns": self.inference_columns,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        return cls(
            cycle=raw["cycle"],
            train_columns=list(raw["train_columns"]),
            val_columns=list(raw["val_columns"]),
            inference_columns=list(raw["inference_columns"]),
            class_names=tuple(raw["class_names"]),
        )

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")


def stable_val_split(column_ids: Sequence[str]) -> tuple[list[str], list[str]]:
    """Deterministic ~10% validation split by hashing each column id."""
    train, val = [], []
    for cid in column_ids:
        bucket = int.from_bytes(hashlib.sha1(cid.encode("utf-8")).digest()[:4], "big")
        (val if bucket % VAL_HASH_BUCKETS == 0 else train).append(cid)
    return train, val


def _resolve(
    store: AnnotationStore,
    selector: Selector,
    manuscript: Optional[str],
    claimed: set[str],
) -> list[str]:
    if isinstance(selector, str):
        if selector != "remainder":
            raise ValueError(f"unknown selector {selector!r}")
        return [c.column_id for c in store.columns(manuscript=manuscript) if c.column_id not in claimed]
    if isinstance(selector, PageWindow):
        cols = [
            c
            for c in store.columns(manuscript=manuscript, scribe=selector.scribe)
            if c.side in selector.sides
        ]
        if selector.skip or selector.pages is not None:
            pages = sorted({(c.page_number, c.side) for c in cols}, key=lambda p: (p[0], p[1].value))
            stop = None if selector.pages is None else selector.skip + selector.pages
            window = set(pages[selector.skip : stop])
            cols = [c for c in cols if (c.page_number, c.side) in window]
        return [c.column_id for c in cols]
    return list(selector)


def build_manifest(store: AnnotationStore, spec: CycleSpec) -> DatasetManifest:
    """Resolve a cycle spec into disjoint train/val/inference column sets."""
    train_ids = _resolve(store, spec.train, spec.manuscript, claimed=set())
    inference_ids = _resolve(store, spec.inference, spec.manuscript, claimed=set(train_ids))
    overlap = set(train_ids) & set(inference_ids)
    if overlap:
        raise OverlapError(f"columns {sorted(overlap)[:5]} selected for both train and inference")
    if spec.val_fraction > 0:
        train, val = stable_val_split(train_ids)
    else:
        train, val = list(train_ids), []
    return DatasetManifest(
        cycle=spec.cycle,
        train_columns=train,
        val_columns=val,
        inference_columns=inference_ids,
    )


def export_dataset(
    store: AnnotationStore,
    manifest: DatasetManifest,
    columns_dir: Path,
    out_dir: Path,
) -> dict[str, int]:
    """Write the dataset directory for one cycle: images, labels, manifest.

    Labels cover the accepted/adjusted annotations on each training-set
    column; columns without any yield an empty label file.
    """
    columns_dir = Path(columns_dir)
    out_dir = Path(out_dir)
    counts = {"columns": 0, "boxes": 0}
    for role, ids in (("train", manifest.train_columns), ("val", manifest.val_columns)):
        img_dir = out_dir / "images" / role
        lbl_dir = out_dir / "labels" / role
        img_dir.mkdir(parents=True, exist_ok=True)
        lbl_dir.mkdir(parents=True, exist_ok=True)
        for cid in ids:
            src = columns_dir / f"{cid}.png"
            shutil.copyfile(src, img_dir / f"{cid}.png")
            info = store.column(cid)
            anns = [
                a
                for a in store.query(column=cid)
                if a.status in (Status.ACCEPTED, Status.ADJUSTED)
            ]
            (lbl_dir / f"{cid}.txt").write_text(
                write_labels(anns, info.width, info.height), encoding="utf-8"
            )
            counts["columns"] += 1
            counts["boxes"] += len(anns)
    manifest.save(out_dir / "manifest.json")
    return counts
