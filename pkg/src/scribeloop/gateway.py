"""Detector boundary: ingest external detection files, filter by confidence,
and (optionally) run an embedded serialized model over column rasters.

Embedded inference is a feature switch: it needs the optional torch
dependency and a TorchScript artifact produced by the training harness.
The pipeline is fully usable with external detection files alone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import read_detections
from .errors import InferenceError, MalformedRecord, ModelLoadError, UnknownColumn
from .matching import nms
from .model import Annotation, BBox, ColumnImage, DetectionRecord, Origin, Status
from .store import AnnotationStore

# tile overlap covers two stacked glyphs so no instance is cut twice
DEFAULT_TILE_OVERLAP = 96


class DetectorKind(str, Enum):
    EXTERNAL_FILE = "external_file"
    EMBEDDED_MODEL = "embedded_model"


@dataclass
class DetectorHandle:
    kind: DetectorKind
    model_id: str
    source: Path

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")


def load_detector(artifact_path: Path) -> DetectorHandle:
    """Open an embedded-model handle from a serialized artifact + sidecar."""
    artifact_path = Path(artifact_path)
    if not artifact_path.is_file():
        raise ModelLoadError(f"model artifact {artifact_path} is not readable")
    sidecar = artifact_path.with_suffix(".json")
    if not sidecar.is_file():
        raise ModelLoadError(f"missing sidecar metadata {sidecar}")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    return DetectorHandle(
        kind=DetectorKind.EMBEDDED_MODEL,
        model_id=meta["model_id"],
        source=artifact_path,
    )


def ingest(
    store: AnnotationStore,
    source: Union[Path, str, Sequence[DetectionRecord]],
    cycle: int = 0,
) -> list[str]:
    """Validate detections and record them as pending detector annotations.

    Every record must reference a registered column, carry class 0/1, a
    confidence in [0,1], and a box inside the column raster.
    """
    if isinstance(source, (str, Path)):
        records = read_detections(Path(source))
    else:
        records = list(source)
    ids = []
    for rec in records:
        if not store.has_column(rec.column_id):
            raise UnknownColumn(f"detection references unknown column {rec.column_id!r}")
        info = store.column(rec.column_id)
        rec.box.require_within(info.width, info.height)
        ids.append(
            store.put_annotation(
                Annotation(
                    column_id=rec.column_id,
                    box=rec.box,
                    class_id=rec.class_id,
                    origin=Origin.DETECTOR,
                    status=Status.PENDING,
                    cycle=cycle,
                    confidence=rec.confidence,
                    model_id=rec.model_id,
                )
            )
        )
    return ids


def filter_by_confidence(
    records: Sequence[DetectionRecord], tau: float
) -> list[DetectionRecord]:
    """Records with confidence >= tau, order preserved."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0,1], got {tau}")
    return [r for r in records if r.confidence >= tau]


# -- embedded inference -------------------------------------------------------------


def _load_torch_module(path: Path):
    try:
        import torch
    except ImportError:
        raise ModelLoadError(
            "embedded inference requires the optional torch dependency"
        ) from None
    try:
        module = torch.jit.load(str(path), map_location="cpu")
    except Exception as exc:
        raise ModelLoadError(f"cannot load model artifact {path}: {exc}") from exc
    module.eval()
    return module


def _tiles(height: int, width: int, tile: int, overlap: int) -> list[tuple[int, int]]:
    """Top-left corners of square tiles covering a raster, with overlap."""
    step = max(1, tile - overlap)
    ys = list(range(0, max(height - tile, 0) + 1, step))
    if ys[-1] + tile < height:
        ys.append(height - tile)
    xs = list(range(0, max(width - tile, 0) + 1, step))
    if xs[-1] + tile < width:
        xs.append(width - tile)
    return [(y, x) for y in ys for x in xs]


def infer(
    handle: DetectorHandle,
    column: ColumnImage,
    conf_floor: float = 0.25,
    nms_iou: float = 0.45,
    tile_overlap: int = DEFAULT_TILE_OVERLAP,
) -> list[DetectionRecord]:
    """Run the embedded model over one column with tiled sliding windows.

    Tall rasters are processed as overlapping square tiles sized by the
    model input; per-tile boxes are shifted back to column coordinates,
    clipped, and merged with NMS.
    """
    if handle.kind is not DetectorKind.EMBEDDED_MODEL:
        raise ModelLoadError("infer requires an embedded_model handle")
    if column.pixels.size == 0:
        raise InferenceError(f"column {column.column_id} raster is empty")
    module = _load_torch_module(handle.source)
    import torch

    meta = json.loads(Path(handle.source).with_suffix(".json").read_text(encoding="utf-8"))
    input_size = int(meta.get("input_size", 256))

    raster = np.asarray(column.pixels, dtype=np.float32)
    if raster.ndim == 3:
        raster = raster.mean(axis=2)
    height, width = raster.shape
    tile = min(input_size, max(height, width))

    records: list[DetectionRecord] = []
    with torch.no_grad():
        for y0, x0 in _tiles(height, width, tile, tile_overlap):
            patch = raster[y0 : y0 + tile, x0 : x0 + tile]
            ph, pw = patch.shape
            canvas = np.full((tile, tile), 255.0, dtype=np.float32)
            canvas[:ph, :pw] = patch
            scale = input_size / tile
            tensor = torch.from_numpy(canvas / 255.0)[None, None]
            if input_size != tile:
                tensor = torch.nn.functional.interpolate(
                    tensor, size=(input_size, input_size), mode="bilinear", align_corners=False
                )
            try:
                boxes, scores, classes = module(tensor)
            except Exception as exc:
                raise InferenceError(f"model forward failed: {exc}") from exc
            for k in range(boxes.shape[0]):
                conf = float(scores[k])
                if conf < conf_floor:
                    continue
                bx, by, bw, bh = (float(v) / scale for v in boxes[k])
                x = int(round(bx)) + x0
                y = int(round(by)) + y0
                w = int(round(bw))
                h = int(round(bh))
                x = min(max(x, 0), width - 1)
                y = min(max(y, 0), height - 1)
                w = max(1, min(w, width - x))
                h = max(1, min(h, height - y))
                records.append(
                    DetectionRecord(
                        column_id=column.column_id,
                        box=BBox(x, y, w, h),
                        class_id=int(classes[k]),
                        confidence=min(max(conf, 0.0), 1.0),
                        model_id=handle.model_id,
                    )
                )
    return nms(records, nms_iou)
