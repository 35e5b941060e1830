"""Run a serialized detector over an image directory and write detections.

Output is one JSON record per line, matching the pipeline's detection
schema: column, x, y, w, h, class, confidence (4 decimals), model_id.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image


class ModelLoadError(Exception):
    pass


def _nms(dets: list[dict], iou_thresh: float) -> list[dict]:
    def iou(a, b):
        ix = min(a["x"] + a["w"], b["x"] + b["w"]) - max(a["x"], b["x"])
        iy = min(a["y"] + a["h"], b["y"] + b["h"]) - max(a["y"], b["y"])
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / (a["w"] * a["h"] + b["w"] * b["h"] - inter)

    kept: list[dict] = []
    for det in sorted(dets, key=lambda d: -d["confidence"]):
        if all(iou(det, other) < iou_thresh for other in kept):
            kept.append(det)
    kept.sort(key=lambda d: (d["y"], d["x"]))
    return kept


def load_runtime(artifact: Path) -> tuple[torch.jit.ScriptModule, dict]:
    artifact = Path(artifact)
    sidecar_path = artifact.with_suffix(".json")
    if not artifact.is_file() or not sidecar_path.is_file():
        raise ModelLoadError(f"missing artifact or sidecar for {artifact}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    if sorted(set(range(len(sidecar["class_names"])))) != [0, 1]:
        raise ModelLoadError("artifact must carry exactly the two glyph classes")
    try:
        runtime = torch.jit.load(str(artifact), map_location="cpu")
    except Exception as exc:
        raise ModelLoadError(f"cannot load {artifact}: {exc}") from exc
    runtime.eval()
    return runtime, sidecar


def _tiles(height: int, width: int, tile: int, overlap: int) -> list[tuple[int, int]]:
    step = max(1, tile - overlap)
    ys = list(range(0, max(height - tile, 0) + 1, step))
    if ys[-1] + tile < height:
        ys.append(height - tile)
    xs = list(range(0, max(width - tile, 0) + 1, step))
    if xs[-1] + tile < width:
        xs.append(width - tile)
    return [(y, x) for y in ys for x in xs]


def detect_image(
    runtime: torch.jit.ScriptModule,
    image: np.ndarray,
    input_size: int,
    conf_floor: float,
    nms_iou: float = 0.45,
    tile_overlap: int = 64,
) -> list[dict]:
    """Detections for one grayscale image (float [0,1]), in source pixels.

    Elongated rasters are tiled with overlapping squares of the short side,
    the same geometry the harness trains on, so glyphs keep their aspect.
    """
    height, width = image.shape
    tile = min(min(height, width), 2 * input_size)
    raw: list[dict] = []
    with torch.no_grad():
        for y0, x0 in _tiles(height, width, tile, tile_overlap):
            patch = image[y0 : y0 + tile, x0 : x0 + tile]
            ph, pw = patch.shape
            canvas = np.ones((tile, tile), dtype=np.float32)
            canvas[:ph, :pw] = patch
            scale = input_size / tile
            resized = Image.fromarray((canvas * 255).astype(np.uint8)).resize(
                (input_size, input_size), Image.BILINEAR
            )
            tensor = torch.from_numpy(np.asarray(resized, dtype=np.float32) / 255.0)
            boxes, scores, classes = runtime(tensor[None, None])
            for i in range(boxes.shape[0]):
                conf = float(scores[i])
                if conf < conf_floor:
                    continue
                bx, by, bw, bh = (float(v) / scale for v in boxes[i])
                x = int(round(bx)) + x0
                y = int(round(by)) + y0
                w = int(round(bw))
                h = int(round(bh))
                x = min(max(x, 0), width - 1)
                y = min(max(y, 0), height - 1)
                w = max(1, min(w, width - x))
                h = max(1, min(h, height - y))
                raw.append(
                    {
                        "x": x, "y": y, "w": w, "h": h,
                        "class": int(classes[i]),
                        "confidence": round(min(max(conf, 0.0), 1.0), 4),
                    }
                )
    return _nms(raw, nms_iou)


def detect(
    artifact: Path,
    images_dir: Path,
    out_path: Path,
    conf_floor: float = 0.25,
    nms_iou: float = 0.45,
) -> int:
    """Detect over every PNG in a directory; returns the record count."""
    runtime, sidecar = load_runtime(artifact)
    input_size = int(sidecar["input_size"])
    model_id = sidecar["model_id"]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with out_path.open("w", encoding="utf-8") as fh:
        for img_path in sorted(Path(images_dir).glob("*.png")):
            with Image.open(img_path) as im:
                image = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
            for det in detect_image(runtime, image, input_size, conf_floor, nms_iou):
                record = {
                    "column": img_path.stem,
                    "x": det["x"], "y": det["y"], "w": det["w"], "h": det["h"],
                    "class": det["class"],
                    "confidence": det["confidence"],
                    "model_id": model_id,
                }
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
                count += 1
    return count
