"""Synthetic manuscript corpus for exercising the pipeline end to end.

Generates page scans with planted glyphs from two artificial scribes whose
letterforms differ (a round hand and an angular hand), parchment-toned
backgrounds, and red ornaments that preprocessing must wipe out. Ground
truth (column-local boxes with class ids) is written alongside so tests can
score template matching and detector output.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .config import ManuscriptConfig, PageEntry, RedRule, RoiConfig, save_manuscript_config
from .matching import Template, save_template
from .model import BBox, DetectionRecord, Layout, Side, column_id

PAGE_W, PAGE_H = 600, 820
ROIS = (BBox(40, 50, 240, 720), BBox(320, 50, 240, 720))
INK_LEVEL = 42
PARCHMENT_LEVEL = (222, 212, 188)
RED_LEVEL = (195, 32, 36)


def round_hand_glyph() -> np.ndarray:
    """Target scribe's letterform: a bowl joined to a right-hand stem."""
    h, w = 26, 22
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot(yy - 16.0, xx - 8.0)
    mask = (r <= 7.5) & (r >= 4.5)
    mask[2 : h - 2, 16:20] = True
    mask[20:23, 8:17] = True
    return mask


def angular_hand_glyph() -> np.ndarray:
    """Other scribe's letterform: a diamond outline with a crossbar."""
    h, w = 26, 22
    yy, xx = np.mgrid[0:h, 0:w]
    d = np.abs(yy - 13.0) + np.abs(xx - 10.0)
    mask = (d <= 11.0) & (d >= 8.0)
    mask[12:15, 4:18] = True
    return mask


def glyph_template(mask: np.ndarray, scribe: str, class_id: int, name: str) -> Template:
    pixels = np.where(mask, 0, 255).astype(np.uint8)
    return Template(pixels=pixels, scribe=scribe, class_id=class_id, name=name)


@dataclass
class SyntheticCorpus:
    root: Path
    config: ManuscriptConfig
    config_path: Path
    pages_dir: Path
    templates_dir: Path
    truth: dict[str, list[tuple[BBox, int]]]  # column id -> planted boxes

    def truth_for(self, cid: str) -> list[tuple[BBox, int]]:
        return self.truth.get(cid, [])


def _plant_positions(rng: np.random.Generator, roi: BBox, gh: int, gw: int) -> list[tuple[int, int]]:
    """Non-overlapping jittered grid positions in ROI-local coordinates."""
    positions = []
    step_y, step_x = gh + 18, gw + 30
    for gy in range(14, roi.h - gh - 14, step_y):
        for gx in range(12, roi.w - gw - 12, step_x):
            if rng.random() < 0.7:
                jy = int(rng.integers(-4, 5))
                jx = int(rng.integers(-6, 7))
                positions.append((gy + jy, gx + jx))
    return positions


def _stamp(ink: np.ndarray, mask: np.ndarray, y: int, x: int, rng: np.random.Generator) -> None:
    ys, xs = np.nonzero(mask)
    keep = rng.random(len(ys)) > 0.02  # small dropout keeps strokes imperfect
    ink[ys[keep] + y, xs[keep] + x] = True


def generate_corpus(
    root: Path,
    leaves: int = 30,
    seed: int = 7,
    name: str = "synthetica",
    target_scribe: str = "B",
    other_scribe: str = "C",
) -> SyntheticCorpus:
    """Write a synthetic manuscript under `root`.

    Recto sides belong to the target scribe (class-1 glyphs); verso sides
    alternate between the target and the other hand (class-0 glyphs), so
    recto columns make a clean training pool and verso columns a mixed
    inference pool.
    """
    rng = np.random.default_rng(seed)
    root = Path(root)
    pages_dir = root / "pages"
    pages_dir.mkdir(parents=True, exist_ok=True)

    target_mask = round_hand_glyph()
    other_mask = angular_hand_glyph()
    truth: dict[str, list[tuple[BBox, int]]] = {}
    page_entries: dict[str, PageEntry] = {}

    for leaf in range(1, leaves + 1):
        for side in (Side.RECTO, Side.VERSO):
            if side is Side.RECTO:
                scribe = target_scribe
            else:
                scribe = target_scribe if leaf % 2 == 1 else other_scribe
            page_entries[f"{leaf}{side.short}"] = PageEntry(scribe=scribe)
            mask = target_mask if scribe == target_scribe else other_mask
            class_id = 1 if scribe == target_scribe else 0
            gh, gw = mask.shape

            ink = np.zeros((PAGE_H, PAGE_W), dtype=bool)
            red = np.zeros((PAGE_H, PAGE_W), dtype=bool)
            for col_index, roi in enumerate(ROIS):
                cid = column_id(name, leaf, side, col_index)
                boxes: list[tuple[BBox, int]] = []
                for gy, gx in _plant_positions(rng, roi, gh, gw):
                    _stamp(ink, mask, roi.y + gy, roi.x + gx, rng)
                    boxes.append((BBox(gx, gy, gw, gh), class_id))
                truth[cid] = boxes
                # red ornament at the head of each column
                oy, ox = roi.y + 2, roi.x + roi.w // 2 - 12
                red[oy : oy + 9, ox : ox + 24] = True

            base = np.array(PARCHMENT_LEVEL, dtype=np.float64)
            page = base + rng.normal(0.0, 6.0, size=(PAGE_H, PAGE_W, 3))
            ink_shade = INK_LEVEL + rng.normal(0.0, 5.0, size=(PAGE_H, PAGE_W))
            for ch in range(3):
                channel = page[..., ch]
                channel[ink] = ink_shade[ink]
                channel[red] = RED_LEVEL[ch] + rng.normal(0.0, 4.0, size=int(red.sum()))
            raster = np.clip(page, 0, 255).astype(np.uint8)
            Image.fromarray(raster, mode="RGB").save(pages_dir / f"{name}_{leaf}{side.short}.png")

    config = ManuscriptConfig(
        name=name,
        page_width=PAGE_W,
        page_height=PAGE_H,
        scribes=(target_scribe, other_scribe),
        layouts={
            Layout.TWO_COLUMN: RoiConfig(manuscript=name, layout=Layout.TWO_COLUMN, rois=ROIS)
        },
        red_rule=RedRule(),
        pages=page_entries,
    )
    config_path = root / "manuscripts" / f"{name}.yaml"
    save_manuscript_config(config, config_path)

    templates_dir = root / "templates"
    save_template(
        glyph_template(target_mask, target_scribe, 1, f"{name}-{target_scribe}-round"),
        templates_dir,
    )
    save_template(
        glyph_template(other_mask, other_scribe, 0, f"{name}-{other_scribe}-angular"),
        templates_dir,
    )

    truth_doc = {
        cid: [{"x": b.x, "y": b.y, "w": b.w, "h": b.h, "class": c} for b, c in boxes]
        for cid, boxes in truth.items()
    }
    (root / "truth.json").write_text(json.dumps(truth_doc, indent=1), encoding="utf-8")
    return SyntheticCorpus(
        root=root,
        config=config,
        config_path=config_path,
        pages_dir=pages_dir,
        templates_dir=templates_dir,
        truth=truth,
    )


def load_truth(root: Path) -> dict[str, list[tuple[BBox, int]]]:
    raw = json.loads((Path(root) / "truth.json").read_text(encoding="utf-8"))
    return {
        cid: [(BBox(e["x"], e["y"], e["w"], e["h"]), e["class"]) for e in entries]
        for cid, entries in raw.items()
    }


def scripted_detections(
    corpus: SyntheticCorpus,
    column_ids: list[str],
    model_id: str = "scripted-oracle",
    seed: int = 11,
) -> list[DetectionRecord]:
    """Detections derived from planted truth, with style-dependent confidence.

    Target-hand glyphs receive high confidences, other-hand glyphs low ones,
    mimicking a detector specialized on the target letterforms.
    """
    rng = np.random.default_rng(seed)
    records = []
    for cid in column_ids:
        for box, class_id in corpus.truth_for(cid):
            if class_id == 1:
                conf = float(rng.uniform(0.84, 0.97))
            else:
                conf = float(rng.uniform(0.45, 0.72))
            records.append(
                DetectionRecord(
                    column_id=cid,
                    box=box,
                    class_id=class_id,
                    confidence=round(conf, 4),
                    model_id=model_id,
                )
            )
    return records


# -- standalone detector dataset -----------------------------------------------------


def generate_detector_dataset(
    root: Path,
    n_train_images: int = 200,
    n_holdout_images: int = 20,
    image_size: int = 256,
    seed: int = 3,
) -> Path:
    """Planted-glyph dataset in the exported training layout, plus a holdout set.

    Writes `root/dataset/{manifest.json,images/{train,val},labels/{train,val}}`
    and `root/holdout/{images,truth.json}` with binarized-column-style rasters
    (ink 0 on background 255).
    """
    from .dataset import DatasetManifest, stable_val_split, write_labels
    from .model import Annotation, Origin, Status

    rng = np.random.default_rng(seed)
    root = Path(root)
    ds = root / "dataset"
    masks = {1: round_hand_glyph(), 0: angular_hand_glyph()}

    def make_image(idx: int) -> tuple[np.ndarray, list[tuple[BBox, int]]]:
        img = np.full((image_size, image_size), 255, dtype=np.uint8)
        ink = np.zeros_like(img, dtype=bool)
        boxes: list[tuple[BBox, int]] = []
        for gy in range(8, image_size - 40, 44):
            for gx in range(8, image_size - 36, 52):
                if rng.random() < 0.6:
                    class_id = int(rng.random() < 0.5)
                    mask = masks[class_id]
                    gh, gw = mask.shape
                    y = gy + int(rng.integers(0, 9))
                    x = gx + int(rng.integers(0, 13))
                    if y + gh >= image_size or x + gw >= image_size:
                        continue
                    _stamp(ink, mask, y, x, rng)
                    boxes.append((BBox(x, y, gw, gh), class_id))
        # stray specks the detector must ignore
        for _ in range(20):
            sy, sx = rng.integers(0, image_size, 2)
            ink[sy, sx] = True
        img[ink] = 0
        return img, boxes

    def write_split(ids: list[str], images: dict[str, np.ndarray], labels: dict[str, str], role: str):
        (ds / "images" / role).mkdir(parents=True, exist_ok=True)
        (ds / "labels" / role).mkdir(parents=True, exist_ok=True)
        for cid in ids:
            Image.fromarray(images[cid], mode="L").save(ds / "images" / role / f"{cid}.png")
            (ds / "labels" / role / f"{cid}.txt").write_text(labels[cid], encoding="utf-8")

    images: dict[str, np.ndarray] = {}
    labels: dict[str, str] = {}
    ids = []
    for i in range(n_train_images):
        cid = f"glyphs_{i + 1}r_c0"
        img, boxes = make_image(i)
        anns = [
            Annotation(
                column_id=cid, box=b, class_id=c, origin=Origin.MANUAL, status=Status.ACCEPTED
            )
            for b, c in boxes
        ]
        images[cid] = img
        labels[cid] = write_labels(anns, image_size, image_size)
        ids.append(cid)

    train_ids, val_ids = stable_val_split(ids)
    write_split(train_ids, images, labels, "train")
    write_split(val_ids, images, labels, "val")
    DatasetManifest(
        cycle=1, train_columns=train_ids, val_columns=val_ids, inference_columns=[]
    ).save(ds / "manifest.json")

    holdout = root / "holdout"
    (holdout / "images").mkdir(parents=True, exist_ok=True)
    truth_doc = {}
    for i in range(n_holdout_images):
        cid = f"holdout_{i + 1}r_c0"
        img, boxes = make_image(n_train_images + i)
        Image.fromarray(img, mode="L").save(holdout / "images" / f"{cid}.png")
        truth_doc[cid] = [
            {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "class": c} for b, c in boxes
        ]
    (holdout / "truth.json").write_text(json.dumps(truth_doc, indent=1), encoding="utf-8")
    return ds
