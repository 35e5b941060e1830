"""Dataset directory access for the exported training layout.

Reads manifest.json plus images/{train,val} and labels/{train,val}. Labels
are normalized center-format lines "class cx cy w h". The harness talks to
the annotation pipeline only through these files.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class DatasetInconsistent(Exception):
    pass


@dataclass(frozen=True)
class Instance:
    class_id: int
    cx: float  # center x in source pixels
    cy: float
    w: float
    h: float


@dataclass
class Sample:
    name: str
    image: np.ndarray  # float32 HxW in [0, 1]
    instances: list[Instance]


@dataclass
class Dataset:
    root: Path
    class_names: list[str]
    train: list[Sample]
    val: list[Sample]
    manifest_bytes: bytes


def parse_label_text(text: str, img_w: int, img_h: int, source: str) -> list[Instance]:
    instances = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise DatasetInconsistent(f"{source}:{lineno}: expected 5 fields")
        class_id = int(parts[0])
        if class_id not in (0, 1):
            raise DatasetInconsistent(f"{source}:{lineno}: class {class_id} outside {{0,1}}")
        cx, cy, w, h = (float(p) for p in parts[1:])
        instances.append(
            Instance(class_id=class_id, cx=cx * img_w, cy=cy * img_h, w=w * img_w, h=h * img_h)
        )
    return instances


def _load_split(root: Path, role: str, ids: list[str]) -> list[Sample]:
    samples = []
    for name in ids:
        img_path = root / "images" / role / f"{name}.png"
        lbl_path = root / "labels" / role / f"{name}.txt"
        if not img_path.is_file():
            raise DatasetInconsistent(f"label without image: {name} ({role})")
        if not lbl_path.is_file():
            raise DatasetInconsistent(f"image without label: {name} ({role})")
        with Image.open(img_path) as im:
            image = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
        h, w = image.shape
        instances = parse_label_text(lbl_path.read_text(encoding="utf-8"), w, h, lbl_path.name)
        samples.append(Sample(name=name, image=image, instances=instances))
    return samples


def load_dataset(manifest_path: Path) -> Dataset:
    manifest_path = Path(manifest_path)
    raw_bytes = manifest_path.read_bytes()
    manifest = json.loads(raw_bytes)
    root = manifest_path.parent
    for stray in (root / "labels" / "train").glob("*.txt"):
        if not (root / "images" / "train" / f"{stray.stem}.png").is_file():
            raise DatasetInconsistent(f"label without image: {stray.stem} (train)")
    return Dataset(
        root=root,
        class_names=list(manifest["class_names"]),
        train=_load_split(root, "train", manifest["train_columns"]),
        val=_load_split(root, "val", manifest["val_columns"]),
        manifest_bytes=raw_bytes,
    )
