"""Fine-tune the glyph detector on an exported dataset and emit the
serialized model artifact, its sidecar metadata, and a training report."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import Dataset, Sample, load_dataset
from .model import (
    STRIDE,
    DetectorRuntime,
    GlyphDetector,
    focal_loss,
    gaussian_heatmaps,
)


@dataclass
class TrainConfig:
    manifest: Path
    out_dir: Path
    epochs: int = 18
    input_size: int = 192
    batch_size: int = 8
    learning_rate: float = 2e-3
    conf_floor: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.input_size % STRIDE != 0:
            raise ValueError(f"input_size must be a multiple of the stride {STRIDE}")
        if not 0.0 <= self.conf_floor <= 1.0:
            raise ValueError("conf_floor must lie in [0,1]")


@dataclass
class TrainReport:
    model_id: str
    epochs: list[dict] = field(default_factory=list)
    val_recall_iou50: float = 0.0
    determinism: str = "seeded; CPU math is deterministic for a fixed thread pool"
    config: dict = field(default_factory=dict)


def _scaled_window(
    sample: Sample, y0: int, x0: int, side: int, input_size: int
) -> tuple[torch.Tensor, list[tuple]]:
    patch = sample.image[y0 : y0 + side, x0 : x0 + side]
    img = Image.fromarray((patch * 255.0).astype(np.uint8))
    img = img.resize((input_size, input_size), Image.BILINEAR)
    tensor = torch.from_numpy(np.asarray(img, dtype=np.float32) / 255.0)
    scale = input_size / side
    instances = []
    for inst in sample.instances:
        cx, cy = inst.cx - x0, inst.cy - y0
        if not (0 <= cx < side and 0 <= cy < side):
            continue
        instances.append((inst.class_id, cx * scale, cy * scale, inst.w * scale, inst.h * scale))
    return tensor, instances


def _windows(sample: Sample, input_size: int) -> list[tuple[torch.Tensor, list[tuple]]]:
    """Square training windows matching the tiled inference geometry.

    Square images become one window; elongated rasters (column crops) are
    cut into overlapping squares of the short side so glyph aspect is never
    distorted.
    """
    src_h, src_w = sample.image.shape
    side = min(src_h, src_w)
    stride = max(1, side - side // 4)
    ys = list(range(0, max(src_h - side, 0) + 1, stride))
    if ys[-1] + side < src_h:
        ys.append(src_h - side)
    xs = list(range(0, max(src_w - side, 0) + 1, stride))
    if xs[-1] + side < src_w:
        xs.append(src_w - side)
    return [_scaled_window(sample, y0, x0, side, input_size) for y0 in ys for x0 in xs]


def _iou(a: tuple, b: tuple) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def evaluate_recall(
    runtime: DetectorRuntime,
    samples: list[tuple[torch.Tensor, list[tuple]]],
    conf_floor: float,
) -> float:
    """Recall at IoU 0.5 against the (resized) ground truth."""
    runtime.eval()
    matched = total = 0
    with torch.no_grad():
        for tensor, instances in samples:
            boxes, scores, _ = runtime(tensor[None, None])
            dets = [
                tuple(float(v) for v in boxes[i])
                for i in range(boxes.shape[0])
                if float(scores[i]) >= conf_floor
            ]
            gts = [(cx - w / 2, cy - h / 2, w, h) for _, cx, cy, w, h in instances]
            used = [False] * len(gts)
            for det in dets:
                best, best_iou = -1, 0.0
                for gi, gt in enumerate(gts):
                    if used[gi]:
                        continue
                    v = _iou(det, gt)
                    if v > best_iou:
                        best_iou, best = v, gi
                if best >= 0 and best_iou >= 0.5:
                    used[best] = True
                    matched += 1
            total += len(gts)
    return matched / total if total else 0.0


def train(cfg: TrainConfig) -> tuple[Path, TrainReport]:
    """Train on the manifest's train split and serialize the runtime.

    Returns the artifact path; the sidecar (artifact path with .json) and
    report.json land next to it in cfg.out_dir.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    dataset: Dataset = load_dataset(cfg.manifest)

    train_samples = [w for s in dataset.train for w in _windows(s, cfg.input_size)]
    val_samples = [w for s in dataset.val for w in _windows(s, cfg.input_size)]
    grid = cfg.input_size // STRIDE

    net = GlyphDetector()
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    report = TrainReport(model_id="", config={**asdict(cfg), "manifest": str(cfg.manifest),
                                              "out_dir": str(cfg.out_dir)})

    net.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_samples))
        total_loss = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = torch.stack([train_samples[i][0] for i in idx])[:, None]
            heat_t, size_t, off_t, mask = gaussian_heatmaps(
                [train_samples[i][1] for i in idx], grid
            )
            heat, size, offset = net(x)
            n = mask.sum().clamp(min=1.0)
            loss = (
                focal_loss(heat, heat_t)
                + 0.1 * (torch.abs(size - size_t) * mask).sum() / n
                + (torch.abs(offset - off_t) * mask).sum() / n
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += float(loss.detach())
            batches += 1
        report.epochs.append({"epoch": epoch + 1, "loss": round(total_loss / max(batches, 1), 6)})

    runtime = DetectorRuntime(net)
    runtime.eval()
    report.val_recall_iou50 = round(
        evaluate_recall(runtime, val_samples or train_samples, cfg.conf_floor), 6
    )

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifact = out_dir / "detector.pt"
    scripted = torch.jit.script(runtime)
    scripted.save(str(artifact))

    model_id = "sha256:" + hashlib.sha256(artifact.read_bytes()).hexdigest()[:16]
    manifest_hash = "sha256:" + hashlib.sha256(dataset.manifest_bytes).hexdigest()[:16]
    report.model_id = model_id
    sidecar = {
        "model_id": model_id,
        "class_names": dataset.class_names,
        "manifest_hash": manifest_hash,
        "input_size": cfg.input_size,
        "stride": STRIDE,
        "conf_floor": cfg.conf_floor,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
    }
    artifact.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    (out_dir / "report.json").write_text(
        json.dumps(
            {
                "model_id": report.model_id,
                "epochs": report.epochs,
                "val_recall_iou50": report.val_recall_iou50,
                "determinism": report.determinism,
                "config": report.config,
            },
            indent=2,
        )
        + "\n"
    )
    return artifact, report
