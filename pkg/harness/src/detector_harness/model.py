"""Compact center-point glyph detector and its serializable runtime.

The backbone downsamples by 8 and predicts per-cell class heatmaps, box
sizes and sub-cell center offsets. `DetectorRuntime` bundles the network
with peak decoding so the exported TorchScript artifact maps an input tile
straight to (boxes, scores, classes).
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

STRIDE = 8
NUM_CLASSES = 2
TOPK = 100


class GlyphDetector(nn.Module):
    def __init__(self, channels: tuple[int, int, int] = (8, 16, 32)):
        super().__init__()
        c1, c2, c3 = channels
        self.body = nn.Sequential(
            nn.Conv2d(1, c1, 3, stride=2, padding=1),
            nn.BatchNorm2d(c1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.BatchNorm2d(c2),
            nn.ReLU(inplace=True),
            nn.Conv2d(c2, c3, 3, stride=2, padding=1),
            nn.BatchNorm2d(c3),
            nn.ReLU(inplace=True),
            nn.Conv2d(c3, c3, 3, stride=1, padding=1),
            nn.BatchNorm2d(c3),
            nn.ReLU(inplace=True),
        )
        self.heat = nn.Conv2d(c3, NUM_CLASSES, 1)
        self.size = nn.Conv2d(c3, 2, 1)
        self.offset = nn.Conv2d(c3, 2, 1)
        # bias the heatmap toward "background" so early training is stable
        nn.init.constant_(self.heat.bias, -2.19)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        f = self.body(x)
        return self.heat(f), self.size(f), self.offset(f)


class DetectorRuntime(nn.Module):
    """Inference wrapper: input [1,1,S,S] in [0,1] -> (boxes, scores, classes).

    Boxes are (x, y, w, h) in input pixels. Callers filter by score and
    apply NMS; the runtime just decodes the strongest TOPK peaks.
    """

    def __init__(self, net: GlyphDetector):
        super().__init__()
        self.net = net
        self.stride = STRIDE
        self.topk = TOPK

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        heat, size, offset = self.net(x)
        heat = torch.sigmoid(heat)
        pooled = F.max_pool2d(heat, 3, stride=1, padding=1)
        heat = heat * (pooled == heat).to(heat.dtype)
        grid_h = heat.shape[2]
        grid_w = heat.shape[3]
        flat = heat.view(-1)
        k = min(self.topk, flat.shape[0])
        scores, idx = flat.topk(k)
        classes = idx // (grid_h * grid_w)
        cell = idx % (grid_h * grid_w)
        ys = (cell // grid_w).to(torch.float32)
        xs = (cell % grid_w).to(torch.float32)
        ys_i = (cell // grid_w).to(torch.int64)
        xs_i = (cell % grid_w).to(torch.int64)
        w = size[0, 0, ys_i, xs_i] * self.stride
        h = size[0, 1, ys_i, xs_i] * self.stride
        dx = offset[0, 0, ys_i, xs_i]
        dy = offset[0, 1, ys_i, xs_i]
        cx = (xs + dx) * self.stride
        cy = (ys + dy) * self.stride
        boxes = torch.stack([cx - w / 2.0, cy - h / 2.0, w, h], dim=1)
        return boxes, scores, classes


def gaussian_heatmaps(
    instances_per_image: list[list[tuple[int, float, float, float, float]]],
    grid: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Training targets: splatted heatmaps plus size/offset at center cells.

    Each instance is (class, cx, cy, w, h) in input pixels.
    """
    batch = len(instances_per_image)
    heat = torch.zeros(batch, NUM_CLASSES, grid, grid)
    size = torch.zeros(batch, 2, grid, grid)
    offset = torch.zeros(batch, 2, grid, grid)
    mask = torch.zeros(batch, 1, grid, grid)
    ys, xs = torch.meshgrid(torch.arange(grid), torch.arange(grid), indexing="ij")
    for b, instances in enumerate(instances_per_image):
        for class_id, cx, cy, w, h in instances:
            gx, gy = cx / STRIDE, cy / STRIDE
            ix = min(max(int(gx), 0), grid - 1)
            iy = min(max(int(gy), 0), grid - 1)
            radius = max(1.0, min(w, h) / STRIDE / 2.0)
            sigma = radius / 1.5
            splat = torch.exp(-((xs - ix) ** 2 + (ys - iy) ** 2) / (2.0 * sigma * sigma))
            heat[b, class_id] = torch.maximum(heat[b, class_id], splat)
            size[b, 0, iy, ix] = w / STRIDE
            size[b, 1, iy, ix] = h / STRIDE
            offset[b, 0, iy, ix] = gx - ix
            offset[b, 1, iy, ix] = gy - iy
            mask[b, 0, iy, ix] = 1.0
    return heat, size, offset, mask


def focal_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Penalty-reduced focal loss over splatted heatmaps."""
    p = torch.sigmoid(logits).clamp(1e-4, 1.0 - 1e-4)
    pos = target.eq(1.0).to(p.dtype)
    neg = 1.0 - pos
    pos_term = -((1.0 - p) ** 2) * torch.log(p) * pos
    neg_term = -((1.0 - target) ** 4) * (p**2) * torch.log(1.0 - p) * neg
    n_pos = pos.sum().clamp(min=1.0)
    return (pos_term.sum() + neg_term.sum()) / n_pos
