"""Normalized cross-correlation template matching and greedy NMS.

The correlation kernel slides a reference glyph over a column raster and
scores every placement with zero-mean, variance-normalized correlation in
[-1, 1]. Windows with zero variance (blank parchment) score 0 so empty
regions can never match.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TypeVar, Union

import numpy as np
from PIL import Image
from scipy.signal import fftconvolve

from .errors import ConstantTemplate, TemplateTooLarge
from .evaluation import iou
from .model import Annotation, BBox, ColumnImage, DetectionRecord, Origin, Status, validate_class_id

# direct window evaluation below this many multiply-adds, FFT above
_DIRECT_COST_LIMIT = 5e7


@dataclass
class Template:
    """Reference image of the target character written by one scribe."""

    pixels: np.ndarray
    scribe: str
    class_id: int
    name: str = "template"

    def __post_init__(self) -> None:
        validate_class_id(self.class_id)
        if self.pixels.ndim != 2:
            raise ValueError("template must be a single-channel raster")
        if np.ptp(self.pixels) == 0:
            raise ConstantTemplate(f"template {self.name!r} has zero variance")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class MatchCandidate:
    """A template-sized box with its correlation score."""

    box: BBox
    score: float
    class_id: int = 1

    def __post_init__(self) -> None:
        if not -1.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [-1, 1]")


def _window_sums(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Sum of every h x w window via a zero-padded integral image."""
    ii = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    np.cumsum(img, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    return ii[h:, w:] - ii[:-h, w:] - ii[h:, :-w] + ii[:-h, :-w]


def ncc_map(image: np.ndarray, tmpl: Template) -> np.ndarray:
    """Zero-mean normalized cross-correlation of a template at every offset.

    Returns a (H-h+1) x (W-w+1) float64 map; entry (v, u) is the score of
    placing the template with its top-left corner at (u, v).
    """
    if image.ndim != 2:
        raise ValueError("correlation expects a single-channel raster")
    img = np.asarray(image, dtype=np.float64)
    t = np.asarray(tmpl.pixels, dtype=np.float64)
    h, w = t.shape
    H, W = img.shape
    if h > H or w > W:
        raise TemplateTooLarge(f"template {w}x{h} exceeds image {W}x{H}")
    n = h * w
    t_zero = t - t.mean()
    tvar_num = float(n * np.sum(t * t) - np.sum(t) ** 2)
    if tvar_num <= 0:
        raise ConstantTemplate(f"template {tmpl.name!r} has zero variance")

    out_shape = (H - h + 1, W - w + 1)
    if out_shape[0] * out_shape[1] * n <= _DIRECT_COST_LIMIT:
        windows = np.lib.stride_tricks.sliding_window_view(img, (h, w))
        num = np.einsum("ijkl,kl->ij", windows, t_zero, optimize=True)
    else:
        num = fftconvolve(img, t_zero[::-1, ::-1], mode="valid")

    s1 = _window_sums(img, h, w)
    s2 = _window_sums(img * img, h, w)
    var_num = n * s2 - s1 * s1
    # integer imagery makes var_num exact; anything at or below the noise
    # floor is a flat window and must score 0
    flat = var_num <= np.maximum(1e-10 * n * s2, 0.0)
    denom = np.sqrt(np.where(flat, 1.0, var_num) * tvar_num)
    scores = np.where(flat, 0.0, n * num / denom)
    return np.clip(scores, -1.0, 1.0)


def match_candidates(score_map: np.ndarray, tau_tm: float, tmpl: Template) -> list[MatchCandidate]:
    """Every map location scoring >= tau_tm, as template-sized boxes, best first."""
    if not 0.0 < tau_tm <= 1.0:
        raise ValueError(f"tau_tm must lie in (0, 1], got {tau_tm}")
    ys, xs = np.nonzero(score_map >= tau_tm)
    cands = [
        MatchCandidate(
            box=BBox(int(x), int(y), tmpl.width, tmpl.height),
            score=float(score_map[y, x]),
            class_id=tmpl.class_id,
        )
        for y, x in zip(ys, xs)
    ]
    cands.sort(key=lambda c: (-c.score, c.box.y, c.box.x))
    return cands


ScoredBox = TypeVar("ScoredBox", bound=Union[MatchCandidate, DetectionRecord])


def _score_of(item) -> float:
    return item.score if isinstance(item, MatchCandidate) else item.confidence


def nms(items: Sequence[ScoredBox], iou_thresh: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression by descending score.

    Survivors keep their input order; any pair of survivors overlaps below
    iou_thresh.
    """
    if not 0.0 <= iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must lie in [0, 1), got {iou_thresh}")
    order = sorted(
        range(len(items)),
        key=lambda i: (-_score_of(items[i]), items[i].box.y, items[i].box.x, i),
    )
    kept: list[int] = []
    for i in order:
        if all(iou(items[i].box, items[j].box) < iou_thresh for j in kept):
            kept.append(i)
    kept_set = set(kept)
    return [item for i, item in enumerate(items) if i in kept_set]


def bootstrap_annotate(
    column: ColumnImage,
    templates: Sequence[Template],
    tau_tm: float = 0.55,
    iou_thresh: float = 0.3,
) -> list[Annotation]:
    """Propose pending annotations for a column from template matches.

    Candidates from all templates are pooled and jointly deduplicated, then
    converted to pending annotations carrying each template's class id and
    the correlation score as confidence.
    """
    pooled: list[MatchCandidate] = []
    for tmpl in templates:
        score_map = ncc_map(column.pixels, tmpl)
        pooled.extend(match_candidates(score_map, tau_tm, tmpl))
    pooled.sort(key=lambda c: (-c.score, c.box.y, c.box.x))
    survivors = nms(pooled, iou_thresh)
    return [
        Annotation(
            column_id=column.column_id,
            box=c.box,
            class_id=c.class_id,
            origin=Origin.TEMPLATE_MATCH,
            status=Status.PENDING,
            cycle=0,
            confidence=min(max(c.score, 0.0), 1.0),
        )
        for c in survivors
    ]


# -- template storage -----------------------------------------------------------


def load_template(png_path: Path) -> Template:
    """Load a template PNG plus its `<stem>.json` sidecar (scribe, class)."""
    png_path = Path(png_path)
    sidecar = png_path.with_suffix(".json")
    with sidecar.open("r", encoding="utf-8") as fh:
        meta = json.load(fh)
    with Image.open(png_path) as im:
        pixels = np.asarray(im.convert("L"))
    return Template(
        pixels=pixels,
        scribe=meta["scribe"],
        class_id=int(meta["class"]),
        name=png_path.stem,
    )


def save_template(tmpl: Template, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    png_path = directory / f"{tmpl.name}.png"
    Image.fromarray(tmpl.pixels.astype(np.uint8), mode="L").save(png_path)
    with png_path.with_suffix(".json").open("w", encoding="utf-8") as fh:
        json.dump({"scribe": tmpl.scribe, "class": tmpl.class_id}, fh)
        fh.write("\n")
    return png_path


def load_templates(directory: Path, scribe: Optional[str] = None) -> list[Template]:
    templates = []
    for png_path in sorted(Path(directory).glob("*.png")):
        tmpl = load_template(png_path)
        if scribe is None or tmpl.scribe == scribe:
            templates.append(tmpl)
    return templates
