"""Page preprocessing: column cropping, red removal, grayscale, binarization.

All functions are pure over numpy rasters. RGB rasters are uint8 HxWx3,
grayscale/binary rasters uint8 HxW. Binary images use ink = 0 on
background = 255 (dark-ink-on-light convention assumed downstream).
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .config import ManuscriptConfig, RedRule, RoiConfig
from .errors import EmptyImage, LayoutMismatch, RoiOutOfBounds
from .model import ColumnImage, PageRef, Side, Stage

_PAGE_IMAGE_RE = re.compile(r"^([a-z0-9][a-z0-9-]*)_(\d+)([rv])$")


def crop_columns(page_raster: np.ndarray, cfg: RoiConfig, page: PageRef) -> list[ColumnImage]:
    """Cut the configured column ROIs out of a page scan, left to right."""
    if page.layout is not cfg.layout:
        raise LayoutMismatch(
            f"page {page.page_id} has layout {page.layout.value}, config is {cfg.layout.value}"
        )
    height, width = page_raster.shape[:2]
    columns = []
    for index, roi in enumerate(cfg.rois):
        if not roi.fits_within(width, height):
            raise RoiOutOfBounds(f"ROI {roi} exceeds page raster {width}x{height}")
        pixels = page_raster[roi.y : roi.y2, roi.x : roi.x2].copy()
        columns.append(ColumnImage(page=page, column_index=index, pixels=pixels, stage=Stage.RAW_RGB))
    return columns


def remove_red(img: np.ndarray, rule: RedRule = RedRule()) -> np.ndarray:
    """Turn red pixels white: R >= red_min and R - max(G, B) >= margin."""
    r = img[..., 0].astype(np.int16)
    gb = np.maximum(img[..., 1], img[..., 2]).astype(np.int16)
    mask = (r >= rule.red_min) & (r - gb >= rule.dominance_margin)
    out = img.copy()
    out[mask] = (255, 255, 255)
    return out


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luma conversion: round(0.299 R + 0.587 G + 0.114 B), half-up, exact."""
    rgb = img.astype(np.int64)
    luma = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return luma.astype(np.uint8)


def otsu_threshold(img: np.ndarray) -> int:
    """Threshold maximizing between-class variance over the 256-bin histogram.

    Ties break toward the smallest threshold. A constant image yields its
    constant value (degenerate-input convention; every threshold has zero
    between-class variance there).
    """
    if img.size == 0:
        raise EmptyImage("cannot binarize an empty raster")
    hist = np.bincount(img.reshape(-1), minlength=256).astype(np.float64)
    nonzero = np.flatnonzero(hist)
    if len(nonzero) == 1:
        return int(nonzero[0])
    counts_le = np.cumsum(hist)  # pixels with value <= t
    sums_le = np.cumsum(hist * np.arange(256, dtype=np.float64))
    total_count = counts_le[-1]
    total_sum = sums_le[-1]
    counts_gt = total_count - counts_le
    sums_gt = total_sum - sums_le
    # between-class variance up to the constant factor N^2:
    # (S0*W1 - S1*W0)^2 / (W0*W1); exact in float64 for integer pixel data
    num = (sums_le * counts_gt - sums_gt * counts_le) ** 2
    denom = counts_le * counts_gt
    score = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return int(np.argmax(score))


def otsu_binarize(img: np.ndarray) -> tuple[np.ndarray, int]:
    """Binarize a grayscale raster: values <= threshold -> 0 (ink), else 255."""
    t = otsu_threshold(img)
    binary = np.where(img <= t, 0, 255).astype(np.uint8)
    return binary, t


def preprocess_page(
    page_raster: np.ndarray,
    cfg: RoiConfig,
    rule: RedRule,
    page: PageRef,
) -> list[ColumnImage]:
    """crop -> remove_red -> to_gray -> otsu per column, each with its own threshold."""
    out = []
    for col in crop_columns(page_raster, cfg, page):
        binary, _ = otsu_binarize(to_gray(remove_red(col.pixels, rule)))
        out.append(
            ColumnImage(page=col.page, column_index=col.column_index, pixels=binary, stage=Stage.BINARY)
        )
    return out


# -- image and filename plumbing ------------------------------------------------


def load_page_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_column_image(col: ColumnImage, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{col.column_id}.png"
    Image.fromarray(col.pixels, mode="L").save(path)
    return path


def load_column_pixels(columns_dir: Path, column_id: str) -> np.ndarray:
    path = Path(columns_dir) / f"{column_id}.png"
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def parse_page_image_name(path: Path) -> Optional[tuple[str, int, Side]]:
    """Parse `{manuscript}_{page}{r|v}` image stems; None when not conforming."""
    m = _PAGE_IMAGE_RE.match(Path(path).stem)
    if not m:
        return None
    return m.group(1), int(m.group(2)), Side.from_short(m.group(3))


def preprocess_directory(
    images_dir: Path,
    cfg: ManuscriptConfig,
    out_dir: Path,
) -> list[ColumnImage]:
    """Run the full chain over every conforming page image in a directory.

    Skips pages on the config exclusion list and files that do not match
    the page naming scheme. Columns are written as grayscale PNGs named
    `{manuscript}_{page}{r|v}_c{index}.png`.
    """
    results: list[ColumnImage] = []
    for path in sorted(Path(images_dir).iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg"):
            continue
        parsed = parse_page_image_name(path)
        if parsed is None or parsed[0] != cfg.name:
            continue
        _, page_number, side = parsed
        if cfg.is_excluded(page_number, side):
            continue
        page = cfg.page_ref(page_number, side)
        raster = load_page_image(path)
        columns = preprocess_page(raster, cfg.roi_config(page.layout), cfg.red_rule, page)
        for col in columns:
            save_column_image(col, out_dir)
        results.extend(columns)
    return results
