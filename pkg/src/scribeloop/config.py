"""Manuscript configuration: column ROIs, red-removal rule, scribe labels.

One YAML file per manuscript, e.g.::

    name: trento
    page_width: 2832
    page_height: 4256
    scribes: [A, B, C]
    aliases:            # cross-manuscript scribe identities
      B: {avila: F}
    exclude_pages: [17r, 201v]
    red_rule: {red_min: 120, dominance_margin: 40}
    layouts:
      two_column:
        rois: [[70, 120, 1280, 3980], [1460, 120, 1280, 3980]]
      three_column:
        rois: [...]
    pages:              # per page-id: scribe label and layout
      1r: {scribe: B}
      34v: {scribe: C, layout: three_column}
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import LayoutMismatch
from .model import BBox, Layout, PageRef, Side, validate_manuscript_name, validate_scribe_code

DEFAULT_RED_MIN = 120
DEFAULT_DOMINANCE_MARGIN = 40


@dataclass(frozen=True)
class RedRule:
    """A pixel is red when R >= red_min and R - max(G, B) >= dominance_margin."""

    red_min: int = DEFAULT_RED_MIN
    dominance_margin: int = DEFAULT_DOMINANCE_MARGIN

    def __post_init__(self) -> None:
        for name in ("red_min", "dominance_margin"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ValueError(f"{name} must lie in 0..255, got {v}")


@dataclass(frozen=True)
class RoiConfig:
    """Ordered column ROIs (left to right) for one manuscript layout."""

    manuscript: str
    layout: Layout
    rois: tuple[BBox, ...]

    def __post_init__(self) -> None:
        validate_manuscript_name(self.manuscript)
        if len(self.rois) != self.layout.column_count:
            raise LayoutMismatch(
                f"{self.layout.value} layout needs {self.layout.column_count} ROIs, "
                f"got {len(self.rois)}"
            )
        for i, a in enumerate(self.rois):
            for b in self.rois[i + 1 :]:
                if a.x < b.x2 and b.x < a.x2 and a.y < b.y2 and b.y < a.y2:
                    raise ValueError(f"ROIs overlap: {a} and {b}")


@dataclass
class PageEntry:
    scribe: Optional[str] = None
    layout: Layout = Layout.TWO_COLUMN


@dataclass
class ManuscriptConfig:
    name: str
    page_width: int
    page_height: int
    scribes: tuple[str, ...]
    layouts: dict[Layout, RoiConfig]
    red_rule: RedRule = field(default_factory=RedRule)
    pages: dict[str, PageEntry] = field(default_factory=dict)
    aliases: dict[str, dict[str, str]] = field(default_factory=dict)
    exclude_pages: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        validate_manuscript_name(self.name)
        for code in self.scribes:
            validate_scribe_code(code)

    def roi_config(self, layout: Layout) -> RoiConfig:
        try:
            return self.layouts[layout]
        except KeyError:
            raise LayoutMismatch(f"{self.name} has no ROI set for layout {layout.value}") from None

    def page_ref(self, page_number: int, side: Side) -> PageRef:
        entry = self.pages.get(f"{page_number}{side.short}", PageEntry())
        return PageRef(
            manuscript=self.name,
            page_number=page_number,
            side=side,
            width_px=self.page_width,
            height_px=self.page_height,
            scribe=entry.scribe,
            layout=entry.layout,
        )

    def is_excluded(self, page_number: int, side: Side) -> bool:
        return f"{page_number}{side.short}" in self.exclude_pages


def _roi_list(raw: list) -> tuple[BBox, ...]:
    return tuple(BBox(*map(int, item)) for item in raw)


def load_manuscript_config(path: Path) -> ManuscriptConfig:
    with Path(path).open("r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    name = raw["name"]
    layouts: dict[Layout, RoiConfig] = {}
    for key, spec in (raw.get("layouts") or {}).items():
        layout = Layout(key)
        layouts[layout] = RoiConfig(manuscript=name, layout=layout, rois=_roi_list(spec["rois"]))
    red_raw = raw.get("red_rule") or {}
    pages: dict[str, PageEntry] = {}
    for pid, entry in (raw.get("pages") or {}).items():
        entry = entry or {}
        pages[str(pid)] = PageEntry(
            scribe=entry.get("scribe"),
            layout=Layout(entry.get("layout", Layout.TWO_COLUMN.value)),
        )
    return ManuscriptConfig(
        name=name,
        page_width=int(raw["page_width"]),
        page_height=int(raw["page_height"]),
        scribes=tuple(raw.get("scribes") or ()),
        layouts=layouts,
        red_rule=RedRule(
            red_min=int(red_raw.get("red_min", DEFAULT_RED_MIN)),
            dominance_margin=int(red_raw.get("dominance_margin", DEFAULT_DOMINANCE_MARGIN)),
        ),
        pages=pages,
        aliases={k: dict(v) for k, v in (raw.get("aliases") or {}).items()},
        exclude_pages=tuple(str(p) for p in (raw.get("exclude_pages") or ())),
    )


def save_manuscript_config(cfg: ManuscriptConfig, path: Path) -> None:
    doc = {
        "name": cfg.name,
        "page_width": cfg.page_width,
        "page_height": cfg.page_height,
        "scribes": list(cfg.scribes),
        "red_rule": {
            "red_min": cfg.red_rule.red_min,
            "dominance_margin": cfg.red_rule.dominance_margin,
        },
        "layouts": {
            layout.value: {"rois": [[r.x, r.y, r.w, r.h] for r in rc.rois]}
            for layout, rc in cfg.layouts.items()
        },
        "pages": {
            pid: {"scribe": e.scribe, "layout": e.layout.value} for pid, e in cfg.pages.items()
        },
        "aliases": cfg.aliases,
        "exclude_pages": list(cfg.exclude_pages),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
