"""Core domain types: manuscripts, pages, columns, boxes, annotations.

Coordinates are integer pixels with the origin at the image top-left and
y growing downward. Boxes are (x, y, w, h) with x/y the top-left corner.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import BoxOutOfBounds

_MANUSCRIPT_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")
_SCRIBE_RE = re.compile(r"^[A-Z]$")
_COLUMN_ID_RE = re.compile(r"^([a-z0-9][a-z0-9-]*)_(\d+)([rv])_c(\d+)$")


def validate_manuscript_name(name: str) -> str:
    if not _MANUSCRIPT_RE.match(name):
        raise ValueError(f"manuscript name must be lowercase alphanumeric/hyphen: {name!r}")
    return name


def validate_scribe_code(code: str, alphabet: Optional[set[str]] = None) -> str:
    if not _SCRIBE_RE.match(code):
        raise ValueError(f"scribe code must be a single capital letter: {code!r}")
    if alphabet is not None and code not in alphabet:
        raise ValueError(f"scribe {code!r} not in configured set {sorted(alphabet)}")
    return code


def validate_class_id(value: int) -> int:
    if value not in (0, 1):
        raise ValueError(f"class id must be 0 or 1, got {value!r}")
    return value


class Side(str, Enum):
    RECTO = "recto"
    VERSO = "verso"

    @property
    def short(self) -> str:
        return "r" if self is Side.RECTO else "v"

    @classmethod
    def from_short(cls, s: str) -> "Side":
        if s == "r":
            return cls.RECTO
        if s == "v":
            return cls.VERSO
        raise ValueError(f"unknown side code {s!r}")


class Layout(str, Enum):
    TWO_COLUMN = "two_column"
    THREE_COLUMN = "three_column"

    @property
    def column_count(self) -> int:
        return 2 if self is Layout.TWO_COLUMN else 3


class Stage(str, Enum):
    RAW_RGB = "raw_rgb"
    RED_REMOVED = "red_removed"
    GRAY = "gray"
    BINARY = "binary"


class Origin(str, Enum):
    TEMPLATE_MATCH = "template_match"
    DETECTOR = "detector"
    MANUAL = "manual"


class Status(str, Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    ADJUSTED = "adjusted"

    @property
    def decided(self) -> bool:
        return self is not Status.PENDING


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box: top-left (x, y), width w, height h."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                object.__setattr__(self, name, int(v))
        if self.w <= 0 or self.h <= 0:
            raise BoxOutOfBounds(f"degenerate box w={self.w} h={self.h}")
        if self.x < 0 or self.y < 0:
            raise BoxOutOfBounds(f"negative box origin ({self.x}, {self.y})")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits_within(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def require_within(self, width: int, height: int) -> "BBox":
        if not self.fits_within(width, height):
            raise BoxOutOfBounds(
                f"box ({self.x},{self.y},{self.w},{self.h}) exceeds {width}x{height} raster"
            )
        return self


@dataclass(frozen=True)
class PageRef:
    """One digitized side of a manuscript leaf."""

    manuscript: str
    page_number: int
    side: Side
    width_px: int
    height_px: int
    scribe: Optional[str] = None
    layout: Layout = Layout.TWO_COLUMN

    def __post_init__(self) -> None:
        validate_manuscript_name(self.manuscript)
        if self.page_number <= 0:
            raise ValueError(f"page_number must be positive, got {self.page_number}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("page dimensions must be positive")
        if self.scribe is not None:
            validate_scribe_code(self.scribe)

    @property
    def page_id(self) -> str:
        return f"{self.page_number}{self.side.short}"

    @property
    def image_name(self) -> str:
        return f"{self.manuscript}_{self.page_id}.png"


def column_id(manuscript: str, page_number: int, side: Side, column_index: int) -> str:
    return f"{manuscript}_{page_number}{side.short}_c{column_index}"


def parse_column_id(cid: str) -> tuple[str, int, Side, int]:
    m = _COLUMN_ID_RE.match(cid)
    if not m:
        raise ValueError(f"not a column id: {cid!r}")
    return m.group(1), int(m.group(2)), Side.from_short(m.group(3)), int(m.group(4))


@dataclass
class ColumnImage:
    """A cropped text column with provenance and processing stage."""

    page: PageRef
    column_index: int
    pixels: np.ndarray
    stage: Stage

    def __post_init__(self) -> None:
        if not 0 <= self.column_index < self.page.layout.column_count:
            raise ValueError(
                f"column_index {self.column_index} out of range for {self.page.layout.value}"
            )
        if self.stage is Stage.RAW_RGB or self.stage is Stage.RED_REMOVED:
            if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
                raise ValueError(f"{self.stage.value} stage requires an RGB raster")
        else:
            if self.pixels.ndim != 2:
                raise ValueError(f"{self.stage.value} stage requires a single-channel raster")
        if self.stage is Stage.BINARY:
            vals = np.unique(self.pixels)
            if not np.isin(vals, (0, 255)).all():
                raise ValueError("binary stage must contain only values {0, 255}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def column_id(self) -> str:
        return column_id(
            self.page.manuscript, self.page.page_number, self.page.side, self.column_index
        )

    def info(self) -> "ColumnInfo":
        return ColumnInfo(
            column_id=self.column_id,
            manuscript=self.page.manuscript,
            page_number=self.page.page_number,
            side=self.page.side,
            column_index=self.column_index,
            width=self.width,
            height=self.height,
            scribe=self.page.scribe,
        )


@dataclass(frozen=True)
class ColumnInfo:
    """Registry entry for a column raster known to the annotation store."""

    column_id: str
    manuscript: str
    page_number: int
    side: Side
    column_index: int
    width: int
    height: int
    scribe: Optional[str] = None


@dataclass(frozen=True)
class Annotation:
    """A ground-truth or candidate bounding box for the target character.

    ``box`` is the originally proposed box; an ``adjusted`` decision stores
    the replacement in ``adjusted_box`` and ``effective_box`` resolves it.
    ``confidence`` holds the detector confidence score (detector origin) or
    the template-match similarity score (template_match origin).
    """

    column_id: str
    box: BBox
    class_id: int
    origin: Origin
    status: Status = Status.PENDING
    cycle: int = 0
    id: Optional[str] = None
    adjusted_box: Optional[BBox] = None
    confidence: Optional[float] = None
    model_id: Optional[str] = None
    timestamp: Optional[str] = None

    def __post_init__(self) -> None:
        validate_class_id(self.class_id)
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0,1], got {self.confidence}")
        if self.status is Status.ADJUSTED and self.adjusted_box is None:
            raise ValueError("adjusted annotation requires a replacement box")

    @property
    def effective_box(self) -> BBox:
        return self.adjusted_box if self.adjusted_box is not None else self.box

    def with_decision(self, status: Status, new_box: Optional[BBox] = None) -> "Annotation":
        return replace(self, status=status, adjusted_box=new_box)


@dataclass(frozen=True)
class DetectionRecord:
    """A detector-emitted box with class id and confidence score."""

    column_id: str
    box: BBox
    class_id: int
    confidence: float
    model_id: str

    def __post_init__(self) -> None:
        validate_class_id(self.class_id)
        if not 0.0 <= self.confidence <= 1.0:
            from .errors import ConfidenceOutOfRange

            raise ConfidenceOutOfRange(f"confidence {self.confidence} outside [0,1]")
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
