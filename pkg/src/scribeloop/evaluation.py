"""Quantitative analysis: IoU matching, confusion metrics, threshold sweeps,
per-scribe extraction statistics, and scribe attribution rules.

Metric conventions: accuracy = (tp+tn)/total, f_score = 2tp/(2tp+fp+fn),
and any 0/0 is defined as 0 so degenerate thresholds stay well-defined.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

from .errors import UnlabeledColumn
from .model import Annotation, BBox, DetectionRecord
from .store import AnnotationStore


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 1.0 for identical boxes."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f_score(self) -> float:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0


@dataclass(frozen=True)
class SweepPoint:
    """One point of a confidence-threshold sweep."""

    tau: float
    confusion: Confusion

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    @property
    def f_score(self) -> float:
        return self.confusion.f_score


Boxed = Union[Annotation, DetectionRecord, BBox]


def _box_of(item: Boxed) -> BBox:
    if isinstance(item, BBox):
        return item
    return item.effective_box if isinstance(item, Annotation) else item.box


def match_detections(
    preds: Sequence[DetectionRecord],
    gts: Sequence[Boxed],
    iou_min: float,
) -> Confusion:
    """Greedy one-to-one matching of predictions to ground truth (tn is 0).

    Predictions are visited in descending confidence (ties by box y then x);
    each claims its best still-unmatched ground truth when that overlap
    reaches iou_min, otherwise counts as a false positive.
    """
    order = sorted(
        range(len(preds)),
        key=lambda i: (-preds[i].confidence, preds[i].box.y, preds[i].box.x),
    )
    taken = [False] * len(gts)
    tp = 0
    for i in order:
        best_j = -1
        best = 0.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou(preds[i].box, _box_of(gt))
            if v > best:
                best = v
                best_j = j
        if best_j >= 0 and best >= iou_min:
            taken[best_j] = True
            tp += 1
    return Confusion(tp=tp, fp=len(preds) - tp, fn=len(gts) - tp, tn=0)


def sweep(
    samples: Sequence[tuple[float, bool]],
    taus: Sequence[float],
) -> list[SweepPoint]:
    """Threshold each (confidence, truth) sample at every tau (inclusive >=)."""
    points = []
    for tau in taus:
        tp = fp = fn = tn = 0
        for conf, truth in samples:
            positive = conf >= tau
            if positive and truth:
                tp += 1
            elif positive:
                fp += 1
            elif truth:
                fn += 1
            else:
                tn += 1
        points.append(SweepPoint(tau=tau, confusion=Confusion(tp, fp, fn, tn)))
    return points


# -- per-scribe extraction statistics ---------------------------------------------


@dataclass(frozen=True)
class ScribeStats:
    scribe: str  # single-letter code, or "total" for the summary row
    occurrences: int
    columns: int
    occ_per_column: float
    mean_confidence: float


def scribe_stats(
    store: AnnotationStore,
    manuscript: str,
    detections: Optional[Sequence[DetectionRecord]] = None,
) -> list[ScribeStats]:
    """Occurrence counts, column counts, occ/column and mean confidence per scribe.

    Column counts are the registered columns carrying each scribe label.
    The trailing "total" row sums occurrences and columns; its ratio and
    confidence are the unweighted means of the per-scribe rows (the
    presentation convention for the summary line).
    """
    columns = store.columns(manuscript=manuscript)
    by_scribe_columns: dict[str, int] = {}
    for col in columns:
        if col.scribe is None:
            raise UnlabeledColumn(f"column {col.column_id} has no scribe label")
        by_scribe_columns[col.scribe] = by_scribe_columns.get(col.scribe, 0) + 1

    if detections is None:
        dets: list[tuple[str, float]] = [
            (a.column_id, a.confidence or 0.0)
            for a in store.query(manuscript=manuscript)
            if a.origin.value == "detector"
        ]
    else:
        dets = [(d.column_id, d.confidence) for d in detections]

    occs: dict[str, int] = {s: 0 for s in by_scribe_columns}
    conf_sums: dict[str, float] = {s: 0.0 for s in by_scribe_columns}
    for cid, conf in dets:
        scribe = store.column(cid).scribe
        if scribe is None:
            raise UnlabeledColumn(f"column {cid} has no scribe label")
        occs[scribe] = occs.get(scribe, 0) + 1
        conf_sums[scribe] = conf_sums.get(scribe, 0.0) + conf

    rows = []
    for scribe in sorted(by_scribe_columns):
        n = occs.get(scribe, 0)
        cols = by_scribe_columns[scribe]
        rows.append(
            ScribeStats(
                scribe=scribe,
                occurrences=n,
                columns=cols,
                occ_per_column=n / cols if cols else 0.0,
                mean_confidence=conf_sums.get(scribe, 0.0) / n if n else 0.0,
            )
        )
    if rows:
        rows.append(
            ScribeStats(
                scribe="total",
                occurrences=sum(r.occurrences for r in rows),
                columns=sum(r.columns for r in rows),
                occ_per_column=sum(r.occ_per_column for r in rows) / len(rows),
                mean_confidence=sum(r.mean_confidence for r in rows) / len(rows),
            )
        )
    return rows


# -- attribution -----------------------------------------------------------------


class AttributionKind(str, Enum):
    ANY_ABOVE = "any_above"
    FRACTION_ABOVE = "fraction_above"
    MAJORITY_VOTE = "majority_vote"


class AttributionDecision(str, Enum):
    TARGET_SCRIBE = "target_scribe"
    OTHER = "other"
    ABSTAIN = "abstain"


@dataclass(frozen=True)
class AttributionRule:
    kind: AttributionKind
    tau: float = 0.0
    fraction: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0,1], got {self.tau}")
        if self.kind is AttributionKind.FRACTION_ABOVE and not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0,1], got {self.fraction}")


def attribute(detections: Sequence[Boxed], rule: AttributionRule) -> AttributionDecision:
    """Attribute a column or page from its detections under one rule."""
    if not detections:
        return AttributionDecision.ABSTAIN
    confs = [d.confidence or 0.0 for d in detections]
    if rule.kind is AttributionKind.ANY_ABOVE:
        hit = any(c >= rule.tau for c in confs)
    elif rule.kind is AttributionKind.FRACTION_ABOVE:
        hit = sum(c >= rule.tau for c in confs) / len(confs) >= rule.fraction
    else:
        ones = sum(d.class_id == 1 for d in detections)
        hit = ones > len(detections) - ones
    return AttributionDecision.TARGET_SCRIBE if hit else AttributionDecision.OTHER


# -- whole-corpus confidence classification ----------------------------------------


def corpus_samples(
    store: AnnotationStore,
    target: str,
    manuscript: Optional[str] = None,
    detections: Optional[Sequence[DetectionRecord]] = None,
) -> list[tuple[float, bool]]:
    """(confidence, page-is-by-target) sample per detection in the corpus."""
    if detections is None:
        pairs = [
            (a.column_id, a.confidence or 0.0)
            for a in store.query(manuscript=manuscript)
            if a.origin.value == "detector"
        ]
    else:
        pairs = [(d.column_id, d.confidence) for d in detections]
    samples = []
    for cid, conf in pairs:
        scribe = store.column(cid).scribe
        if scribe is None:
            raise UnlabeledColumn(f"column {cid} has no scribe label")
        samples.append((conf, scribe == target))
    return samples


def classify_corpus(
    store: AnnotationStore,
    target: str,
    tau: float,
    manuscript: Optional[str] = None,
    detections: Optional[Sequence[DetectionRecord]] = None,
) -> SweepPoint:
    """Score every stored detection against its page label at one threshold.

    Each detection is one sample: truth is whether its column's scribe is the
    target, prediction is confidence >= tau.
    """
    samples = corpus_samples(store, target, manuscript, detections)
    return sweep(samples, [tau])[0]


def sweep_corpus(
    store: AnnotationStore,
    target: str,
    taus: Sequence[float],
    manuscript: Optional[str] = None,
    detections: Optional[Sequence[DetectionRecord]] = None,
) -> list[SweepPoint]:
    samples = corpus_samples(store, target, manuscript, detections)
    return sweep(samples, taus)


# -- output formats -----------------------------------------------------------------


def parse_tau_grid(expr: str) -> list[float]:
    """Parse "start:stop:step" into an inclusive threshold grid."""
    try:
        start_s, stop_s, step_s = expr.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError:
        raise ValueError(f"tau grid must look like 0.70:0.85:0.01, got {expr!r}") from None
    if step <= 0 or stop < start:
        raise ValueError(f"bad tau grid {expr!r}")
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


def sweep_to_csv(points: Iterable[SweepPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tau", "tp", "fp", "fn", "tn", "accuracy", "f_score"])
    for p in points:
        c = p.confusion
        writer.writerow(
            [f"{p.tau:.4f}", c.tp, c.fp, c.fn, c.tn, f"{p.accuracy:.6f}", f"{p.f_score:.6f}"]
        )
    return buf.getvalue()


def stats_to_csv(rows: Iterable[ScribeStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scribe", "occurrences", "columns", "occ_per_column", "mean_confidence"])
    for r in rows:
        writer.writerow(
            [r.scribe, r.occurrences, r.columns, f"{r.occ_per_column:.2f}", f"{r.mean_confidence:.2f}"]
        )
    return buf.getvalue()
