"""Cycle orchestration: drives annotate -> export -> detect -> review -> merge
rounds over a workspace directory.

Workspace layout::

    workspace/
      manuscripts/<name>.yaml   manuscript configs
      plan.yaml                 cycle plan (train/inference selectors per cycle)
      pages/                    raw page scans (preprocess input)
      columns/                  preprocessed binary column PNGs
      templates/                reference glyphs + sidecars
      annotations.log           the annotation store
      datasets/cycle_<k>/       exported training data per cycle
      detections/               submitted detection files

Cycle phases move strictly forward; the current phase is persisted in the
store log, so reopening a workspace resumes exactly where it stopped.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import yaml

from .config import ManuscriptConfig, load_manuscript_config
from .dataset import (
    CycleSpec,
    DatasetManifest,
    PageWindow,
    build_manifest,
    export_dataset,
    parse_detections,
    read_detections,
)
from .errors import (
    ColumnNotInInferenceSet,
    PendingReviewsRemain,
    PreviousCycleOpen,
    ScribeloopError,
)
from .gateway import ingest
from .matching import bootstrap_annotate, load_templates
from .model import ColumnImage, DetectionRecord, Origin, Side, Stage, Status
from .preprocess import load_column_pixels, preprocess_directory, save_column_image
from .store import AnnotationStore


class CyclePhase(str, Enum):
    BOOTSTRAPPED = "bootstrapped"
    EXPORTED = "exported"
    AWAITING_DETECTIONS = "awaiting_detections"
    IN_REVIEW = "in_review"
    MERGED = "merged"


_PHASE_ORDER = {p: i for i, p in enumerate(CyclePhase)}


@dataclass
class CycleState:
    cycle: int
    phase: CyclePhase
    manifest: Optional[DatasetManifest]
    pending_count: int


def standard_plan(
    manuscript: str,
    target_scribe: str,
    initial_pages: int = 60,
    inference_pages: int = 150,
    expanded_pages: int = 210,
) -> list[CycleSpec]:
    """Three-round schedule: seed recto window, expanded recto window, then
    everything remaining (verso included) as inference."""
    return [
        CycleSpec(
            cycle=1,
            manuscript=manuscript,
            train=PageWindow(sides=(Side.RECTO,), scribe=target_scribe, pages=initial_pages),
            inference=PageWindow(
                sides=(Side.RECTO,), scribe=target_scribe, pages=inference_pages, skip=initial_pages
            ),
        ),
        CycleSpec(
            cycle=2,
            manuscript=manuscript,
            train=PageWindow(sides=(Side.RECTO,), scribe=target_scribe, pages=expanded_pages),
            inference="remainder",
        ),
        CycleSpec(
            cycle=3,
            manuscript=manuscript,
            train=PageWindow(sides=(Side.RECTO, Side.VERSO), scribe=target_scribe),
            inference="remainder",
        ),
    ]


def _parse_selector(raw) -> Union[PageWindow, list[str], str]:
    if raw is None:
        return []
    if isinstance(raw, str):
        return raw
    if isinstance(raw, list):
        return [str(c) for c in raw]
    sides = tuple(Side(s) for s in raw.get("sides", ["recto"]))
    return PageWindow(
        sides=sides,
        scribe=raw.get("scribe"),
        pages=raw.get("pages"),
        skip=int(raw.get("skip", 0)),
    )


def load_plan(path: Path) -> list[CycleSpec]:
    with Path(path).open("r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    manuscript = raw.get("manuscript")
    specs = []
    for entry in raw["cycles"]:
        specs.append(
            CycleSpec(
                cycle=int(entry["cycle"]),
                manuscript=entry.get("manuscript", manuscript),
                train=_parse_selector(entry.get("train")),
                inference=_parse_selector(entry.get("inference")),
                val_fraction=float(entry.get("val_fraction", 0.10)),
            )
        )
    return specs


def save_plan(specs: Sequence[CycleSpec], path: Path, manuscript: Optional[str] = None) -> None:
    def dump_selector(sel):
        if isinstance(sel, PageWindow):
            doc = {"sides": [s.value for s in sel.sides]}
            if sel.scribe:
                doc["scribe"] = sel.scribe
            if sel.pages is not None:
                doc["pages"] = sel.pages
            if sel.skip:
                doc["skip"] = sel.skip
            return doc
        if isinstance(sel, str):
            return sel
        return list(sel)

    doc = {
        "manuscript": manuscript or (specs[0].manuscript if specs else None),
        "cycles": [
            {
                "cycle": s.cycle,
                "train": dump_selector(s.train),
                "inference": dump_selector(s.inference),
                "val_fraction": s.val_fraction,
            }
            for s in specs
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


class Workspace:
    """All pipeline state rooted in one directory; the store's single writer."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.columns_dir = self.root / "columns"
        self.templates_dir = self.root / "templates"
        self.datasets_dir = self.root / "datasets"
        self.detections_dir = self.root / "detections"
        self.pages_dir = self.root / "pages"
        self.store = AnnotationStore.open(self.root / "annotations.log")
        self.configs: dict[str, ManuscriptConfig] = {}
        cfg_dir = self.root / "manuscripts"
        if cfg_dir.is_dir():
            for path in sorted(cfg_dir.glob("*.yaml")):
                cfg = load_manuscript_config(path)
                self.configs[cfg.name] = cfg

    def close(self) -> None:
        self.store.close()

    def config(self, manuscript: Optional[str] = None) -> ManuscriptConfig:
        if manuscript is None:
            if len(self.configs) != 1:
                raise ScribeloopError(
                    f"workspace has {len(self.configs)} manuscript configs; name one explicitly"
                )
            return next(iter(self.configs.values()))
        try:
            return self.configs[manuscript]
        except KeyError:
            raise ScribeloopError(f"no config for manuscript {manuscript!r}") from None

    def plan(self) -> list[CycleSpec]:
        path = self.root / "plan.yaml"
        if not path.is_file():
            raise ScribeloopError("workspace has no plan.yaml; cannot run cycles")
        return load_plan(path)

    # -- preprocessing ---------------------------------------------------------

    def preprocess_images(
        self, images_dir: Optional[Path] = None, manuscript: Optional[str] = None
    ) -> dict[str, int]:
        """Crop, clean and binarize every page scan; register the columns."""
        cfg = self.config(manuscript)
        src = Path(images_dir) if images_dir else self.pages_dir
        columns = preprocess_directory(src, cfg, self.columns_dir)
        for col in columns:
            self.store.register_column(col.info())
        return {"pages": len({(c.page.page_number, c.page.side) for c in columns}),
                "columns": len(columns)}

    def load_column(self, column_id: str) -> ColumnImage:
        info = self.store.column(column_id)
        cfg = self.config(info.manuscript)
        pixels = load_column_pixels(self.columns_dir, column_id)
        return ColumnImage(
            page=cfg.page_ref(info.page_number, info.side),
            column_index=info.column_index,
            pixels=pixels,
            stage=Stage.BINARY,
        )

    # -- template-match bootstrap -------------------------------------------------

    def bootstrap(
        self,
        scribe: str,
        tau_tm: float = 0.55,
        iou_thresh: float = 0.3,
        manuscript: Optional[str] = None,
        sides: Sequence[Side] = (Side.RECTO, Side.VERSO),
        max_pages: Optional[int] = None,
    ) -> int:
        """Template-match every column of the given scribe into pending boxes."""
        templates = load_templates(self.templates_dir, scribe=scribe)
        if not templates:
            raise ScribeloopError(f"no templates for scribe {scribe!r} in {self.templates_dir}")
        cfg = self.config(manuscript)
        infos = [c for c in self.store.columns(manuscript=cfg.name, scribe=scribe) if c.side in sides]
        if max_pages is not None:
            pages = sorted({(c.page_number, c.side) for c in infos})[:max_pages]
            allowed = set(pages)
            infos = [c for c in infos if (c.page_number, c.side) in allowed]
        created = 0
        for info in infos:
            column = self.load_column(info.column_id)
            for ann in bootstrap_annotate(column, templates, tau_tm, iou_thresh):
                self.store.put_annotation(ann)
                created += 1
        if not self.store.cycle_phases():
            self.store.put_cycle_phase(1, CyclePhase.BOOTSTRAPPED.value)
        return created

    # -- cycle state ------------------------------------------------------------

    def cycle_state(self) -> Optional[CycleState]:
        phases = self.store.cycle_phases()
        if not phases:
            return None
        cycle, phase_name = phases[-1]
        phase = CyclePhase(phase_name)
        manifest_path = self.datasets_dir / f"cycle_{cycle}" / "manifest.json"
        manifest = DatasetManifest.load(manifest_path) if manifest_path.is_file() else None
        return CycleState(
            cycle=cycle,
            phase=phase,
            manifest=manifest,
            pending_count=self._pending_count(cycle),
        )

    def _pending_count(self, cycle: int) -> int:
        return len(
            self.store.query(status=Status.PENDING, origin=Origin.DETECTOR, cycle=cycle)
        )

    def _spec_for(self, cycle: int) -> CycleSpec:
        for spec in self.plan():
            if spec.cycle == cycle:
                return spec
        raise ScribeloopError(f"plan has no cycle {cycle}")

    def start_cycle(self, cycle: Optional[int] = None) -> CycleState:
        """Build the cycle manifest and export its training data."""
        state = self.cycle_state()
        if state is None or (state.cycle == 1 and state.phase is CyclePhase.BOOTSTRAPPED):
            next_cycle = 1
        elif state.phase is CyclePhase.MERGED:
            next_cycle = state.cycle + 1
        else:
            raise PreviousCycleOpen(
                f"cycle {state.cycle} is {state.phase.value}; merge it before starting another"
            )
        if cycle is not None and cycle != next_cycle:
            raise PreviousCycleOpen(f"next cycle is {next_cycle}, not {cycle}")
        spec = self._spec_for(next_cycle)
        manifest = build_manifest(self.store, spec)
        export_dataset(
            self.store, manifest, self.columns_dir, self.datasets_dir / f"cycle_{next_cycle}"
        )
        self.store.put_cycle_phase(next_cycle, CyclePhase.EXPORTED.value)
        return CycleState(
            cycle=next_cycle,
            phase=CyclePhase.EXPORTED,
            manifest=manifest,
            pending_count=self._pending_count(next_cycle),
        )

    def submit_detections(
        self, source: Union[Path, str, Sequence[DetectionRecord]]
    ) -> CycleState:
        """Ingest a detection file for review; columns must be in the inference set."""
        state = self.cycle_state()
        if state is None or state.phase not in (
            CyclePhase.EXPORTED,
            CyclePhase.AWAITING_DETECTIONS,
        ):
            phase = state.phase.value if state else "none"
            raise PreviousCycleOpen(f"no cycle awaiting detections (phase {phase})")
        if state.manifest is None:
            raise ScribeloopError(f"cycle {state.cycle} has no manifest on disk")
        if isinstance(source, (str, Path)):
            records = read_detections(Path(source))
        else:
            records = list(source)
        inference = set(state.manifest.inference_columns)
        for rec in records:
            if rec.column_id not in inference:
                raise ColumnNotInInferenceSet(
                    f"column {rec.column_id} is not in cycle {state.cycle}'s inference set"
                )
        ingest(self.store, records, cycle=state.cycle)
        self.store.put_cycle_phase(state.cycle, CyclePhase.IN_REVIEW.value)
        return CycleState(
            cycle=state.cycle,
            phase=CyclePhase.IN_REVIEW,
            manifest=state.manifest,
            pending_count=self._pending_count(state.cycle),
        )

    def merge_cycle(self) -> CycleState:
        """Close the cycle once every detection is decided. Idempotent."""
        state = self.cycle_state()
        if state is None:
            raise PreviousCycleOpen("no cycle to merge")
        if state.phase is CyclePhase.MERGED:
            return state
        if state.phase is not CyclePhase.IN_REVIEW:
            raise PreviousCycleOpen(
                f"cycle {state.cycle} is {state.phase.value}; submit detections first"
            )
        if state.pending_count:
            raise PendingReviewsRemain(
                f"{state.pending_count} detections still pending in cycle {state.cycle}"
            )
        self.store.put_cycle_phase(state.cycle, CyclePhase.MERGED.value)
        return CycleState(
            cycle=state.cycle,
            phase=CyclePhase.MERGED,
            manifest=state.manifest,
            pending_count=0,
        )

    def save_detection_records(
        self, records: Sequence[DetectionRecord], name: str
    ) -> Path:
        from .dataset import write_detections

        self.detections_dir.mkdir(parents=True, exist_ok=True)
        path = self.detections_dir / name
        write_detections(records, path)
        return path
