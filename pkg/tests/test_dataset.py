import numpy as np
import pytest

from scribeloop.dataset import (
    CycleSpec,
    DatasetManifest,
    PageWindow,
    build_manifest,
    parse_detections,
    read_detections,
    read_labels,
    stable_val_split,
    write_detections,
    write_labels,
)
from scribeloop.errors import (
    ConfidenceOutOfRange,
    MalformedLine,
    MalformedRecord,
    OverlapError,
    UndecidedAnnotation,
)
from scribeloop.model import Annotation, BBox, DetectionRecord, Origin, Side, Status
from scribeloop.store import AnnotationStore

from conftest import register


def accepted(box, class_id=1, column_id="demo_1r_c0"):
    return Annotation(
        column_id=column_id, box=box, class_id=class_id,
        origin=Origin.MANUAL, status=Status.ACCEPTED,
    )


class TestWriteLabels:
    def test_hand_normalized_line(self):
        text = write_labels([accepted(BBox(10, 20, 30, 40))], 100, 200)
        assert text == "1 0.250000 0.200000 0.300000 0.200000\n"

    def test_full_frame_box(self):
        text = write_labels([accepted(BBox(0, 0, 100, 200), class_id=0)], 100, 200)
        assert text == "0 0.500000 0.500000 1.000000 1.000000\n"

    def test_empty_list_zero_bytes(self):
        assert write_labels([], 100, 200) == ""

    def test_pending_rejected(self):
        pending = Annotation(
            column_id="demo_1r_c0", box=BBox(0, 0, 5, 5), class_id=1,
            origin=Origin.TEMPLATE_MATCH, status=Status.PENDING,
        )
        with pytest.raises(UndecidedAnnotation):
            write_labels([pending], 100, 100)

    def test_ordering_and_determinism(self, rng):
        anns = [
            accepted(BBox(int(x), int(y), 10, 10))
            for x, y in rng.integers(0, 80, size=(20, 2))
        ]
        once = write_labels(anns, 100, 100)
        assert once == write_labels(list(reversed(anns)), 100, 100)
        rows = [line.split() for line in once.splitlines()]
        keys = [(float(r[2]), float(r[1])) for r in rows]
        assert keys == sorted(keys)

    def test_adjusted_box_used(self):
        ann = Annotation(
            column_id="demo_1r_c0", box=BBox(0, 0, 10, 10), class_id=1,
            origin=Origin.DETECTOR, status=Status.ADJUSTED, adjusted_box=BBox(10, 20, 30, 40),
        )
        assert write_labels([ann], 100, 200) == "1 0.250000 0.200000 0.300000 0.200000\n"


class TestReadLabels:
    def test_inverse_of_hand_example(self):
        got = read_labels("1 0.250000 0.200000 0.300000 0.200000", 100, 200)
        assert got == [(1, BBox(10, 20, 30, 40))]

    def test_width_above_one_rejected(self):
        with pytest.raises(MalformedLine):
            read_labels("1 0.5 0.5 1.5 0.2", 100, 100)

    def test_wrong_field_count(self):
        with pytest.raises(MalformedLine):
            read_labels("1 0.5 0.5 0.2", 100, 100)

    def test_unknown_class(self):
        with pytest.raises(MalformedLine):
            read_labels("2 0.5 0.5 0.2 0.2", 100, 100)

    def test_non_numeric(self):
        with pytest.raises(MalformedLine):
            read_labels("1 a 0.5 0.2 0.2", 100, 100)

    def test_roundtrip_thousand_random_boxes(self, rng):
        for _ in range(1000):
            img_w = int(rng.integers(50, 4100))
            img_h = int(rng.integers(50, 6200))
            w = int(rng.integers(1, img_w + 1))
            h = int(rng.integers(1, img_h + 1))
            x = int(rng.integers(0, img_w - w + 1))
            y = int(rng.integers(0, img_h - h + 1))
            original = BBox(x, y, w, h)
            text = write_labels([accepted(original)], img_w, img_h)
            (_, recovered), = read_labels(text, img_w, img_h)
            assert abs(recovered.x - original.x) <= 1
            assert abs(recovered.y - original.y) <= 1
            assert abs(recovered.w - original.w) <= 1
            assert abs(recovered.h - original.h) <= 1


class TestDetectionFiles:
    def test_roundtrip_exact_at_four_decimals(self, tmp_path):
        rec = DetectionRecord(
            column_id="demo_1r_c0", box=BBox(5, 6, 20, 24),
            class_id=1, confidence=0.8336, model_id="m-1",
        )
        path = tmp_path / "dets.jsonl"
        write_detections([rec], path)
        (back,) = read_detections(path)
        assert back == rec
        assert back.confidence == 0.8336

    def test_out_of_range_confidence(self):
        with pytest.raises(ConfidenceOutOfRange):
            parse_detections('{"column":"c","x":0,"y":0,"w":2,"h":2,"class":1,"confidence":1.2,"model_id":"m"}')

    def test_bad_class(self):
        with pytest.raises(MalformedRecord):
            parse_detections('{"column":"c","x":0,"y":0,"w":2,"h":2,"class":2,"confidence":0.5,"model_id":"m"}')

    def test_not_json(self):
        with pytest.raises(MalformedRecord):
            parse_detections("not a record")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_detections(path) == []


class TestManifest:
    def _store_with_pages(self, recto_pages=220, scribe="B"):
        store = AnnotationStore()
        for p in range(1, recto_pages + 1):
            for c in range(2):
                register(
                    store, f"demo_{p}r_c{c}", scribe=scribe, page=p, side=Side.RECTO, index=c,
                )
        return store

    def test_initial_window_has_120_training_columns(self):
        store = self._store_with_pages()
        spec = CycleSpec(
            cycle=1,
            train=PageWindow(sides=(Side.RECTO,), scribe="B", pages=60),
            inference=PageWindow(sides=(Side.RECTO,), scribe="B", pages=150, skip=60),
        )
        manifest = build_manifest(store, spec)
        assert len(manifest.training_set) == 120
        assert len(manifest.inference_columns) == 300
        assert set(manifest.training_set).isdisjoint(manifest.inference_columns)

    def test_expanded_window_covers_210_pages(self):
        store = self._store_with_pages()
        spec = CycleSpec(
            cycle=2,
            train=PageWindow(sides=(Side.RECTO,), scribe="B", pages=210),
            inference="remainder",
        )
        manifest = build_manifest(store, spec)
        pages = {cid.rsplit("_", 1)[0] for cid in manifest.training_set}
        assert len(pages) == 210
        assert len(manifest.inference_columns) == 20

    def test_overlapping_roles_rejected(self):
        store = self._store_with_pages(recto_pages=3)
        spec = CycleSpec(cycle=1, train=["demo_1r_c0"], inference=["demo_1r_c0", "demo_2r_c0"])
        with pytest.raises(OverlapError):
            build_manifest(store, spec)

    def test_manifest_disjointness_invariant(self):
        with pytest.raises(OverlapError):
            DatasetManifest(
                cycle=1, train_columns=["a_1r_c0"], val_columns=["a_1r_c0"], inference_columns=[],
            )

    def test_val_split_stable_and_small(self):
        ids = [f"demo_{p}r_c{c}" for p in range(1, 101) for c in range(2)]
        train, val = stable_val_split(ids)
        train2, val2 = stable_val_split(ids)
        assert (train, val) == (train2, val2)
        assert set(train) | set(val) == set(ids)
        assert 0 < len(val) < len(ids) * 0.2

    def test_json_roundtrip(self, tmp_path):
        manifest = DatasetManifest(
            cycle=2, train_columns=["a_1r_c0"], val_columns=["a_2r_c0"], inference_columns=["a_3r_c0"],
        )
        manifest.save(tmp_path / "manifest.json")
        back = DatasetManifest.load(tmp_path / "manifest.json")
        assert back == manifest
