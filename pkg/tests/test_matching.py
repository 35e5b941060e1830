import numpy as np
import pytest

from scribeloop.errors import ConstantTemplate, TemplateTooLarge
from scribeloop.matching import (
    MatchCandidate,
    Template,
    bootstrap_annotate,
    load_templates,
    match_candidates,
    ncc_map,
    nms,
    save_template,
)
from scribeloop.model import BBox, ColumnImage, Origin, PageRef, Side, Stage, Status
from scribeloop.synthetic import glyph_template, round_hand_glyph

from oracles import ncc_direct


def template(pixels, class_id=1):
    return Template(pixels=np.asarray(pixels, dtype=np.uint8), scribe="B", class_id=class_id)


class TestNccMap:
    def test_self_match_scores_one(self, rng):
        img = rng.integers(0, 256, size=(40, 50)).astype(np.uint8)
        t = template(img[12:20, 7:15].copy())
        m = ncc_map(img, t)
        assert m[12, 7] == pytest.approx(1.0, abs=1e-9)
        assert np.unravel_index(np.argmax(m), m.shape) == (12, 7)

    def test_photometric_negative_scores_minus_one(self, rng):
        img = rng.integers(0, 256, size=(30, 30)).astype(np.uint8)
        t = template(255 - img[5:12, 5:12])
        assert ncc_map(img, t)[5, 5] == pytest.approx(-1.0, abs=1e-9)

    def test_matches_direct_formula(self, rng):
        for _ in range(10):
            img = rng.integers(0, 256, size=(12, 12)).astype(np.uint8)
            t = rng.integers(0, 256, size=(4, 4)).astype(np.uint8)
            got = ncc_map(img, template(t))
            assert np.abs(got - ncc_direct(img, t)).max() < 1e-6

    def test_fft_path_matches_direct_formula(self, rng):
        # large enough to take the frequency-domain branch
        img = rng.integers(0, 256, size=(300, 260)).astype(np.uint8)
        t = rng.integers(0, 256, size=(24, 20)).astype(np.uint8)
        got = ncc_map(img, template(t))
        ys, xs = rng.integers(0, got.shape[0], 40), rng.integers(0, got.shape[1], 40)
        ref = ncc_direct(img, t)
        assert np.abs(got[ys, xs] - ref[ys, xs]).max() < 1e-6

    def test_values_bounded(self, rng):
        img = rng.integers(0, 256, size=(25, 25)).astype(np.uint8)
        m = ncc_map(img, template(rng.integers(0, 256, size=(6, 6)).astype(np.uint8)))
        assert m.min() >= -1.0 and m.max() <= 1.0

    def test_zero_variance_window_scores_zero(self):
        img = np.full((20, 20), 255, dtype=np.uint8)
        img[10:, :] = 0  # flat top half, flat bottom half, one edge
        t = template(np.array([[0, 255], [255, 0]]))
        m = ncc_map(img, t)
        assert m[0, 0] == 0.0  # all-white window
        assert m[-1, 0] == 0.0  # all-black window

    def test_translation_moves_argmax(self, rng):
        img = rng.normal(128, 30, size=(60, 60))
        t_pixels = rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
        img[20:28, 15:23] = t_pixels
        t = template(t_pixels)
        first = np.unravel_index(np.argmax(ncc_map(img, t)), (53, 53))
        shifted = np.roll(img, (7, -4), axis=(0, 1))
        second = np.unravel_index(np.argmax(ncc_map(shifted, t)), (53, 53))
        assert (second[0] - first[0], second[1] - first[1]) == (7, -4)

    def test_template_too_large(self):
        with pytest.raises(TemplateTooLarge):
            ncc_map(np.zeros((4, 4), np.uint8), template(np.arange(50).reshape(5, 10)))

    def test_constant_template_rejected(self):
        with pytest.raises(ConstantTemplate):
            template(np.full((4, 4), 7))


class TestMatchCandidates:
    def _map_template(self):
        return template(np.array([[0, 255], [255, 0]]))

    def test_threshold_above_max_yields_empty(self):
        m = np.full((5, 5), 0.97)
        assert match_candidates(m, 1.0, self._map_template()) == []

    def test_single_hit(self):
        m = np.zeros((5, 5))
        m[2, 3] = 0.9
        cands = match_candidates(m, 0.8, self._map_template())
        assert len(cands) == 1
        assert (cands[0].box.x, cands[0].box.y) == (3, 2)

    def test_sorted_by_score(self):
        m = np.zeros((3, 3))
        m[0, 0], m[1, 1], m[2, 2] = 0.9, 0.85, 0.7
        cands = match_candidates(m, 0.8, self._map_template())
        assert [c.score for c in cands] == [0.9, 0.85]


class TestNms:
    def test_identical_boxes_keep_highest(self):
        a = MatchCandidate(BBox(0, 0, 10, 10), 0.9)
        b = MatchCandidate(BBox(0, 0, 10, 10), 0.8)
        assert nms([a, b], 0.5) == [a]

    def test_disjoint_boxes_both_survive(self):
        a = MatchCandidate(BBox(0, 0, 10, 10), 0.9)
        b = MatchCandidate(BBox(50, 50, 10, 10), 0.8)
        assert nms([a, b], 0.3) == [a, b]

    def test_hand_computed_iou_boundary(self):
        a = MatchCandidate(BBox(0, 0, 10, 10), 0.9)
        b = MatchCandidate(BBox(5, 0, 10, 10), 0.8)  # IoU = 50/150 = 1/3
        assert nms([a, b], 0.3) == [a]
        assert nms([a, b], 0.35) == [a, b]

    def test_survivors_keep_input_order_and_are_subset(self, rng):
        from scribeloop.evaluation import iou

        for _ in range(25):
            items = [
                MatchCandidate(
                    BBox(int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                         int(rng.integers(4, 20)), int(rng.integers(4, 20))),
                    float(rng.uniform(0, 1)),
                )
                for _ in range(30)
            ]
            out = nms(items, 0.3)
            positions = [items.index(o) for o in out]
            assert positions == sorted(positions)
            for i, a in enumerate(out):
                for b in out[i + 1 :]:
                    assert iou(a.box, b.box) < 0.3


class TestBootstrapAnnotate:
    def _column(self, pixels):
        page = PageRef(
            manuscript="demo", page_number=1, side=Side.RECTO,
            width_px=pixels.shape[1], height_px=pixels.shape[0],
        )
        return ColumnImage(page=page, column_index=0, pixels=pixels, stage=Stage.BINARY)

    def test_planted_glyphs_recovered(self, rng):
        mask = round_hand_glyph()
        tmpl = glyph_template(mask, "B", 1, "round")
        board = np.full((400, 200), 255, dtype=np.uint8)
        planted = [(30, 20), (30, 120), (150, 60), (250, 20), (340, 130)]
        for y, x in planted:
            board[y : y + mask.shape[0], x : x + mask.shape[1]] = tmpl.pixels
        speckle = rng.random(board.shape) < 0.002
        board[speckle] = 0
        anns = bootstrap_annotate(self._column(board), [tmpl], tau_tm=0.7, iou_thresh=0.3)
        assert len(anns) == 5
        from scribeloop.evaluation import iou

        for y, x in planted:
            want = BBox(x, y, mask.shape[1], mask.shape[0])
            assert max(iou(a.box, want) for a in anns) >= 0.9
        assert all(a.status is Status.PENDING and a.origin is Origin.TEMPLATE_MATCH for a in anns)

    def test_blank_column_yields_nothing(self):
        tmpl = glyph_template(round_hand_glyph(), "B", 1, "round")
        board = np.full((200, 100), 255, dtype=np.uint8)
        assert bootstrap_annotate(self._column(board), [tmpl], 0.55, 0.3) == []

    def test_aggressive_threshold_yields_nothing(self, rng):
        tmpl = glyph_template(round_hand_glyph(), "B", 1, "round")
        board = np.where(rng.random((200, 100)) < 0.5, 0, 255).astype(np.uint8)
        assert bootstrap_annotate(self._column(board), [tmpl], 0.999, 0.3) == []

    def test_deterministic(self, rng):
        tmpl = glyph_template(round_hand_glyph(), "B", 1, "round")
        board = np.where(rng.random((150, 90)) < 0.4, 0, 255).astype(np.uint8)
        col = self._column(board)
        first = bootstrap_annotate(col, [tmpl], 0.3, 0.3)
        second = bootstrap_annotate(col, [tmpl], 0.3, 0.3)
        assert [(a.box, a.confidence) for a in first] == [(a.box, a.confidence) for a in second]


class TestTemplateStorage:
    def test_roundtrip_with_sidecar(self, tmp_path, rng):
        tmpl = Template(
            pixels=rng.integers(0, 256, size=(10, 8)).astype(np.uint8),
            scribe="F",
            class_id=1,
            name="sample",
        )
        save_template(tmpl, tmp_path)
        loaded = load_templates(tmp_path)
        assert len(loaded) == 1
        assert loaded[0].scribe == "F"
        assert loaded[0].class_id == 1
        assert (loaded[0].pixels == tmpl.pixels).all()
        assert load_templates(tmp_path, scribe="B") == []
