import numpy as np
import pytest

from scribeloop.config import RedRule, RoiConfig
from scribeloop.errors import EmptyImage, LayoutMismatch, RoiOutOfBounds
from scribeloop.model import BBox, Layout, PageRef, Side, Stage
from scribeloop.preprocess import (
    crop_columns,
    otsu_binarize,
    otsu_threshold,
    preprocess_page,
    remove_red,
    to_gray,
)

from oracles import otsu_exhaustive


def page_ref(width=600, height=800, layout=Layout.TWO_COLUMN):
    return PageRef(
        manuscript="demo", page_number=1, side=Side.RECTO,
        width_px=width, height_px=height, layout=layout,
    )


def two_roi_config(width=600, height=800):
    return RoiConfig(
        manuscript="demo",
        layout=Layout.TWO_COLUMN,
        rois=(BBox(20, 10, 250, 780), BBox(320, 10, 250, 780)),
    )


class TestCropColumns:
    def test_two_column_page(self, rng):
        raster = rng.integers(0, 256, size=(800, 600, 3)).astype(np.uint8)
        cols = crop_columns(raster, two_roi_config(), page_ref())
        assert len(cols) == 2
        assert [c.column_index for c in cols] == [0, 1]
        for c, roi in zip(cols, two_roi_config().rois):
            assert c.pixels.shape == (roi.h, roi.w, 3)
            assert c.stage is Stage.RAW_RGB

    def test_three_column_page(self, rng):
        cfg = RoiConfig(
            manuscript="demo",
            layout=Layout.THREE_COLUMN,
            rois=(BBox(0, 0, 150, 700), BBox(200, 0, 150, 700), BBox(400, 0, 150, 700)),
        )
        raster = rng.integers(0, 256, size=(700, 600, 3)).astype(np.uint8)
        cols = crop_columns(raster, cfg, page_ref(layout=Layout.THREE_COLUMN))
        assert len(cols) == 3

    def test_roi_one_pixel_past_edge(self, rng):
        cfg = RoiConfig(
            manuscript="demo",
            layout=Layout.TWO_COLUMN,
            rois=(BBox(20, 10, 250, 780), BBox(351, 10, 250, 780)),  # x2 = 601
        )
        raster = rng.integers(0, 256, size=(800, 600, 3)).astype(np.uint8)
        with pytest.raises(RoiOutOfBounds):
            crop_columns(raster, cfg, page_ref())

    def test_layout_mismatch(self, rng):
        raster = rng.integers(0, 256, size=(800, 600, 3)).astype(np.uint8)
        with pytest.raises(LayoutMismatch):
            crop_columns(raster, two_roi_config(), page_ref(layout=Layout.THREE_COLUMN))


class TestRemoveRed:
    def test_pure_red_becomes_white(self):
        img = np.array([[[255, 0, 0]]], dtype=np.uint8)
        assert (remove_red(img) == 255).all()

    def test_black_text_preserved(self):
        img = np.array([[[0, 0, 0]]], dtype=np.uint8)
        assert (remove_red(img) == 0).all()

    def test_no_qualifying_pixel_identity(self, rng):
        img = rng.integers(0, 100, size=(20, 20, 3)).astype(np.uint8)
        assert remove_red(img).tobytes() == img.tobytes()

    def test_dimension_preserved_and_idempotent(self, rng):
        img = rng.integers(0, 256, size=(30, 40, 3)).astype(np.uint8)
        once = remove_red(img)
        assert once.shape == img.shape
        assert (remove_red(once) == once).all()

    def test_rule_boundaries(self):
        rule = RedRule(red_min=120, dominance_margin=40)
        exactly = np.array([[[120, 80, 80]]], dtype=np.uint8)  # margin exactly 40
        assert (remove_red(exactly, rule) == 255).all()
        below = np.array([[[119, 60, 60]]], dtype=np.uint8)
        assert (remove_red(below, rule) == below).all()


class TestToGray:
    @pytest.mark.parametrize(
        "rgb,expected",
        [((255, 255, 255), 255), ((255, 0, 0), 76), ((0, 128, 0), 75), ((0, 0, 0), 0)],
    )
    def test_luma_values(self, rgb, expected):
        img = np.array([[rgb]], dtype=np.uint8)
        assert to_gray(img)[0, 0] == expected

    def test_dimension_preserved(self, rng):
        img = rng.integers(0, 256, size=(13, 17, 3)).astype(np.uint8)
        assert to_gray(img).shape == (13, 17)


class TestOtsu:
    def test_bimodal_split(self):
        img = np.concatenate([np.full(500, 30), np.full(500, 220)]).astype(np.uint8)
        img = img.reshape(25, 40)
        binary, t = otsu_binarize(img)
        assert 30 <= t < 220
        values, counts = np.unique(binary, return_counts=True)
        assert list(values) == [0, 255]
        assert list(counts) == [500, 500]

    def test_constant_image_degenerate(self):
        img = np.full((8, 8), 128, dtype=np.uint8)
        binary, t = otsu_binarize(img)
        assert t == 128
        assert (binary == 0).all()

    def test_empty_image(self):
        with pytest.raises(EmptyImage):
            otsu_threshold(np.zeros((0, 0), dtype=np.uint8))

    def test_matches_exhaustive_search(self, rng):
        for _ in range(50):
            img = rng.integers(0, 256, size=(64, 64)).astype(np.uint8)
            assert otsu_threshold(img) == otsu_exhaustive(img)

    def test_binary_polarity(self):
        img = np.array([[10, 10, 240, 240]], dtype=np.uint8)
        binary, t = otsu_binarize(img)
        assert (binary == np.array([[0, 0, 255, 255]])).all()


class TestPreprocessPage:
    def _synthetic_page(self, rng):
        page = np.full((800, 600, 3), (222, 212, 188), dtype=np.uint8)
        # dark glyph strokes inside both columns
        page[100:120, 60:80] = (40, 40, 40)
        page[300:330, 380:400] = (45, 42, 40)
        # red initial inside the first column
        page[200:230, 100:130] = (200, 30, 30)
        noise = rng.normal(0, 4, size=page.shape)
        return np.clip(page.astype(np.int16) + noise.astype(np.int16), 0, 255).astype(np.uint8)

    def test_red_initials_vanish(self, rng):
        page = self._synthetic_page(rng)
        cols = preprocess_page(page, two_roi_config(), RedRule(), page_ref())
        first = cols[0]
        # red initial sat at page (200:230, 100:130) -> column-local (190:220, 80:110)
        assert (first.pixels[190:220, 80:110] == 255).all()
        # glyph at page (100:120, 60:80) -> column-local (90:110, 40:60) stays ink
        assert (first.pixels[95:105, 45:55] == 0).all()

    def test_all_white_page(self):
        page = np.full((800, 600, 3), 255, dtype=np.uint8)
        cols = preprocess_page(page, two_roi_config(), RedRule(), page_ref())
        for c in cols:
            assert (c.pixels == 0).all() or len(np.unique(c.pixels)) == 1

    def test_binary_stage_and_composition(self, rng):
        page = self._synthetic_page(rng)
        cfg, rule, ref = two_roi_config(), RedRule(), page_ref()
        cols = preprocess_page(page, cfg, rule, ref)
        assert len(cols) == 2
        for whole, raw in zip(cols, crop_columns(page, cfg, ref)):
            assert whole.stage is Stage.BINARY
            assert set(np.unique(whole.pixels)) <= {0, 255}
            direct, _ = otsu_binarize(to_gray(remove_red(raw.pixels, rule)))
            assert (whole.pixels == direct).all()
