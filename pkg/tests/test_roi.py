"""Tests for toothseglib.stages.roi."""

from __future__ import annotations

import json

import numpy as np
import pytest

from tests.oracles import bounding_box_oracle, largest_component_oracle, random_mask
from toothseglib.core.exceptions import EmptyMaskError, GeometryError, ToothNotFoundError
from toothseglib.stages.roi import (
    Box3,
    bounding_box,
    coarse_to_fine_box,
    expand_box,
    extract_roi,
    largest_component,
    load_roi_sidecar,
    save_roi,
    stitch,
)
from toothseglib.stages.volume import LabelVolume, Volume, resample_labels


def _labels(array) -> LabelVolume:
    return LabelVolume(np.asarray(array, dtype=np.uint8), (1.0, 1.0, 1.0))


def _probs(value: float, shape) -> Volume:
    return Volume(np.full(shape, value), (1.0, 1.0, 1.0), "probability")


class TestBox3:
    def test_rejects_empty_extent(self):
        with pytest.raises(GeometryError):
            Box3((0, 0, 0), (1, 0, 1))

    def test_shape_and_containment(self):
        outer = Box3((0, 0, 0), (4, 4, 4))
        inner = Box3((1, 1, 1), (3, 4, 2))
        assert inner.shape == (2, 3, 1)
        assert outer.contains(inner)
        assert not inner.contains(outer)
        assert inner.within((4, 4, 4))


class TestLargestComponent:
    def test_absent_tooth_gives_empty_mask(self):
        out = largest_component(_labels(np.zeros((4, 4, 4))), 3)
        assert not out.labels.any()

    def test_single_blob(self):
        array = np.zeros((6, 6, 6))
        array[1:4, 2:5, 0:3] = 7
        out = largest_component(_labels(array), 7)
        np.testing.assert_array_equal(out.labels, (array == 7).astype(np.uint8))

    def test_keeps_bigger_of_two(self):
        array = np.zeros((10, 10, 10))
        array[0, 0, 0:10] = 2
        array[5, 5, 0:4] = 2
        out = largest_component(_labels(array), 2)
        assert out.labels.sum() == 10
        assert out.labels[0, 0, 0] == 1

    def test_tie_goes_to_smallest_min_corner(self):
        # Both components have two voxels. The first one reached in raster
        # order is (0, 4, 9), but (0, 4, 4) is the smaller corner.
        array = np.zeros((3, 10, 10))
        array[0, 5, 5] = array[1, 4, 4] = 5
        array[0, 4, 9] = array[1, 4, 9] = 5
        out = largest_component(_labels(array), 5, connectivity=26)
        assert sorted(zip(*np.nonzero(out.labels))) == [(0, 5, 5), (1, 4, 4)]
        np.testing.assert_array_equal(out.labels, largest_component_oracle(array == 5, 26))

    @pytest.mark.parametrize("connectivity", [6, 26])
    def test_matches_flood_fill(self, connectivity):
        rng = np.random.default_rng(connectivity)
        for _ in range(25):
            mask = random_mask(rng, (16, 16, 16), rng.uniform(0.05, 0.3))
            lv = _labels(mask * 4)
            out = largest_component(lv, 4, connectivity)
            np.testing.assert_array_equal(out.labels, largest_component_oracle(mask, connectivity))
            assert np.all(lv.labels[out.labels == 1] == 4)

    @pytest.mark.slow
    @pytest.mark.parametrize("connectivity", [6, 26])
    def test_matches_flood_fill_on_200_masks(self, connectivity):
        rng = np.random.default_rng(100 + connectivity)
        for _ in range(200):
            # Sparse masks leave many equal-sized fragments.
            mask = random_mask(rng, (16, 16, 16), rng.uniform(0.01, 0.3))
            out = largest_component(_labels(mask * 4), 4, connectivity)
            np.testing.assert_array_equal(out.labels, largest_component_oracle(mask, connectivity))

    def test_bad_connectivity(self):
        with pytest.raises(ValueError):
            largest_component(_labels(np.ones((2, 2, 2))), 1, connectivity=8)


class TestBoundingBox:
    def test_single_voxel(self):
        array = np.zeros((6, 6, 6))
        array[2, 3, 4] = 1
        box = bounding_box(_labels(array))
        assert box == Box3((2, 3, 4), (3, 4, 5))

    def test_full_volume(self):
        assert bounding_box(_labels(np.ones((3, 4, 5)))) == Box3((0, 0, 0), (3, 4, 5))

    def test_empty(self):
        with pytest.raises(EmptyMaskError):
            bounding_box(_labels(np.zeros((3, 3, 3))))

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            mask = random_mask(rng, (12, 9, 14), 0.01)
            if not mask.any():
                continue
            box = bounding_box(_labels(mask))
            assert (box.min, box.max) == bounding_box_oracle(mask)


class TestExpandBox:
    def test_three_mm_at_one_mm(self):
        out = expand_box(Box3((5, 5, 5), (8, 8, 8)), 3.0, (1.0, 1.0, 1.0), (20, 20, 20))
        assert out == Box3((2, 2, 2), (11, 11, 11))

    def test_zero_margin_is_identity(self):
        box = Box3((1, 2, 3), (4, 5, 6))
        assert expand_box(box, 0.0, (1.0, 1.0, 1.0), (10, 10, 10)) == box

    def test_fine_spacing_clamps_at_zero(self):
        # ceil(3 / 0.2) = 15 voxels.
        out = expand_box(Box3((4, 20, 30), (6, 22, 32)), 3.0, (0.2, 0.2, 0.2), (100, 100, 100))
        assert out == Box3((0, 5, 15), (21, 37, 47))

    def test_clamps_at_upper_bound(self):
        out = expand_box(Box3((7, 7, 7), (9, 9, 9)), 3.0, (1.0, 1.0, 1.0), (10, 10, 10))
        assert out.max == (10, 10, 10)

    def test_margin_monotone(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            lo = rng.integers(0, 20, size=3)
            hi = lo + rng.integers(1, 10, size=3)
            box = Box3(tuple(lo), tuple(hi))
            m1, m2 = sorted(rng.uniform(0.0, 6.0, size=2))
            spacing = tuple(rng.uniform(0.2, 1.5, size=3))
            small = expand_box(box, m1, spacing, (40, 40, 40))
            large = expand_box(box, m2, spacing, (40, 40, 40))
            assert large.contains(small)
            assert small.contains(box)

    def test_negative_margin(self):
        with pytest.raises(ValueError):
            expand_box(Box3((0, 0, 0), (1, 1, 1)), -1.0, (1, 1, 1), (2, 2, 2))


class TestCoarseToFineBox:
    def test_spacing_ratio_four(self):
        box = Box3((2, 3, 4), (5, 7, 9))
        out = coarse_to_fine_box(box, (1.0, 1.0, 1.0), (0.25, 0.25, 0.25), (100, 100, 100))
        assert out == Box3((8, 12, 16), (20, 28, 36))

    def test_rounds_outward(self):
        box = Box3((1, 1, 1), (3, 3, 3))
        out = coarse_to_fine_box(box, (1.0, 1.0, 1.0), (0.4, 0.4, 0.4), (50, 50, 50))
        # 1 mm -> 2.5 voxels floors to 2; 3 mm -> 7.5 ceils to 8.
        assert out == Box3((2, 2, 2), (8, 8, 8))

    def test_box_at_coarse_end_reaches_fine_end(self):
        box = Box3((30, 30, 30), (38, 38, 38))
        out = coarse_to_fine_box(box, (1.0, 1.0, 1.0), (0.4, 0.4, 0.4), (96, 96, 96), (38, 38, 38))
        assert out.max == (96, 96, 96)


class TestExtractRoi:
    def test_unit_ratio_crop(self):
        image = Volume(np.arange(1000.0).reshape(10, 10, 10), (1, 1, 1))
        coarse = np.zeros((10, 10, 10))
        coarse[4:6, 4:6, 4:6] = 3
        crop = extract_roi(_labels(coarse), image, None, 3, margin_mm=2.0)
        assert crop.box_fine == Box3((2, 2, 2), (8, 8, 8))
        np.testing.assert_array_equal(crop.image.data, image.data[2:8, 2:8, 2:8])
        assert crop.target is None

    def test_target_is_binarized(self):
        image = Volume(np.zeros((8, 8, 8)), (1, 1, 1))
        target = np.zeros((8, 8, 8))
        target[3:5, 3:5, 3:5] = 6
        target[3, 3, 5] = 2
        crop = extract_roi(_labels(target), image, _labels(target), 6, margin_mm=1.0)
        assert set(np.unique(crop.target.labels)) == {0, 1}
        assert crop.target.labels.sum() == 8

    def test_missing_tooth(self):
        with pytest.raises(ToothNotFoundError):
            extract_roi(_labels(np.zeros((4, 4, 4))), Volume(np.zeros((4, 4, 4)), (1, 1, 1)), None, 5)

    def test_grids_must_cover_same_extent(self):
        with pytest.raises(GeometryError):
            extract_roi(
                _labels(np.ones((4, 4, 4))), Volume(np.zeros((20, 20, 20)), (1, 1, 1)), None, 1
            )

    def test_crop_contains_ground_truth_tooth(self, small_study):
        s = small_study
        coarse = resample_labels(s.labels, 1.0)
        for tooth in s.labels.present_labels():
            crop = extract_roi(coarse, s.image, s.labels, tooth, margin_mm=3.0)
            inside = int(crop.target.labels.sum())
            assert inside == int(np.count_nonzero(s.labels.labels == tooth))

    def test_prior_has_crop_shape(self, small_study):
        s = small_study
        coarse = resample_labels(s.labels, 1.0)
        tooth = s.labels.present_labels()[0]
        crop = extract_roi(coarse, s.image, None, tooth)
        assert crop.prior.shape == crop.image.shape
        assert set(np.unique(crop.prior.labels)) <= {0, 1}


class TestStitch:
    def test_single_full_crop(self):
        box = Box3((1, 1, 1), (3, 3, 3))
        out = stitch([(4, box, _probs(1.0, box.shape))], (4, 4, 4))
        assert np.all(out.labels[box.slices] == 4)
        assert out.labels.sum() == 4 * 8

    def test_no_crops(self):
        assert not stitch([], (3, 3, 3)).labels.any()

    def test_higher_probability_wins(self):
        a = Box3((0, 0, 0), (2, 2, 2))
        b = Box3((1, 1, 1), (3, 3, 3))
        crops = [(1, a, _probs(0.6, a.shape)), (2, b, _probs(0.9, b.shape))]
        out = stitch(crops, (3, 3, 3))
        assert out.labels[1, 1, 1] == 2
        assert out.labels[0, 0, 0] == 1
        assert stitch(list(reversed(crops)), (3, 3, 3)) == out

    def test_ties_go_to_lowest_tooth(self):
        box = Box3((0, 0, 0), (2, 2, 2))
        crops = [(9, box, _probs(0.7, box.shape)), (3, box, _probs(0.7, box.shape))]
        assert np.all(stitch(crops, (2, 2, 2)).labels == 3)

    def test_below_threshold_is_background(self):
        box = Box3((0, 0, 0), (2, 2, 2))
        assert not stitch([(1, box, _probs(0.49, box.shape))], (2, 2, 2)).labels.any()

    def test_shape_mismatch(self):
        box = Box3((0, 0, 0), (2, 2, 2))
        with pytest.raises(GeometryError):
            stitch([(1, box, _probs(1.0, (3, 2, 2)))], (4, 4, 4))

    def test_oracle_round_trip(self, small_study):
        s = small_study
        coarse = resample_labels(s.labels, 1.0)
        crops = []
        for tooth in s.labels.present_labels():
            crop = extract_roi(coarse, s.image, s.labels, tooth)
            probs = Volume(crop.target.labels.astype(np.float32), s.image.spacing_mm, "probability")
            crops.append((tooth, crop.box_fine, probs))
        assert stitch(crops, s.labels.shape, spacing_mm=s.labels.spacing_mm) == s.labels


class TestSaveRoi:
    def test_writes_volumes_and_sidecar(self, tmp_path):
        image = Volume(np.arange(512.0).reshape(8, 8, 8), (1, 1, 1))
        coarse = np.zeros((8, 8, 8))
        coarse[2:4, 2:4, 2:4] = 11
        crop = extract_roi(_labels(coarse), image, _labels(coarse), 11, margin_mm=1.0)
        written = save_roi(crop, tmp_path / "rois")
        assert written["image"].name == "tooth_11_image.vjson"
        assert written["target"].name == "tooth_11_target.vjson"
        sidecar = json.loads(written["sidecar"].read_text())
        assert sidecar["box_fine"] == [[1, 1, 1], [5, 5, 5]]
        tooth, fine, coarse_box = load_roi_sidecar(written["sidecar"])
        assert tooth == 11
        assert fine == crop.box_fine
        assert coarse_box == crop.box
