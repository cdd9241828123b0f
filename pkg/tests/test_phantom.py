"""Tests for toothseglib.stages.phantom."""

from __future__ import annotations

import numpy as np
import pytest

from toothseglib.core.exceptions import PhantomError
from toothseglib.stages.phantom import (
    JawArch,
    PhantomConfig,
    ToothSpec,
    default_jaw,
    generate_phantom,
    save_study,
)
from toothseglib.stages.volume import load_intensity, load_labels
from toothseglib.stages.weaklabels import parse_annotations


def _tooth(number: int, x_mm: float, radius: float = 2.0) -> ToothSpec:
    return ToothSpec(number, (4.0, 8.0, x_mm), (12.0, 8.0, x_mm), radius, radius / 2)


class TestGeneratePhantom:
    def test_zero_teeth(self):
        cfg = PhantomConfig(shape=(10, 12, 14), background_intensity=-1000.0)
        image, labels, annotations = generate_phantom(cfg)
        assert np.all(image.data == -1000.0)
        assert not labels.labels.any()
        assert annotations.boxes == ()

    def test_single_tooth_values(self):
        cfg = PhantomConfig(shape=(40, 40, 40), teeth=(_tooth(14, 8.0),), background_intensity=-100.0)
        image, labels, _ = generate_phantom(cfg)
        inside = labels.labels == 14
        assert inside.any()
        assert np.all(image.data[inside] == -100.0 + 1500.0)
        assert np.all(image.data[~inside] == -100.0)
        assert labels.present_labels() == [14]

    def test_capsule_geometry(self):
        tooth = ToothSpec(3, (4.5, 8.5, 8.5), (12.5, 8.5, 8.5), 2.0, 1.0)
        cfg = PhantomConfig(shape=(16, 16, 16), spacing_mm=(1.0, 1.0, 1.0), teeth=(tooth,))
        _, labels, _ = generate_phantom(cfg)
        # Voxel (4, 8, 8) is centered on the crown center.
        assert labels.labels[4, 8, 8] == 3
        assert labels.labels[4, 8, 10] == 3
        assert labels.labels[4, 8, 11] == 0
        # Root tip sphere has radius 1.
        assert labels.labels[12, 8, 9] == 3
        assert labels.labels[12, 8, 10] == 0

    def test_tooth_overrides_jaw(self):
        arch = JawArch(8.0, 0.0, 8.0, 6.0, 0.0, 16.0, 3.0)
        cfg = PhantomConfig(shape=(40, 40, 40), teeth=(_tooth(5, 8.0),), arches=(arch,))
        image, labels, _ = generate_phantom(cfg)
        assert np.all(image.data[labels.labels == 5] == 1500.0)
        assert np.any(image.data == 500.0)

    def test_overlap_rejected(self):
        cfg = PhantomConfig(shape=(40, 40, 40), teeth=(_tooth(1, 6.0), _tooth(2, 8.0)))
        with pytest.raises(PhantomError, match="overlap"):
            generate_phantom(cfg)

    def test_out_of_volume_rejected(self):
        with pytest.raises(PhantomError, match="outside"):
            PhantomConfig(shape=(10, 10, 10), teeth=(_tooth(1, 8.0),))

    def test_duplicate_numbers_rejected(self):
        with pytest.raises(PhantomError, match="duplicate"):
            PhantomConfig(shape=(40, 40, 40), teeth=(_tooth(1, 4.0), _tooth(1, 12.0)))

    def test_annotations_follow_ground_truth(self, small_study):
        s = small_study
        counts = {}
        for box in s.annotations.boxes:
            counts[box.tooth_number] = counts.get(box.tooth_number, 0) + 1
            y0, x0, y1, x1 = box.box
            plane = s.labels.labels[box.slice_index] == box.tooth_number
            ys, xs = np.nonzero(plane)
            assert (ys.min(), xs.min(), ys.max() + 1, xs.max() + 1) == (y0, x0, y1, x1)
        assert set(counts) == set(s.labels.present_labels())
        assert all(3 <= n <= 7 for n in counts.values())

    def test_tooth_thinner_than_three_slices_rejected(self):
        flat = ToothSpec(6, (4.5, 8.0, 8.0), (4.5, 8.0, 8.0), 0.8, 0.8)
        cfg = PhantomConfig(shape=(16, 16, 16), spacing_mm=(1.0, 1.0, 1.0), teeth=(flat,))
        with pytest.raises(PhantomError, match="1 axial slices"):
            generate_phantom(cfg)

    @pytest.mark.parametrize("seed", range(6))
    def test_short_tooth_gets_distinct_slices(self, seed):
        # Slice centers 3.5 .. 6.5 lie within 1.6 mm of z = 5.0, so the tooth spans 4 slices.
        short = ToothSpec(6, (5.0, 8.5, 8.5), (5.0, 8.5, 8.5), 1.6, 1.6)
        cfg = PhantomConfig(shape=(16, 16, 16), spacing_mm=(1.0, 1.0, 1.0), teeth=(short,), seed=seed)
        _, labels, annotations = generate_phantom(cfg)
        slices = [box.slice_index for box in annotations.boxes]
        assert 3 <= len(slices) <= 4
        assert len(set(slices)) == len(slices)
        assert set(slices) <= set(np.flatnonzero((labels.labels == 6).any(axis=(1, 2))).tolist())

    def test_noise_is_seeded(self):
        cfg = PhantomConfig(shape=(8, 8, 8), noise_sigma=10.0, seed=42)
        a, _, _ = generate_phantom(cfg)
        b, _, _ = generate_phantom(cfg)
        assert a == b
        assert a.data.std() > 0

    def test_negative_noise_rejected(self):
        with pytest.raises(PhantomError):
            PhantomConfig(shape=(8, 8, 8), noise_sigma=-1.0)


class TestDefaultJaw:
    def test_one_tooth(self):
        cfg = default_jaw(1, (96, 96, 96))
        assert len(cfg.teeth) == 1
        assert cfg.study_id == "phantom-1-0"

    def test_eight_teeth_numbered_around_midline(self):
        cfg = default_jaw(8, (96, 96, 96))
        numbers = sorted(t.tooth_number for t in cfg.teeth)
        assert numbers == [7, 8, 9, 10, 23, 24, 25, 26]
        assert len(cfg.arches) == 2

    def test_thirty_two_teeth_fit(self):
        cfg = default_jaw(32, (160, 160, 160), (0.4, 0.4, 0.4), seed=2)
        _, labels, annotations = generate_phantom(cfg)
        assert labels.present_labels() == list(range(1, 33))
        assert annotations.teeth() == list(range(1, 33))

    def test_sixteen_teeth_are_reproducible(self):
        cfg = default_jaw(16, (160, 160, 160), (0.4, 0.4, 0.4), seed=42, noise_sigma=20.0)
        first = generate_phantom(cfg)
        second = generate_phantom(cfg)
        assert first[0] == second[0]
        assert first[1] == second[1]
        assert first[2] == second[2]

    @pytest.mark.parametrize("n", [0, 33])
    def test_tooth_count_range(self, n):
        with pytest.raises(PhantomError):
            default_jaw(n)

    def test_grid_too_small(self):
        with pytest.raises(PhantomError):
            default_jaw(32, (24, 24, 24), (0.4, 0.4, 0.4))


def test_save_study(tmp_path, single_tooth_study):
    s = single_tooth_study
    written = save_study(tmp_path / "study", s.image, s.labels, s.annotations)
    assert sorted(p.name for p in written.values()) == ["ann.json", "image.vjson", "labels.vjson"]
    assert load_intensity(written["image"]) == s.image
    assert load_labels(written["labels"]) == s.labels
    assert parse_annotations(written["annotations"]) == s.annotations
