"""Coarse and fine segmenter interfaces with reference implementations.

A coarse segmenter maps an isotropic image to a 33-class probability stack.
A fine segmenter maps one tooth's RoI crop to a per-voxel probability that
the voxel belongs to that tooth. Trained networks plug in through the
``external`` segmenters, which read probability volumes from disk.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage
from scipy.special import expit
from skimage.filters import threshold_multiotsu, threshold_otsu

from toothseglib.core.exceptions import GeometryError, SegmenterError, VolumeNotFoundError
from toothseglib.core.utils.logging import get_logger
from toothseglib.stages.metrics import N_CLASSES, ProbStack
from toothseglib.stages.roi import RoICrop
from toothseglib.stages.volume import (
    MAX_LABEL,
    LabelVolume,
    Volume,
    load_intensity,
    resample_labels_to,
    same_geometry,
)
from toothseglib.stages.weaklabels import Centerline, DistanceField, EnergyParams, distance_field, energy_argmax

logger = get_logger("toothseglib.stages.segmenters")

COARSE_NAMES = ("oracle", "classical", "external")
FINE_NAMES = ("oracle", "threshold", "upsample", "external")


@runtime_checkable
class CoarseSegmenter(Protocol):
    """33-class segmentation of a whole isotropic volume."""

    def segment_coarse(self, image: Volume) -> ProbStack: ...


@runtime_checkable
class FineSegmenter(Protocol):
    """Binary segmentation of one tooth inside its RoI crop."""

    def segment_fine(self, crop: RoICrop) -> Volume: ...


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters of the coarse-to-fine run.

    Attributes:
        coarse_spacing_mm: Isotropic spacing of the coarse stage.
        margin_mm: Physical margin added around each coarse tooth box.
        stitch_threshold: Fine probability at which a voxel joins its tooth.
        lo_pct: Lower clipping percentile of intensity normalization.
        hi_pct: Upper clipping percentile of intensity normalization.
        connectivity: 6 or 26, used when picking each tooth's component.
    """

    coarse_spacing_mm: float = 1.0
    margin_mm: float = 3.0
    stitch_threshold: float = 0.5
    lo_pct: float = 5.0
    hi_pct: float = 99.5
    connectivity: int = 26

    def __post_init__(self) -> None:
        if self.coarse_spacing_mm <= 0:
            raise ValueError("coarse_spacing_mm must be positive")
        if self.margin_mm < 0:
            raise ValueError("margin_mm must be >= 0")
        if not 0.0 < self.stitch_threshold <= 1.0:
            raise ValueError("stitch_threshold must lie in (0, 1]")
        if not 0.0 <= self.lo_pct < self.hi_pct <= 100.0:
            raise ValueError("need 0 <= lo_pct < hi_pct <= 100")
        if self.connectivity not in (6, 26):
            raise ValueError("connectivity must be 6 or 26")


# =============================================================================
# Oracles
# =============================================================================


@dataclass(frozen=True)
class OracleCoarse:
    gt: LabelVolume

    def segment_coarse(self, image: Volume) -> ProbStack:
        labels = resample_labels_to(self.gt, image.shape, image.spacing_mm)
        return ProbStack.one_hot(labels)


@dataclass(frozen=True)
class OracleFine:
    gt: LabelVolume

    def segment_fine(self, crop: RoICrop) -> Volume:
        if not crop.box_fine.within(self.gt.shape):
            raise GeometryError(
                f"oracle ground truth {self.gt.shape} does not contain box {crop.box_fine.to_list()}"
            )
        inside = self.gt.labels[crop.box_fine.slices] == crop.tooth_number
        return Volume(inside.astype(np.float32), crop.image.spacing_mm, "probability")


def oracle_coarse(gt: LabelVolume) -> CoarseSegmenter:
    """Segmenter answering with the one-hot of ``gt`` on the requested grid."""
    return OracleCoarse(gt)


def oracle_fine(gt: LabelVolume) -> FineSegmenter:
    """Segmenter answering with the binarized ``gt`` inside each crop."""
    return OracleFine(gt)


# =============================================================================
# Classical stand-ins
# =============================================================================


def bright_threshold(values: np.ndarray) -> float | None:
    """Upper Otsu threshold separating the brightest intensity class.

    Three-class Otsu separates background, bone and tooth; histograms too
    poor for three classes fall back to two-class Otsu. Constant input has
    no threshold.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0 or values.min() == values.max():
        return None
    try:
        return float(threshold_multiotsu(values, classes=3)[-1])
    except ValueError:
        return float(threshold_otsu(values))


def _slice_centerline(tooth: int, component: np.ndarray, spacing: tuple[float, float, float]) -> Centerline:
    points = []
    for z in np.flatnonzero(component.any(axis=(1, 2))):
        ys, xs = np.nonzero(component[z])
        points.append(
            ((z + 0.5) * spacing[0], (ys.mean() + 0.5) * spacing[1], (xs.mean() + 0.5) * spacing[2])
        )
    return Centerline(tooth, np.array(points))


@dataclass(frozen=True)
class ClassicalCoarse:
    """Otsu bright mask, per-component centerlines and the energy argmax.

    With ``params`` unset the energy is calibrated per volume: the background
    energy is the bright threshold and the slope makes a voxel at the median
    bright intensity fall to that threshold ``reach_mm`` away from its
    centerline.
    """

    params: EnergyParams | None = None
    min_volume_mm3: float = 8.0
    reach_mm: float = 4.0
    connectivity: int = 26

    def _energy(self, values: np.ndarray, threshold: float) -> EnergyParams:
        if self.params is not None:
            return self.params
        contrast = float(np.median(values[values > threshold])) - threshold
        return EnergyParams(k=-max(contrast, 1e-6) / self.reach_mm, background_energy=threshold)

    def segment_coarse(self, image: Volume) -> ProbStack:
        empty = LabelVolume(np.zeros(image.shape, dtype=np.uint8), image.spacing_mm)
        threshold = bright_threshold(image.data)
        if threshold is None:
            logger.warning("classical_coarse: constant volume, no teeth")
            return ProbStack.one_hot(empty)

        bright = image.data > threshold
        structure = ndimage.generate_binary_structure(3, 3 if self.connectivity == 26 else 1)
        components, count = ndimage.label(bright, structure=structure)
        voxel_mm3 = float(np.prod(image.spacing_mm))
        min_voxels = max(1, math.ceil(self.min_volume_mm3 / voxel_mm3))
        sizes = np.bincount(components.ravel(), minlength=count + 1)
        kept = [c for c in range(1, count + 1) if sizes[c] >= min_voxels]
        if len(kept) > MAX_LABEL:
            kept = sorted(sorted(kept, key=lambda c: -int(sizes[c]))[:MAX_LABEL])
        if not kept:
            logger.warning("classical_coarse: no bright components above %d voxels", min_voxels)
            return ProbStack.one_hot(empty)

        params = self._energy(image.data, threshold)
        logger.info(
            "classical_coarse: %d components, threshold %.4g, k %.4g", len(kept), threshold, params.k
        )

        def fields() -> Iterator[tuple[int, DistanceField]]:
            for tooth, component in enumerate(kept, start=1):
                line = _slice_centerline(tooth, components == component, image.spacing_mm)
                yield tooth, distance_field(image.shape, image.spacing_mm, line, params.distance_mode)

        return ProbStack.one_hot(energy_argmax(image, fields(), params))


def classical_coarse(params: EnergyParams | None = None) -> CoarseSegmenter:
    """Classical coarse stand-in; see :class:`ClassicalCoarse`."""
    return ClassicalCoarse(params)


@dataclass(frozen=True)
class ThresholdFine:
    """Soft threshold between the crop's robust low and high intensities.

    The threshold sits at ``quantile`` of the way from the 1st to the 99th
    intensity percentile. Only the component of ``p >= 0.5`` with the most
    voxels in the central third of the crop keeps its probabilities.
    """

    quantile: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"threshold quantile must lie in (0, 1), got {self.quantile}")

    def segment_fine(self, crop: RoICrop) -> Volume:
        values = crop.image.data.astype(np.float64)
        lo, hi = np.percentile(values, [1.0, 99.0])
        spread = hi - lo
        if spread <= 0:
            return Volume(np.full(crop.image.shape, 0.5), crop.image.spacing_mm, "probability")
        cut = lo + self.quantile * spread
        probs = expit((values - cut) / (0.05 * spread))

        components, count = ndimage.label(probs >= 0.5, structure=ndimage.generate_binary_structure(3, 3))
        if count > 1:
            center = tuple(slice(n // 3, max(n // 3 + 1, n - n // 3)) for n in crop.image.shape)
            hits = np.bincount(components[center].ravel(), minlength=count + 1)
            hits[0] = 0
            keep = int(np.argmax(hits)) if hits.any() else 0
            if keep:
                probs = np.where((components == keep) | (components == 0), probs, 0.0)
        return Volume(probs, crop.image.spacing_mm, "probability")


def threshold_fine(threshold_quantile: float = 0.5) -> FineSegmenter:
    """Classical fine stand-in; see :class:`ThresholdFine`."""
    return ThresholdFine(threshold_quantile)


@dataclass(frozen=True)
class UpsampleFine:
    """Coarse-only regime: the coarse component mapped onto the crop grid."""

    def segment_fine(self, crop: RoICrop) -> Volume:
        if crop.prior is None:
            raise SegmenterError(f"crop of tooth {crop.tooth_number} carries no coarse prior")
        return Volume(crop.prior.labels.astype(np.float32), crop.image.spacing_mm, "probability")


def upsample_fine() -> FineSegmenter:
    return UpsampleFine()


# =============================================================================
# External probability volumes
# =============================================================================


def _load_probability(path: Path) -> Volume:
    volume = load_intensity(path)
    if volume.data.size and (volume.data.min() < 0.0 or volume.data.max() > 1.0):
        raise SegmenterError(f"{path}: probabilities outside [0, 1]")
    return Volume(volume.data, volume.spacing_mm, "probability")


@dataclass(frozen=True)
class ExternalCoarse:
    """Reads ``class_XX.vjson`` (XX = 00..32) from ``directory``; missing classes are zero."""

    directory: Path

    def segment_coarse(self, image: Volume) -> ProbStack:
        probs = np.zeros((N_CLASSES, *image.shape))
        found = 0
        for c in range(N_CLASSES):
            path = self.directory / f"class_{c:02d}.vjson"
            if not path.exists():
                continue
            volume = _load_probability(path)
            if not same_geometry(volume, image):
                raise GeometryError(
                    f"{path}: grid {volume.shape}@{volume.spacing_mm} differs from "
                    f"coarse image {image.shape}@{image.spacing_mm}"
                )
            probs[c] = volume.data
            found += 1
        if found == 0:
            raise SegmenterError(f"no class_XX.vjson probability volumes in {self.directory}")
        return ProbStack(probs, image.spacing_mm)


@dataclass(frozen=True)
class ExternalFine:
    """Reads ``tooth_XX.vjson`` at crop geometry from ``directory``."""

    directory: Path

    def segment_fine(self, crop: RoICrop) -> Volume:
        path = self.directory / f"tooth_{crop.tooth_number:02d}.vjson"
        try:
            volume = _load_probability(path)
        except VolumeNotFoundError as e:
            raise SegmenterError(f"no fine probabilities for tooth {crop.tooth_number}: {e}") from e
        if volume.shape != crop.image.shape:
            raise GeometryError(
                f"{path}: shape {volume.shape} differs from crop {crop.image.shape}"
            )
        return Volume(volume.data, crop.image.spacing_mm, "probability")


def external_coarse(directory: str | Path) -> CoarseSegmenter:
    return ExternalCoarse(Path(directory))


def external_fine(directory: str | Path) -> FineSegmenter:
    return ExternalFine(Path(directory))


# =============================================================================
# Selection by name
# =============================================================================


def get_coarse(
    name: str,
    *,
    gt: LabelVolume | None = None,
    directory: str | Path | None = None,
    params: EnergyParams | None = None,
) -> CoarseSegmenter:
    """Build the coarse segmenter called ``name``.

    Raises:
        SegmenterError: Unknown name or a missing input the segmenter needs.
    """
    if name == "oracle":
        if gt is None:
            raise SegmenterError("the oracle coarse segmenter needs ground-truth labels")
        return oracle_coarse(gt)
    if name == "classical":
        return classical_coarse(params)
    if name == "external":
        if directory is None:
            raise SegmenterError("the external coarse segmenter needs a probability directory")
        return external_coarse(directory)
    raise SegmenterError(f"unknown coarse segmenter {name!r}; choose from {', '.join(COARSE_NAMES)}")


def get_fine(
    name: str,
    *,
    gt: LabelVolume | None = None,
    directory: str | Path | None = None,
    quantile: float = 0.5,
) -> FineSegmenter:
    """Build the fine segmenter called ``name``.

    Raises:
        SegmenterError: Unknown name or a missing input the segmenter needs.
    """
    if name == "oracle":
        if gt is None:
            raise SegmenterError("the oracle fine segmenter needs ground-truth labels")
        return oracle_fine(gt)
    if name == "threshold":
        return threshold_fine(quantile)
    if name == "upsample":
        return upsample_fine()
    if name == "external":
        if directory is None:
            raise SegmenterError("the external fine segmenter needs a probability directory")
        return external_fine(directory)
    raise SegmenterError(f"unknown fine segmenter {name!r}; choose from {', '.join(FINE_NAMES)}")
