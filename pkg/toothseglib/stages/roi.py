"""Per-tooth regions of interest between the coarse and fine stages.

The coarse 33-class mask gives each tooth a connected component. Its
bounding box, grown by a physical margin and mapped to the original grid,
is the crop the fine stage sees. ``stitch`` merges fine outputs back.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from toothseglib.core.exceptions import EmptyMaskError, GeometryError, ToothNotFoundError, stage_call
from toothseglib.core.types import RoiSidecarDict
from toothseglib.core.utils.logging import get_logger
from toothseglib.stages.volume import (
    MAX_LABEL,
    LabelVolume,
    Shape3,
    Spacing3,
    Volume,
    crop_box,
    nearest_source_indices,
    save_volume,
)

logger = get_logger("toothseglib.stages.roi")

# Slack for floor/ceil on spacing ratios such as 10 * 1.0 / 0.4.
_ROUNDING_EPS = 1e-9


@dataclass(frozen=True)
class Box3:
    """Half-open voxel box: ``min`` inclusive, ``max`` exclusive."""

    min: Shape3
    max: Shape3

    def __post_init__(self) -> None:
        lo = tuple(int(v) for v in self.min)
        hi = tuple(int(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3 or not all(a < b for a, b in zip(lo, hi)):
            raise GeometryError(f"Box3 needs min < max per axis, got {lo} - {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def shape(self) -> Shape3:
        return tuple(b - a for a, b in zip(self.min, self.max))  # type: ignore[return-value]

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(a, b) for a, b in zip(self.min, self.max))  # type: ignore[return-value]

    def contains(self, other: Box3) -> bool:
        return all(a <= c for a, c in zip(self.min, other.min)) and all(
            b >= d for b, d in zip(self.max, other.max)
        )

    def within(self, shape: Shape3) -> bool:
        return all(a >= 0 for a in self.min) and all(b <= n for b, n in zip(self.max, shape))

    def to_list(self) -> list[list[int]]:
        return [list(self.min), list(self.max)]


@dataclass(frozen=True)
class RoICrop:
    """One tooth's fine-stage input.

    ``prior`` is the tooth's coarse component nearest-mapped onto the crop
    grid; the coarse-only regime uses it as the fine output.
    """

    tooth_number: int
    box: Box3
    box_fine: Box3
    image: Volume
    target: LabelVolume | None = None
    prior: LabelVolume | None = None

    def __post_init__(self) -> None:
        if self.image.shape != self.box_fine.shape:
            raise GeometryError(
                f"RoI image shape {self.image.shape} differs from box {self.box_fine.shape}"
            )
        for extra in (self.target, self.prior):
            if extra is not None and extra.shape != self.box_fine.shape:
                raise GeometryError(
                    f"RoI crop shape {extra.shape} differs from box {self.box_fine.shape}"
                )


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")


def largest_component(lv: LabelVolume, tooth: int, connectivity: int = 26) -> LabelVolume:
    """Binary mask of the largest connected component labeled ``tooth``.

    Ties on voxel count go to the component with the smallest (z, y, x)
    bounding-box minimum corner, then to the one reached first in raster
    order. Absent teeth give an empty mask.
    """
    if not 1 <= tooth <= MAX_LABEL:
        raise ValueError(f"tooth number {tooth} outside 1..{MAX_LABEL}")
    components, count = ndimage.label(lv.labels == tooth, structure=_structure(connectivity))
    if count == 0:
        return LabelVolume(np.zeros(lv.shape, dtype=np.uint8), lv.spacing_mm)

    sizes = np.bincount(components.ravel(), minlength=count + 1)
    corners = [tuple(s.start for s in box) for box in ndimage.find_objects(components)]

    # ndimage.label numbers components in raster order of their first voxel
    keep = min(
        range(1, count + 1),
        key=lambda label: (-int(sizes[label]), corners[label - 1], label),
    )
    return LabelVolume((components == keep).astype(np.uint8), lv.spacing_mm)


def bounding_box(mask: LabelVolume) -> Box3:
    """Tightest box around the set voxels of ``mask``."""
    filled = mask.labels != 0
    if not filled.any():
        raise EmptyMaskError("bounding_box of an empty mask")
    lo, hi = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        hits = np.flatnonzero(filled.any(axis=other))
        lo.append(int(hits[0]))
        hi.append(int(hits[-1]) + 1)
    return Box3(tuple(lo), tuple(hi))  # type: ignore[arg-type]


def expand_box(b: Box3, margin_mm: float, spacing_mm: Spacing3, bounds: Shape3) -> Box3:
    """Grow ``b`` by ``ceil(margin_mm / spacing)`` voxels per side, clamped to ``bounds``."""
    if margin_mm < 0:
        raise ValueError(f"margin_mm must be >= 0, got {margin_mm}")
    lo, hi = [], []
    for a, z, s, n in zip(b.min, b.max, spacing_mm, bounds):
        grow = math.ceil(margin_mm / s - _ROUNDING_EPS) if margin_mm > 0 else 0
        lo.append(max(0, a - grow))
        hi.append(min(int(n), z + grow))
    return Box3(tuple(lo), tuple(hi))  # type: ignore[arg-type]


def coarse_to_fine_box(
    b: Box3,
    coarse_spacing: Spacing3,
    fine_spacing: Spacing3,
    fine_shape: Shape3,
    coarse_shape: Shape3 | None = None,
) -> Box3:
    """Map a coarse box onto the fine grid, rounding outward and clamping.

    A box reaching the end of the coarse grid reaches the end of the fine
    grid, since resampling rounds the coarse extent.
    """
    ends = coarse_shape or (None, None, None)
    lo, hi = [], []
    for a, z, sc, sf, n, end in zip(b.min, b.max, coarse_spacing, fine_spacing, fine_shape, ends):
        lo.append(max(0, math.floor(a * sc / sf + _ROUNDING_EPS)))
        if z == end:
            hi.append(int(n))
        else:
            hi.append(min(int(n), math.ceil(z * sc / sf - _ROUNDING_EPS)))
    return Box3(tuple(lo), tuple(hi))  # type: ignore[arg-type]


def _map_prior(component: LabelVolume, box_fine: Box3, fine_spacing: Spacing3) -> LabelVolume:
    index = [
        nearest_source_indices(np.arange(a, z), sf / sc, n)
        for a, z, sf, sc, n in zip(
            box_fine.min, box_fine.max, fine_spacing, component.spacing_mm, component.shape
        )
    ]
    return LabelVolume(component.labels[np.ix_(*index)], fine_spacing)


def extract_roi(
    coarse_labels: LabelVolume,
    fine_image: Volume,
    fine_target: LabelVolume | None,
    tooth: int,
    margin_mm: float = 3.0,
    *,
    connectivity: int = 26,
) -> RoICrop:
    """Crop the original-resolution region of ``tooth`` from its coarse mask.

    Raises:
        ToothNotFoundError: ``tooth`` is absent from ``coarse_labels``.
        GeometryError: The two grids do not cover the same physical extent.
    """
    for sc, nc, sf, nf in zip(
        coarse_labels.spacing_mm, coarse_labels.shape, fine_image.spacing_mm, fine_image.shape
    ):
        if abs(sc * nc - sf * nf) > max(sc, sf):
            raise GeometryError(
                f"coarse grid {coarse_labels.shape}@{coarse_labels.spacing_mm} does not "
                f"cover fine grid {fine_image.shape}@{fine_image.spacing_mm}"
            )
    if fine_target is not None and fine_target.shape != fine_image.shape:
        raise GeometryError(
            f"target shape {fine_target.shape} differs from image shape {fine_image.shape}"
        )

    component = largest_component(coarse_labels, tooth, connectivity)
    try:
        box = bounding_box(component)
    except EmptyMaskError as e:
        raise ToothNotFoundError(f"tooth {tooth} is absent from the coarse labels") from e
    box = expand_box(box, margin_mm, coarse_labels.spacing_mm, coarse_labels.shape)
    box_fine = coarse_to_fine_box(
        box, coarse_labels.spacing_mm, fine_image.spacing_mm, fine_image.shape, coarse_labels.shape
    )

    image = crop_box(fine_image, box_fine.min, box_fine.max)
    target = None
    if fine_target is not None:
        target = LabelVolume(
            (fine_target.labels[box_fine.slices] == tooth).astype(np.uint8),
            fine_target.spacing_mm,
        )
    prior = _map_prior(component, box_fine, fine_image.spacing_mm)
    logger.debug("tooth %d: coarse box %s, fine box %s", tooth, box.to_list(), box_fine.to_list())
    return RoICrop(tooth, box, box_fine, image, target, prior)


def stitch(
    crops: Iterable[tuple[int, Box3, Volume]],
    shape: Shape3,
    threshold: float = 0.5,
    *,
    spacing_mm: Spacing3 = (1.0, 1.0, 1.0),
) -> LabelVolume:
    """Merge per-tooth probability crops into one full-resolution label volume.

    A voxel takes a tooth when that crop's probability reaches ``threshold``.
    Competing crops are resolved by the highest probability, then the lowest
    tooth number, so the result does not depend on crop order.
    """
    best = np.full(shape, -np.inf)
    labels = np.zeros(shape, dtype=np.uint8)
    for tooth, box, probs in crops:
        if not box.within(shape):
            raise GeometryError(f"crop box {box.to_list()} of tooth {tooth} outside shape {list(shape)}")
        if probs.shape != box.shape:
            raise GeometryError(
                f"probabilities of tooth {tooth} have shape {probs.shape}, box has {box.shape}"
            )
        p = probs.data.astype(np.float64)
        region_best = best[box.slices]
        region_labels = labels[box.slices]
        better = (p >= threshold) & (
            (p > region_best) | ((p == region_best) & (tooth < region_labels))
        )
        region_best[better] = p[better]
        region_labels[better] = tooth
    return LabelVolume(labels, spacing_mm)


@stage_call("save_roi", writes=True)
def save_roi(crop: RoICrop, out_dir: str | Path) -> dict[str, Path]:
    """Persist a crop as ``tooth_XX_image``/``tooth_XX_target`` volumes plus a sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"tooth_{crop.tooth_number:02d}"
    written = {"image": save_volume(crop.image, out / f"{stem}_image")}
    if crop.target is not None:
        written["target"] = save_volume(crop.target, out / f"{stem}_target")
    sidecar: RoiSidecarDict = {
        "tooth": crop.tooth_number,
        "box_fine": crop.box_fine.to_list(),
        "box_coarse": crop.box.to_list(),
    }
    written["sidecar"] = out / f"{stem}.json"
    written["sidecar"].write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
    return written


@stage_call("load_roi_sidecar")
def load_roi_sidecar(path: str | Path) -> tuple[int, Box3, Box3]:
    """Read a sidecar back as (tooth, box_fine, box_coarse)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        fine = Box3(tuple(data["box_fine"][0]), tuple(data["box_fine"][1]))
        coarse = Box3(tuple(data["box_coarse"][0]), tuple(data["box_coarse"][1]))
        return int(data["tooth"]), fine, coarse
    except (KeyError, IndexError, TypeError) as e:
        raise GeometryError(f"{path}: malformed RoI sidecar: {e!r}") from e
