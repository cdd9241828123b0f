"""Weak axial-box annotations to dense 33-class masks via an energy transform.

Each annotated tooth gets a centerline through its box centers. Every voxel
scores ``intensity + k * distance_to_centerline`` for each tooth (k < 0) and a
constant ``background_energy`` for class 0; the label is the argmax.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np

from toothseglib.core.exceptions import AnnotationError, GeometryError, ToothNotFoundError, stage_call
from toothseglib.core.types import AnnotationFileDict, AxialBoxEntryDict
from toothseglib.core.utils.logging import get_logger
from toothseglib.core.utils.parallel import map_ordered
from toothseglib.stages.volume import MAX_LABEL, LabelVolume, Shape3, Spacing3, Volume

DistanceMode = Literal["min", "mean"]

# Sampling step along the centerline for the "mean" distance mode.
MEAN_MODE_STEP_MM = 1.0

logger = get_logger("toothseglib.stages.weaklabels")


@dataclass(frozen=True)
class AxialBox:
    """A weak label: half-open box (y0, x0, y1, x1) on one axial slice."""

    tooth_number: int
    slice_index: int
    box: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        if not 1 <= self.tooth_number <= MAX_LABEL:
            raise AnnotationError(
                f"tooth number {self.tooth_number} outside 1..{MAX_LABEL}"
            )
        y0, x0, y1, x1 = self.box
        if not (y0 < y1 and x0 < x1):
            raise AnnotationError(
                f"degenerate box {list(self.box)} for tooth {self.tooth_number} "
                f"on slice {self.slice_index}"
            )

    @property
    def center_yx(self) -> tuple[float, float]:
        """Box center in edge-based index units."""
        y0, x0, y1, x1 = self.box
        return (y0 + y1) / 2.0, (x0 + x1) / 2.0


@dataclass(frozen=True)
class AnnotationSet:
    """All weak labels of one study."""

    study_id: str
    boxes: tuple[AxialBox, ...]
    spacing_mm: Spacing3
    shape: Shape3

    def __post_init__(self) -> None:
        seen: set[tuple[int, int]] = set()
        nz, ny, nx = self.shape
        for b in self.boxes:
            key = (b.tooth_number, b.slice_index)
            if key in seen:
                raise AnnotationError(
                    f"duplicate box for tooth {b.tooth_number} on slice {b.slice_index}"
                )
            seen.add(key)
            y0, x0, y1, x1 = b.box
            if not (0 <= b.slice_index < nz and 0 <= y0 and y1 <= ny and 0 <= x0 and x1 <= nx):
                raise AnnotationError(
                    f"box {list(b.box)} on slice {b.slice_index} for tooth "
                    f"{b.tooth_number} lies outside volume shape {list(self.shape)}"
                )

    def teeth(self) -> list[int]:
        """Sorted annotated tooth numbers."""
        return sorted({b.tooth_number for b in self.boxes})

    def boxes_for(self, tooth: int) -> list[AxialBox]:
        """Boxes of ``tooth`` sorted by slice."""
        return sorted(
            (b for b in self.boxes if b.tooth_number == tooth),
            key=lambda b: b.slice_index,
        )

    def to_dict(self) -> AnnotationFileDict:
        boxes: list[AxialBoxEntryDict] = [
            {"tooth": b.tooth_number, "slice": b.slice_index, "box": list(b.box)}
            for b in sorted(self.boxes, key=lambda b: (b.tooth_number, b.slice_index))
        ]
        return {
            "study_id": self.study_id,
            "shape": list(self.shape),
            "spacing_mm": list(self.spacing_mm),
            "boxes": boxes,
        }


@dataclass(frozen=True)
class Centerline:
    """z-ordered polyline of physical points (mm) for one tooth."""

    tooth_number: int
    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise ValueError("Centerline needs at least one point")
        points = points[np.argsort(points[:, 0], kind="stable")]
        object.__setattr__(self, "points", points)

    def point_at_z(self, z_mm: float) -> np.ndarray:
        """Linearly interpolated centerline point at height ``z_mm``."""
        pts = self.points
        return np.array(
            [z_mm, np.interp(z_mm, pts[:, 0], pts[:, 1]), np.interp(z_mm, pts[:, 0], pts[:, 2])]
        )

    def length_mm(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass(frozen=True)
class DistanceField:
    """Per-voxel physical distance (mm) to a centerline."""

    shape: Shape3
    spacing_mm: Spacing3
    distances: np.ndarray


@dataclass(frozen=True)
class EnergyParams:
    """Energy transform parameters.

    Attributes:
        k: Energy slope in intensity units per mm; must be negative so voxels
            near a centerline score higher.
        background_energy: Constant energy of class 0 (tau).
        distance_mode: "min" for point-to-polyline distance, "mean" for the
            mean distance to points sampled along the polyline.
    """

    k: float = -100.0
    background_energy: float = 300.0
    distance_mode: DistanceMode = "min"

    def __post_init__(self) -> None:
        if not self.k < 0:
            raise ValueError(f"Energy slope k must be negative, got {self.k}")
        if self.distance_mode not in ("min", "mean"):
            raise ValueError(f"Unknown distance_mode {self.distance_mode!r}")


# =============================================================================
# Annotation files
# =============================================================================


def annotations_from_dict(data: Any) -> AnnotationSet:
    """Validate a decoded annotation payload.

    Raises:
        AnnotationError: Missing fields, wrong types, or an invariant violation.
    """
    if not isinstance(data, dict):
        raise AnnotationError("annotation file must hold a JSON object")
    try:
        boxes = tuple(
            AxialBox(
                tooth_number=int(entry["tooth"]),
                slice_index=int(entry["slice"]),
                box=tuple(int(v) for v in entry["box"]),  # type: ignore[arg-type]
            )
            for entry in data["boxes"]
        )
        shape = tuple(int(n) for n in data["shape"])
        spacing = tuple(float(s) for s in data["spacing_mm"])
        study_id = str(data.get("study_id", ""))
    except (KeyError, TypeError, ValueError) as e:
        raise AnnotationError(f"malformed annotation payload: {e!r}") from e

    if any(len(b.box) != 4 for b in boxes):
        raise AnnotationError("every box needs four indices [y0, x0, y1, x1]")
    if len(shape) != 3 or len(spacing) != 3 or min(spacing) <= 0:
        raise AnnotationError("shape and spacing_mm need three entries, spacing positive")
    return AnnotationSet(study_id, boxes, spacing, shape)  # type: ignore[arg-type]


@stage_call("parse_annotations")
def parse_annotations(path: str | Path) -> AnnotationSet:
    """Read and validate an annotation JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AnnotationError(f"{path}: malformed JSON: {e}") from e
    try:
        return annotations_from_dict(data)
    except AnnotationError as e:
        raise AnnotationError(f"{path}: {e}") from e


@stage_call("save_annotations", writes=True)
def save_annotations(a: AnnotationSet, path: str | Path) -> Path:
    """Write ``a`` in the annotation file format."""
    out = Path(path)
    out.write_text(json.dumps(a.to_dict(), indent=2), encoding="utf-8")
    return out


# =============================================================================
# Centerlines and distance fields
# =============================================================================


def build_centerline(a: AnnotationSet, tooth: int) -> Centerline:
    """Join the box centers of ``tooth`` into a z-ordered polyline (mm)."""
    boxes = a.boxes_for(tooth)
    if not boxes:
        raise ToothNotFoundError(f"tooth {tooth} has no boxes in study {a.study_id!r}")
    sz, sy, sx = a.spacing_mm
    points = []
    for b in boxes:
        cy, cx = b.center_yx
        points.append(((b.slice_index + 0.5) * sz, cy * sy, cx * sx))
    return Centerline(tooth, np.array(points))


def _center_axes(shape: Shape3, spacing_mm: Spacing3) -> list[np.ndarray]:
    axes = []
    for axis, (n, s) in enumerate(zip(shape, spacing_mm)):
        bshape = [1, 1, 1]
        bshape[axis] = n
        axes.append(((np.arange(n) + 0.5) * s).reshape(bshape))
    return axes


def _squared_distance_to_segment(
    axes: list[np.ndarray], a: np.ndarray, b: np.ndarray
) -> np.ndarray:
    dz, dy, dx = (axes[i] - a[i] for i in range(3))
    u = b - a
    uu = float(u @ u)
    if uu == 0.0:
        return dz * dz + dy * dy + dx * dx
    t = np.clip((dz * u[0] + dy * u[1] + dx * u[2]) / uu, 0.0, 1.0)
    ez, ey, ex = dz - t * u[0], dy - t * u[1], dx - t * u[2]
    return ez * ez + ey * ey + ex * ex


def _sample_polyline(points: np.ndarray, step_mm: float) -> np.ndarray:
    if len(points) == 1:
        return points
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(cum[-1])
    if total == 0.0:
        return points[:1]
    n = max(2, math.ceil(total / step_mm) + 1)
    at = np.linspace(0.0, total, n)
    return np.stack([np.interp(at, cum, points[:, i]) for i in range(3)], axis=1)


def distance_field(
    shape: Shape3,
    spacing_mm: Spacing3,
    c: Centerline,
    mode: DistanceMode = "min",
) -> DistanceField:
    """Distance (mm) from every voxel center to the centerline ``c``.

    In "min" mode this is the point-to-polyline distance; a one-point
    centerline degenerates to point distance. In "mean" mode it is the mean
    distance to points sampled every 1 mm along the polyline.
    """
    axes = _center_axes(shape, spacing_mm)
    pts = c.points
    if mode == "min":
        if len(pts) == 1:
            best = _squared_distance_to_segment(axes, pts[0], pts[0])
        else:
            best = None
            for a, b in zip(pts[:-1], pts[1:]):
                d2 = _squared_distance_to_segment(axes, a, b)
                best = d2 if best is None else np.minimum(best, d2)
        distances = np.sqrt(np.broadcast_to(best, shape))
    elif mode == "mean":
        samples = _sample_polyline(pts, MEAN_MODE_STEP_MM)
        total = np.zeros(shape, dtype=np.float64)
        for p in samples:
            total += np.sqrt(_squared_distance_to_segment(axes, p, p))
        distances = total / len(samples)
    else:
        raise ValueError(f"Unknown distance mode {mode!r}")
    return DistanceField(tuple(shape), tuple(spacing_mm), np.ascontiguousarray(distances))  # type: ignore[arg-type]


# =============================================================================
# Energy argmax
# =============================================================================


def energy_argmax(
    intensities: Volume,
    fields: Iterable[tuple[int, DistanceField]],
    params: EnergyParams,
) -> LabelVolume:
    """Label every voxel with the class of highest energy.

    Tooth t scores ``intensity + k * distance_t``; background scores the
    constant ``params.background_energy``. Ties go to background, then to the
    lowest tooth number. Fields are folded one at a time, so the result does
    not depend on their order and only one field needs to be in memory.

    Raises:
        GeometryError: A field's grid differs from the intensity volume.
        ValueError: Duplicate or out-of-range tooth numbers.
    """
    values = intensities.data.astype(np.float64)
    best = np.full(intensities.shape, float(params.background_energy))
    labels = np.zeros(intensities.shape, dtype=np.uint8)
    seen: set[int] = set()

    for tooth, field in fields:
        if not 1 <= tooth <= MAX_LABEL:
            raise ValueError(f"tooth number {tooth} outside 1..{MAX_LABEL}")
        if tooth in seen:
            raise ValueError(f"tooth {tooth} appears twice in energy_argmax")
        seen.add(tooth)
        if tuple(field.shape) != intensities.shape or not np.allclose(
            field.spacing_mm, intensities.spacing_mm, rtol=1e-9
        ):
            raise GeometryError(
                f"distance field of tooth {tooth} has grid {field.shape}@{field.spacing_mm}, "
                f"intensities have {intensities.shape}@{intensities.spacing_mm}"
            )
        energy = values + params.k * field.distances
        better = (energy > best) | ((energy == best) & (labels != 0) & (labels > tooth))
        best = np.where(better, energy, best)
        labels[better] = tooth

    return LabelVolume(labels, intensities.spacing_mm)


def weak_to_mask(
    intensities: Volume,
    a: AnnotationSet,
    params: EnergyParams,
    *,
    jobs: int = 1,
) -> LabelVolume:
    """Dense mask from weak labels: centerlines, distance fields, energy argmax.

    Only annotated tooth numbers (and background) can appear in the output.
    """
    if tuple(a.shape) != intensities.shape or not np.allclose(
        a.spacing_mm, intensities.spacing_mm, rtol=1e-9
    ):
        raise GeometryError(
            f"annotations describe {list(a.shape)}@{list(a.spacing_mm)}, "
            f"image is {list(intensities.shape)}@{list(intensities.spacing_mm)}"
        )

    teeth = a.teeth()
    logger.info("weak_to_mask: %d annotated teeth in study %r", len(teeth), a.study_id)

    def field_for(tooth: int) -> tuple[int, DistanceField]:
        line = build_centerline(a, tooth)
        return tooth, distance_field(
            intensities.shape, intensities.spacing_mm, line, params.distance_mode
        )

    return energy_argmax(intensities, map_ordered(field_for, teeth, jobs=jobs), params)
