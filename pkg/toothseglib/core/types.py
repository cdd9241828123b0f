"""Type definitions for the JSON payloads read and written by toothseglib.

These TypedDicts describe files on disk (volume headers, annotation files,
RoI sidecars, evaluation reports, run manifests). In-memory domain records
are dataclasses that live next to the stage that owns them.
"""

from __future__ import annotations

from typing import Any, TypedDict

# =============================================================================
# Volume File Format
# =============================================================================


class VolumeHeaderDict(TypedDict):
    """Contents of a ``<name>.vjson`` header.

    Voxels are stored row-major (x fastest) in ``data_file``, little-endian.
    """

    shape: list[int]
    spacing_mm: list[float]
    dtype: str
    byte_order: str
    data_file: str


class WrittenHeaderDict(VolumeHeaderDict, total=False):
    """Header as written by ``save_volume``; labels omit ``value_kind``."""

    value_kind: str


# =============================================================================
# Annotation File Format
# =============================================================================


class AxialBoxEntryDict(TypedDict):
    """One weak label: a box on one axial slice for one tooth."""

    tooth: int
    slice: int
    box: list[int]


class AnnotationFileDict(TypedDict):
    """Contents of an annotation JSON file."""

    study_id: str
    shape: list[int]
    spacing_mm: list[float]
    boxes: list[AxialBoxEntryDict]


# =============================================================================
# RoI sidecar
# =============================================================================


class RoiSidecarDict(TypedDict):
    """Sidecar written next to each persisted RoI crop."""

    tooth: int
    box_fine: list[list[int]]
    box_coarse: list[list[int]]


# =============================================================================
# Evaluation
# =============================================================================


class ToothScoreDict(TypedDict):
    """Per-tooth evaluation entry. ``asd_mm`` is None when undefined."""

    asd_mm: float | None
    iou: float
    present_in_gt: bool
    present_in_pred: bool


class AggregateScoreDict(TypedDict):
    """Means over teeth present in ground truth."""

    asd_mm: float | None
    iou: float | None


class EvalReportDict(TypedDict):
    """Serialized EvalReport."""

    per_tooth: dict[str, ToothScoreDict]
    aggregate: AggregateScoreDict


# =============================================================================
# Run manifests
# =============================================================================


class RunManifestDict(TypedDict, total=False):
    """Everything needed to reproduce one CLI run."""

    command: str
    tool_version: str
    seed: int | None
    jobs: int
    parameters: dict[str, Any]
    inputs: dict[str, str]
    outputs: dict[str, str]
    timings_s: dict[str, float]
    skipped_teeth: dict[str, str]
