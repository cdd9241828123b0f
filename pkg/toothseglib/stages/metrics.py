"""Soft multiclass Jaccard loss, IoU and average surface distance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from toothseglib.core.exceptions import EmptyMaskError, GeometryError
from toothseglib.core.types import EvalReportDict, ToothScoreDict
from toothseglib.core.utils.logging import get_logger
from toothseglib.core.utils.parallel import map_ordered
from toothseglib.stages.volume import (
    MAX_LABEL,
    LabelVolume,
    Shape3,
    Spacing3,
    Volume,
    require_same_geometry,
)

try:
    import pandas as pd
except ImportError:
    pd = None

if TYPE_CHECKING:
    import pandas

logger = get_logger("toothseglib.stages.metrics")

N_CLASSES = MAX_LABEL + 1
SOFTMAX_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class ProbStack:
    """Per-class probabilities, ``probs[c]`` being the map of class ``c``."""

    probs: np.ndarray
    spacing_mm: Spacing3
    softmax: bool = False

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 4 or probs.shape[0] < 1:
            raise GeometryError(f"ProbStack needs shape (classes, z, y, x), got {probs.shape}")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise ValueError("ProbStack values must lie in [0, 1]")
        if self.softmax and probs.size:
            sums = probs.sum(axis=0)
            if np.abs(sums - 1.0).max() > SOFTMAX_TOLERANCE:
                raise ValueError("softmax ProbStack must sum to 1 over classes")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "spacing_mm", tuple(float(s) for s in self.spacing_mm))

    @property
    def classes(self) -> int:
        return int(self.probs.shape[0])

    @property
    def shape(self) -> Shape3:
        return tuple(int(n) for n in self.probs.shape[1:])  # type: ignore[return-value]

    def class_volume(self, c: int) -> Volume:
        return Volume(self.probs[c], self.spacing_mm, "probability")

    def argmax(self) -> LabelVolume:
        """Most probable class per voxel; ties go to the lowest class."""
        return LabelVolume(np.argmax(self.probs, axis=0).astype(np.uint8), self.spacing_mm)

    @classmethod
    def one_hot(cls, lv: LabelVolume, classes: int = N_CLASSES) -> ProbStack:
        """Exact 0/1 stack of ``lv`` (a softmax output by construction)."""
        if lv.labels.size and int(lv.labels.max()) >= classes:
            raise GeometryError(f"label {int(lv.labels.max())} does not fit {classes} classes")
        probs = np.zeros((classes, *lv.shape), dtype=np.float64)
        np.put_along_axis(probs, lv.labels[np.newaxis].astype(np.intp), 1.0, axis=0)
        return cls(probs, lv.spacing_mm, softmax=True)


@dataclass(frozen=True)
class ToothScore:
    """Scores of one tooth; ``asd_mm`` is None when either mask is empty."""

    iou: float
    asd_mm: float | None
    present_in_gt: bool
    present_in_pred: bool

    def to_dict(self) -> ToothScoreDict:
        return {
            "asd_mm": self.asd_mm,
            "iou": self.iou,
            "present_in_gt": self.present_in_gt,
            "present_in_pred": self.present_in_pred,
        }


@dataclass(frozen=True)
class EvalReport:
    """Per-tooth scores plus means over the teeth present in ground truth."""

    per_tooth: dict[int, ToothScore] = field(default_factory=dict)

    @property
    def mean_iou(self) -> float | None:
        values = [s.iou for s in self.per_tooth.values() if s.present_in_gt]
        return float(np.mean(values)) if values else None

    @property
    def mean_asd_mm(self) -> float | None:
        values = [
            s.asd_mm for s in self.per_tooth.values() if s.present_in_gt and s.asd_mm is not None
        ]
        return float(np.mean(values)) if values else None

    @property
    def undefined_asd(self) -> list[int]:
        """Ground-truth teeth whose ASD is undefined (missed in the prediction)."""
        return sorted(
            t for t, s in self.per_tooth.items() if s.present_in_gt and s.asd_mm is None
        )

    def to_dict(self) -> EvalReportDict:
        return {
            "per_tooth": {str(t): s.to_dict() for t, s in sorted(self.per_tooth.items())},
            "aggregate": {"asd_mm": self.mean_asd_mm, "iou": self.mean_iou},
        }

    def to_dataframe(self) -> pandas.DataFrame:
        """One row per tooth, indexed by tooth number.

        Raises:
            ImportError: If pandas is not installed.
        """
        if pd is None:
            raise ImportError("Pandas is required for this feature. Install 'toothseg[data]'.")
        rows = [{"tooth": t, **s.to_dict()} for t, s in sorted(self.per_tooth.items())]
        frame = pd.DataFrame(rows, columns=["tooth", "asd_mm", "iou", "present_in_gt", "present_in_pred"])
        return frame.set_index("tooth")


# =============================================================================
# Loss
# =============================================================================


def soft_jaccard_loss(pred: ProbStack, target: LabelVolume, epsilon: float = 1e-5) -> float:
    """``1 - mean_c J_c`` with ``J_c = (sum p r + eps) / (sum p + sum r - sum p r + eps)``.

    ``target`` is read as a one-hot stack with ``pred.classes`` classes.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if pred.shape != target.shape:
        raise GeometryError(f"prediction shape {pred.shape} differs from target {target.shape}")
    if target.labels.size and int(target.labels.max()) >= pred.classes:
        raise GeometryError(
            f"target label {int(target.labels.max())} does not fit {pred.classes} classes"
        )
    p = pred.probs.reshape(pred.classes, -1)
    labels = target.labels.ravel().astype(np.intp)
    voxels = np.arange(labels.size)

    intersection = np.zeros(pred.classes)
    np.add.at(intersection, labels, p[labels, voxels])
    p_sum = p.sum(axis=1)
    r_sum = np.bincount(labels, minlength=pred.classes).astype(np.float64)
    jaccard = (intersection + epsilon) / (p_sum + r_sum - intersection + epsilon)
    return float(1.0 - jaccard.mean())


# =============================================================================
# Evaluation metrics
# =============================================================================


def _as_mask(m: LabelVolume | np.ndarray) -> np.ndarray:
    array = m.labels if isinstance(m, LabelVolume) else np.asarray(m)
    return array != 0


def iou(pred: LabelVolume | np.ndarray, gt: LabelVolume | np.ndarray) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    p, g = _as_mask(pred), _as_mask(gt)
    if p.shape != g.shape:
        raise GeometryError(f"iou: mask shapes differ, {p.shape} vs {g.shape}")
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(p & g)) / union


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Set voxels with a face neighbor that is unset or outside the volume."""
    mask = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(
        mask, structure=ndimage.generate_binary_structure(3, 1), border_value=0
    )
    return mask & ~interior


def _boundary_points(mask: np.ndarray, spacing_mm: Spacing3) -> np.ndarray:
    index = np.argwhere(boundary_voxels(mask)).astype(np.float64)
    return (index + 0.5) * np.asarray(spacing_mm, dtype=np.float64)


def asd(
    pred: LabelVolume | np.ndarray,
    gt: LabelVolume | np.ndarray,
    spacing_mm: Spacing3,
) -> float:
    """Average symmetric surface distance in mm between boundary voxel centers.

    Raises:
        EmptyMaskError: Either mask is empty.
        GeometryError: Mask shapes differ.
    """
    p, g = _as_mask(pred), _as_mask(gt)
    if p.shape != g.shape:
        raise GeometryError(f"asd: mask shapes differ, {p.shape} vs {g.shape}")
    if not p.any() or not g.any():
        raise EmptyMaskError("asd is undefined for an empty mask")

    bp = _boundary_points(p, spacing_mm)
    bg = _boundary_points(g, spacing_mm)
    d_pg, _ = cKDTree(bg).query(bp)
    d_gp, _ = cKDTree(bp).query(bg)
    return float((d_pg.sum() + d_gp.sum()) / (len(bp) + len(bg)))


def evaluate(pred: LabelVolume, gt: LabelVolume, *, jobs: int = 1) -> EvalReport:
    """Per-tooth IoU and ASD of ``pred`` against ``gt``.

    Teeth only found in the prediction are reported too but do not enter the
    aggregates.
    """
    require_same_geometry(pred, gt, context="evaluate")
    gt_teeth = set(gt.present_labels())
    pred_teeth = set(pred.present_labels())

    def score(tooth: int) -> tuple[int, ToothScore]:
        p, g = pred.mask(tooth), gt.mask(tooth)
        in_gt, in_pred = tooth in gt_teeth, tooth in pred_teeth
        distance = asd(p, g, gt.spacing_mm) if in_gt and in_pred else None
        return tooth, ToothScore(iou(p, g), distance, in_gt, in_pred)

    per_tooth = dict(map_ordered(score, sorted(gt_teeth | pred_teeth), jobs=jobs))
    report = EvalReport(per_tooth)
    if report.undefined_asd:
        logger.warning("ASD undefined for missed teeth %s", report.undefined_asd)
    return report


def match_labels(pred: LabelVolume, gt: LabelVolume) -> LabelVolume:
    """Renumber predicted teeth to the ground-truth teeth they overlap best.

    Solves the assignment maximizing total IoU. Predicted labels left without
    an overlapping partner move to the lowest numbers no matched tooth uses.
    """
    require_same_geometry(pred, gt, context="match_labels")
    p_labels = pred.present_labels()
    g_labels = gt.present_labels()
    if not p_labels:
        return pred

    joint = np.bincount(
        pred.labels.ravel().astype(np.intp) * N_CLASSES + gt.labels.ravel(),
        minlength=N_CLASSES * N_CLASSES,
    ).reshape(N_CLASSES, N_CLASSES)
    p_count = joint.sum(axis=1)
    g_count = joint.sum(axis=0)

    scores = np.zeros((len(p_labels), len(g_labels)))
    for i, pl in enumerate(p_labels):
        for j, gl in enumerate(g_labels):
            inter = joint[pl, gl]
            scores[i, j] = inter / (p_count[pl] + g_count[gl] - inter)

    mapping: dict[int, int] = {}
    if g_labels:
        rows, cols = linear_sum_assignment(-scores)
        mapping = {
            p_labels[r]: g_labels[c] for r, c in zip(rows, cols) if scores[r, c] > 0.0
        }
    free = (t for t in range(1, N_CLASSES) if t not in set(mapping.values()))
    for pl in p_labels:
        if pl not in mapping:
            mapping[pl] = next(free)

    lookup = np.arange(N_CLASSES, dtype=np.uint8)
    for src, dst in mapping.items():
        lookup[src] = dst
    logger.debug("match_labels mapping %s", mapping)
    return LabelVolume(lookup[pred.labels], pred.spacing_mm)


def score_summary(report: EvalReport) -> dict[str, Any]:
    """Flat aggregate view used by CLI tables and comparisons."""
    return {
        "teeth_in_gt": sum(1 for s in report.per_tooth.values() if s.present_in_gt),
        "mean_iou": report.mean_iou,
        "mean_asd_mm": report.mean_asd_mm,
        "undefined_asd": report.undefined_asd,
    }
