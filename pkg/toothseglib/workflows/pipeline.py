"""Coarse-to-fine driver, regime comparison and run manifests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

from toothseglib.core.config import Config
from toothseglib.core.exceptions import ToothSegError, stage_call
from toothseglib.core.types import RunManifestDict
from toothseglib.core.utils.logging import get_logger
from toothseglib.core.utils.parallel import map_ordered
from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.metrics import EvalReport, evaluate, match_labels
from toothseglib.stages.roi import Box3, extract_roi, stitch
from toothseglib.stages.segmenters import CoarseSegmenter, FineSegmenter, PipelineConfig, get_fine
from toothseglib.stages.volume import LabelVolume, Volume, normalize_intensities, resample_isotropic
from toothseglib.stages.weaklabels import EnergyParams

logger = get_logger("toothseglib.workflows.pipeline")

MANIFEST_NAME = "manifest.json"


def tool_version() -> str:
    try:
        return version("toothseg")
    except PackageNotFoundError:
        return "0.0.0+local"


def pipeline_config_from(config: Config) -> PipelineConfig:
    """PipelineConfig holding the user's configured defaults."""
    return PipelineConfig(
        coarse_spacing_mm=config.coarse_spacing_mm,
        margin_mm=config.margin_mm,
        stitch_threshold=config.stitch_threshold,
        lo_pct=config.lo_pct,
        hi_pct=config.hi_pct,
        connectivity=config.connectivity,
    )


def energy_params_from(config: Config, manufacturer: str | None = None) -> EnergyParams:
    """EnergyParams from config, picking the manufacturer's slope when known."""
    return EnergyParams(
        k=config.slope_for(manufacturer),
        background_energy=config.energy_tau,
        distance_mode=config.distance_mode,  # type: ignore[arg-type]
    )


@dataclass(frozen=True)
class CoarseResult:
    """Output of the coarse stage.

    ``normalized`` is the standardized image at original resolution, the one
    the fine stage crops from.
    """

    normalized: Volume
    coarse_image: Volume
    coarse_labels: LabelVolume


@dataclass(frozen=True)
class PipelineRun:
    labels: LabelVolume
    coarse_labels: LabelVolume
    skipped: dict[int, str] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)


def run_coarse(
    image: Volume,
    coarse: CoarseSegmenter,
    cfg: PipelineConfig,
    timer: StageTimer | None = None,
) -> CoarseResult:
    """Normalize, resample to the coarse grid and take the coarse argmax."""
    timer = timer or StageTimer()
    with timer.stage("normalize"):
        normalized = normalize_intensities(image, cfg.lo_pct, cfg.hi_pct)
    with timer.stage("resample"):
        coarse_image = resample_isotropic(normalized, cfg.coarse_spacing_mm)
    with timer.stage("coarse"):
        coarse_labels = coarse.segment_coarse(coarse_image).argmax()
    return CoarseResult(normalized, coarse_image, coarse_labels)


def run_fine(
    normalized: Volume,
    coarse_labels: LabelVolume,
    fine: FineSegmenter,
    cfg: PipelineConfig,
    *,
    jobs: int = 1,
    timer: StageTimer | None = None,
) -> tuple[LabelVolume, dict[int, str]]:
    """Crop, refine and stitch every tooth found by the coarse stage.

    A tooth whose crop or fine segmentation fails is skipped; the returned
    dict maps it to the reason.
    """
    timer = timer or StageTimer()
    teeth = coarse_labels.present_labels()

    def refine(tooth: int) -> tuple[int, tuple[Box3, Volume] | str]:
        try:
            crop = extract_roi(
                coarse_labels, normalized, None, tooth, cfg.margin_mm, connectivity=cfg.connectivity
            )
            return tooth, (crop.box_fine, fine.segment_fine(crop))
        except (ToothSegError, ValueError) as e:
            return tooth, str(e)

    crops: list[tuple[int, Box3, Volume]] = []
    skipped: dict[int, str] = {}
    with timer.stage("fine"):
        for tooth, outcome in map_ordered(refine, teeth, jobs=jobs):
            if isinstance(outcome, str):
                logger.warning("fine stage skipped tooth %d: %s", tooth, outcome)
                skipped[tooth] = outcome
            else:
                crops.append((tooth, *outcome))
    with timer.stage("stitch"):
        labels = stitch(
            crops, normalized.shape, cfg.stitch_threshold, spacing_mm=normalized.spacing_mm
        )
    return labels, skipped


def run_pipeline_detailed(
    image: Volume,
    coarse: CoarseSegmenter,
    fine: FineSegmenter,
    cfg: PipelineConfig,
    *,
    jobs: int = 1,
) -> PipelineRun:
    """``run_pipeline`` keeping the coarse labels, skipped teeth and timings."""
    if image.value_kind != "intensity":
        raise ValueError("run_pipeline expects an intensity volume")
    timer = StageTimer()
    coarse_result = run_coarse(image, coarse, cfg, timer)
    labels, skipped = run_fine(
        coarse_result.normalized, coarse_result.coarse_labels, fine, cfg, jobs=jobs, timer=timer
    )
    return PipelineRun(labels, coarse_result.coarse_labels, skipped, dict(timer.timings))


def run_pipeline(
    image: Volume,
    coarse: CoarseSegmenter,
    fine: FineSegmenter,
    cfg: PipelineConfig,
    *,
    jobs: int = 1,
) -> LabelVolume:
    """Full-resolution multiclass labels from the coarse-to-fine pipeline."""
    return run_pipeline_detailed(image, coarse, fine, cfg, jobs=jobs).labels


# =============================================================================
# Coarse-only vs coarse-to-fine
# =============================================================================


@dataclass(frozen=True)
class RegimeComparison:
    """Both regimes scored against the same ground truth.

    Improvements are relative: positive means the fine stage helped.
    """

    coarse_only: EvalReport
    coarse_to_fine: EvalReport

    @property
    def iou_improvement(self) -> float | None:
        before, after = self.coarse_only.mean_iou, self.coarse_to_fine.mean_iou
        if before is None or after is None or before == 0:
            return None
        return (after - before) / before

    @property
    def asd_improvement(self) -> float | None:
        before, after = self.coarse_only.mean_asd_mm, self.coarse_to_fine.mean_asd_mm
        if before is None or after is None or before == 0:
            return None
        return (before - after) / before

    def to_dict(self) -> dict[str, Any]:
        return {
            "coarse_only": self.coarse_only.to_dict(),
            "coarse_to_fine": self.coarse_to_fine.to_dict(),
            "iou_improvement": self.iou_improvement,
            "asd_improvement": self.asd_improvement,
        }


def compare_regimes(
    image: Volume,
    gt: LabelVolume,
    coarse: CoarseSegmenter,
    fine: FineSegmenter,
    cfg: PipelineConfig,
    *,
    jobs: int = 1,
    match: bool = False,
) -> RegimeComparison:
    """Score the coarse-only regime and the coarse-to-fine regime on one study.

    Both regimes share one coarse pass. With ``match`` the predicted teeth
    are renumbered to ground truth before scoring.
    """
    coarse_result = run_coarse(image, coarse, cfg)
    reports = []
    for refiner in (get_fine("upsample"), fine):
        labels, _ = run_fine(
            coarse_result.normalized, coarse_result.coarse_labels, refiner, cfg, jobs=jobs
        )
        if match:
            labels = match_labels(labels, gt)
        reports.append(evaluate(labels, gt, jobs=jobs))
    return RegimeComparison(reports[0], reports[1])


# =============================================================================
# Run manifests
# =============================================================================


def build_manifest(
    command: str,
    *,
    parameters: dict[str, Any],
    inputs: dict[str, str | Path],
    outputs: dict[str, str | Path],
    seed: int | None = None,
    jobs: int = 1,
    timings_s: dict[str, float] | None = None,
    skipped: dict[int, str] | None = None,
) -> RunManifestDict:
    """Everything needed to replay one command."""
    manifest: RunManifestDict = {
        "command": command,
        "tool_version": tool_version(),
        "seed": seed,
        "jobs": jobs,
        "parameters": dict(parameters),
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "timings_s": dict(timings_s or {}),
    }
    if skipped:
        manifest["skipped_teeth"] = {str(t): reason for t, reason in sorted(skipped.items())}
    return manifest


@stage_call("write_manifest", writes=True)
def write_manifest(manifest: RunManifestDict, out_dir: str | Path) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path


@stage_call("read_manifest")
def read_manifest(path: str | Path) -> RunManifestDict:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ToothSegError(f"{p}: malformed manifest: {e}") from e
    if not isinstance(data, dict) or "command" not in data:
        raise ToothSegError(f"{p}: not a run manifest")
    return data  # type: ignore[no-any-return]
