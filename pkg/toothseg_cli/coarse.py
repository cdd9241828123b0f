from __future__ import annotations

from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.segmenters import get_coarse
from toothseglib.stages.volume import load_intensity, load_labels, save_volume
from toothseglib.workflows.pipeline import run_coarse

from .common import CliState, finish_run, jobs_option, pipeline_config, segmenter_inputs


def coarse_cmd(
    ctx: typer.Context,
    image_path: Path = typer.Option(..., "--in", help="Intensity volume header (.vjson)."),
    out: Path = typer.Option(..., "--out", help="Output directory."),
    coarse: str = typer.Option("classical", "--coarse", help="oracle | classical | external."),
    gt: Path | None = typer.Option(None, "--gt", help="Ground-truth labels (oracle)."),
    probs: Path | None = typer.Option(None, "--probs", help="Directory of class_XX.vjson (external)."),
    spacing: float | None = typer.Option(None, "--spacing", help="Coarse isotropic spacing in mm."),
    lo_pct: float | None = typer.Option(None, "--lo", help="Lower clipping percentile."),
    hi_pct: float | None = typer.Option(None, "--hi", help="Upper clipping percentile."),
    jobs: int | None = jobs_option(),
) -> None:
    """Run a coarse segmenter and write 33-class labels on the coarse grid."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    cfg = pipeline_config(state, coarse_spacing_mm=spacing, lo_pct=lo_pct, hi_pct=hi_pct)
    segmenter = get_coarse(coarse, gt=load_labels(gt) if gt else None, directory=probs)

    timer = StageTimer()
    image = load_intensity(image_path)
    result = run_coarse(image, segmenter, cfg, timer)

    out.mkdir(parents=True, exist_ok=True)
    written = {"coarse_labels": save_volume(result.coarse_labels, out / "coarse_labels")}
    finish_run(
        state,
        "coarse",
        out,
        parameters={
            "coarse": coarse,
            "coarse_spacing_mm": cfg.coarse_spacing_mm,
            "lo_pct": cfg.lo_pct,
            "hi_pct": cfg.hi_pct,
        },
        inputs={"image": image_path, **segmenter_inputs(gt, coarse_probs=probs)},
        outputs=written,
        timings_s=timer.timings,
    )
