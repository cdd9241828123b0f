from __future__ import annotations

from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.segmenters import get_fine
from toothseglib.stages.volume import load_intensity, load_labels, normalize_intensities, save_volume
from toothseglib.workflows.pipeline import run_fine

from .common import (
    CliState,
    connectivity_option,
    finish_run,
    jobs_option,
    pick,
    pipeline_config,
    print_kv,
    segmenter_inputs,
)


def fine_cmd(
    ctx: typer.Context,
    image_path: Path = typer.Option(..., "--in", help="Original-resolution intensity volume."),
    coarse_labels_path: Path = typer.Option(..., "--coarse-labels", help="Coarse 33-class labels."),
    out: Path = typer.Option(..., "--out", help="Output directory."),
    fine: str = typer.Option("threshold", "--fine", help="oracle | threshold | upsample | external."),
    gt: Path | None = typer.Option(None, "--gt", help="Ground-truth labels (oracle)."),
    probs: Path | None = typer.Option(None, "--probs", help="Directory of tooth_XX.vjson (external)."),
    quantile: float | None = typer.Option(None, "--quantile", help="threshold segmenter quantile."),
    margin: float | None = typer.Option(None, "--margin", help="RoI margin in mm."),
    threshold: float | None = typer.Option(None, "--threshold", help="Stitch probability threshold."),
    lo_pct: float | None = typer.Option(None, "--lo", help="Lower clipping percentile."),
    hi_pct: float | None = typer.Option(None, "--hi", help="Upper clipping percentile."),
    connectivity: int | None = connectivity_option(),
    jobs: int | None = jobs_option(),
) -> None:
    """Run a fine segmenter per coarse tooth and stitch at original resolution."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    config = state.config
    cfg = pipeline_config(
        state,
        margin_mm=margin,
        stitch_threshold=threshold,
        lo_pct=lo_pct,
        hi_pct=hi_pct,
        connectivity=connectivity,
    )
    quantile = pick(quantile, config.fine_quantile)
    segmenter = get_fine(fine, gt=load_labels(gt) if gt else None, directory=probs, quantile=quantile)

    timer = StageTimer()
    normalized = normalize_intensities(load_intensity(image_path), cfg.lo_pct, cfg.hi_pct)
    coarse_labels = load_labels(coarse_labels_path)
    labels, skipped = run_fine(
        normalized, coarse_labels, segmenter, cfg, jobs=state.effective_jobs, timer=timer
    )
    for tooth, reason in skipped.items():
        print_kv(state.err_console, f"skipped tooth {tooth}", reason)

    out.mkdir(parents=True, exist_ok=True)
    written = {"labels": save_volume(labels, out / "labels")}
    finish_run(
        state,
        "fine",
        out,
        parameters={
            "fine": fine,
            "quantile": quantile,
            "margin_mm": cfg.margin_mm,
            "stitch_threshold": cfg.stitch_threshold,
            "lo_pct": cfg.lo_pct,
            "hi_pct": cfg.hi_pct,
            "connectivity": cfg.connectivity,
        },
        inputs={
            "image": image_path,
            "coarse_labels": coarse_labels_path,
            **segmenter_inputs(gt, fine_probs=probs),
        },
        outputs=written,
        timings_s=timer.timings,
        skipped=skipped,
    )
