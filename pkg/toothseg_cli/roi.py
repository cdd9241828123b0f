from __future__ import annotations

from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.roi import extract_roi, save_roi
from toothseglib.stages.volume import load_intensity, load_labels, normalize_intensities

from .common import (
    CliState,
    connectivity_option,
    finish_run,
    jobs_option,
    pick,
    segmenter_inputs,
)


def roi_cmd(
    ctx: typer.Context,
    image_path: Path = typer.Option(..., "--in", help="Original-resolution intensity volume."),
    coarse_labels_path: Path = typer.Option(..., "--coarse-labels", help="Coarse 33-class labels."),
    out: Path = typer.Option(..., "--out", help="Output directory for crops."),
    gt: Path | None = typer.Option(
        None, "--gt", help="Original-resolution labels; adds binarized target crops."
    ),
    margin: float | None = typer.Option(None, "--margin", help="RoI margin in mm."),
    lo_pct: float | None = typer.Option(None, "--lo", help="Lower clipping percentile."),
    hi_pct: float | None = typer.Option(None, "--hi", help="Upper clipping percentile."),
    connectivity: int | None = connectivity_option(),
    jobs: int | None = jobs_option(),
) -> None:
    """Write per-tooth fine-stage crops (image, optional target, sidecar)."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    config = state.config
    margin = pick(margin, config.margin_mm)
    lo_pct = pick(lo_pct, config.lo_pct)
    hi_pct = pick(hi_pct, config.hi_pct)
    connectivity = pick(connectivity, config.connectivity)

    timer = StageTimer()
    image = normalize_intensities(load_intensity(image_path), lo_pct, hi_pct)
    coarse_labels = load_labels(coarse_labels_path)
    target = load_labels(gt) if gt else None

    outputs: dict[str, str | Path] = {}
    with timer.stage("roi"):
        for tooth in coarse_labels.present_labels():
            crop = extract_roi(
                coarse_labels, image, target, tooth, margin, connectivity=connectivity
            )
            for kind, path in save_roi(crop, out).items():
                outputs[f"tooth_{tooth:02d}_{kind}"] = path

    finish_run(
        state,
        "roi",
        out,
        parameters={
            "margin_mm": margin,
            "lo_pct": lo_pct,
            "hi_pct": hi_pct,
            "connectivity": connectivity,
        },
        inputs={"image": image_path, "coarse_labels": coarse_labels_path, **segmenter_inputs(gt)},
        outputs=outputs,
        timings_s=timer.timings,
    )
