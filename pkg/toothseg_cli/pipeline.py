from __future__ import annotations

from pathlib import Path
from typing import Any

import typer

from toothseglib import ToothSegError
from toothseglib.stages.segmenters import get_coarse, get_fine
from toothseglib.stages.volume import load_intensity, load_labels, save_volume
from toothseglib.workflows.pipeline import read_manifest, run_pipeline_detailed

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

# Manifest parameter name -> pipeline_config keyword.
_CONFIG_KEYS = (
    "coarse_spacing_mm",
    "margin_mm",
    "stitch_threshold",
    "lo_pct",
    "hi_pct",
    "connectivity",
)


def _optional_path(value: Any) -> Path | None:
    return Path(value) if value else None


def pipeline_cmd(
    ctx: typer.Context,
    out: Path = typer.Option(..., "--out", help="Output directory."),
    image_path: Path | None = typer.Option(None, "--in", help="Intensity volume header (.vjson)."),
    coarse: str | None = typer.Option(None, "--coarse", help="oracle | classical | external."),
    fine: str | None = typer.Option(None, "--fine", help="oracle | threshold | upsample | external."),
    gt: Path | None = typer.Option(None, "--gt", help="Ground-truth labels (oracle segmenters)."),
    coarse_probs: Path | None = typer.Option(None, "--coarse-probs", help="class_XX.vjson directory."),
    fine_probs: Path | None = typer.Option(None, "--fine-probs", help="tooth_XX.vjson directory."),
    quantile: float | None = typer.Option(None, "--quantile", help="threshold segmenter quantile."),
    coarse_spacing: float | None = typer.Option(None, "--coarse-spacing", help="Coarse spacing in mm."),
    margin: float | None = typer.Option(None, "--margin", help="RoI margin in mm."),
    threshold: float | None = typer.Option(None, "--threshold", help="Stitch probability threshold."),
    lo_pct: float | None = typer.Option(None, "--lo", help="Lower clipping percentile."),
    hi_pct: float | None = typer.Option(None, "--hi", help="Upper clipping percentile."),
    connectivity: int | None = connectivity_option(),
    from_manifest: Path | None = typer.Option(
        None, "--from-manifest", help="Replay a previous pipeline run; flags override it."
    ),
    jobs: int | None = jobs_option(),
) -> None:
    """Full coarse-to-fine run: normalize, coarse, RoI, fine, stitch."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    recorded: dict[str, Any] = {}
    recorded_inputs: dict[str, str] = {}
    if from_manifest is not None:
        manifest = read_manifest(from_manifest)
        if manifest.get("command") != "pipeline":
            raise ToothSegError(f"{from_manifest}: manifest of {manifest.get('command')!r}, not 'pipeline'")
        recorded = dict(manifest.get("parameters", {}))
        recorded_inputs = dict(manifest.get("inputs", {}))

    image_path = image_path or _optional_path(recorded_inputs.get("image"))
    if image_path is None:
        raise typer.BadParameter("--in is required unless --from-manifest names an image")
    gt = gt or _optional_path(recorded_inputs.get("gt"))
    coarse_probs = coarse_probs or _optional_path(recorded_inputs.get("coarse_probs"))
    fine_probs = fine_probs or _optional_path(recorded_inputs.get("fine_probs"))

    flags = {
        "coarse_spacing_mm": coarse_spacing,
        "margin_mm": margin,
        "stitch_threshold": threshold,
        "lo_pct": lo_pct,
        "hi_pct": hi_pct,
        "connectivity": connectivity,
    }
    cfg = pipeline_config(state, **{k: pick(flags[k], recorded.get(k)) for k in _CONFIG_KEYS})
    coarse = pick(coarse, recorded.get("coarse", "classical"))
    fine = pick(fine, recorded.get("fine", "threshold"))
    quantile = pick(quantile, recorded.get("quantile", state.config.fine_quantile))

    truth = load_labels(gt) if gt else None
    coarse_segmenter = get_coarse(coarse, gt=truth, directory=coarse_probs)
    fine_segmenter = get_fine(fine, gt=truth, directory=fine_probs, quantile=quantile)

    image = load_intensity(image_path)
    run = run_pipeline_detailed(image, coarse_segmenter, fine_segmenter, cfg, jobs=state.effective_jobs)
    for tooth, reason in run.skipped.items():
        print_kv(state.err_console, f"skipped tooth {tooth}", reason)

    out.mkdir(parents=True, exist_ok=True)
    written = {
        "labels": save_volume(run.labels, out / "labels"),
        "coarse_labels": save_volume(run.coarse_labels, out / "coarse_labels"),
    }
    finish_run(
        state,
        "pipeline",
        out,
        parameters={
            "coarse": coarse,
            "fine": fine,
            "quantile": quantile,
            "coarse_spacing_mm": cfg.coarse_spacing_mm,
            "margin_mm": cfg.margin_mm,
            "stitch_threshold": cfg.stitch_threshold,
            "lo_pct": cfg.lo_pct,
            "hi_pct": cfg.hi_pct,
            "connectivity": cfg.connectivity,
        },
        inputs={"image": image_path, **segmenter_inputs(gt, coarse_probs, fine_probs)},
        outputs=written,
        timings_s=run.timings_s,
        skipped=run.skipped,
    )
