from __future__ import annotations

import json
from pathlib import Path

import typer
from rich.table import Table

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.segmenters import get_coarse, get_fine
from toothseglib.stages.volume import load_intensity, load_labels
from toothseglib.workflows.pipeline import compare_regimes

from .common import (
    CliState,
    finish_run,
    format_output,
    jobs_option,
    pick,
    pipeline_config,
    segmenter_inputs,
)


def _fmt(value: float | None, pattern: str = "{:.4f}") -> str:
    return "n/a" if value is None else pattern.format(value)


def compare_cmd(
    ctx: typer.Context,
    image_path: Path = typer.Option(..., "--in", help="Intensity volume header (.vjson)."),
    gt_path: Path = typer.Option(..., "--gt", help="Ground-truth labels (.vjson)."),
    out: Path = typer.Option(..., "--out", help="Directory for comparison.json and the manifest."),
    coarse: str = typer.Option("classical", "--coarse", help="oracle | classical | external."),
    fine: str = typer.Option("threshold", "--fine", help="oracle | threshold | external."),
    coarse_probs: Path | None = typer.Option(None, "--coarse-probs", help="class_XX.vjson directory."),
    fine_probs: Path | None = typer.Option(None, "--fine-probs", help="tooth_XX.vjson directory."),
    quantile: float | None = typer.Option(None, "--quantile", help="threshold segmenter quantile."),
    margin: float | None = typer.Option(None, "--margin", help="RoI margin in mm."),
    match: bool = typer.Option(False, "--match", help="Optimal label matching before scoring."),
    jobs: int | None = jobs_option(),
) -> None:
    """Score coarse-only against coarse-to-fine on one study."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    cfg = pipeline_config(state, margin_mm=margin)
    quantile = pick(quantile, state.config.fine_quantile)
    gt = load_labels(gt_path)
    coarse_segmenter = get_coarse(coarse, gt=gt, directory=coarse_probs)
    fine_segmenter = get_fine(fine, gt=gt, directory=fine_probs, quantile=quantile)

    timer = StageTimer()
    with timer.stage("compare"):
        result = compare_regimes(
            load_intensity(image_path),
            gt,
            coarse_segmenter,
            fine_segmenter,
            cfg,
            jobs=state.effective_jobs,
            match=match,
        )
    payload = result.to_dict()

    out.mkdir(parents=True, exist_ok=True)
    result_path = out / "comparison.json"
    result_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")

    if state.json:
        state.console.print(format_output(payload, json_mode=True))
    else:
        table = Table(title="Coarse-only vs coarse-to-fine")
        table.add_column("regime")
        table.add_column("mean iou", justify="right")
        table.add_column("mean asd_mm", justify="right")
        for name, report in (("coarse-only", result.coarse_only), ("coarse-to-fine", result.coarse_to_fine)):
            table.add_row(name, _fmt(report.mean_iou), _fmt(report.mean_asd_mm))
        table.add_row(
            "relative gain",
            _fmt(result.iou_improvement, "{:+.1%}"),
            _fmt(result.asd_improvement, "{:+.1%}"),
        )
        state.console.print(table)

    finish_run(
        state,
        "compare",
        out,
        parameters={
            "coarse": coarse,
            "fine": fine,
            "quantile": quantile,
            "margin_mm": cfg.margin_mm,
            "match": match,
        },
        inputs={"image": image_path, **segmenter_inputs(gt_path, coarse_probs, fine_probs)},
        outputs={"comparison": result_path},
        timings_s=timer.timings,
        quiet=state.json,
    )
