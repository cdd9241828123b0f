from __future__ import annotations

import json
from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.metrics import evaluate, match_labels
from toothseglib.stages.volume import load_labels

from .common import CliState, finish_run, format_output, jobs_option, print_kv, score_table


def evaluate_cmd(
    ctx: typer.Context,
    pred_path: Path = typer.Option(..., "--pred", help="Predicted labels (.vjson)."),
    gt_path: Path = typer.Option(..., "--gt", help="Ground-truth labels (.vjson)."),
    match: bool = typer.Option(
        False, "--match", help="Renumber predicted teeth to ground truth by optimal IoU first."
    ),
    csv_path: Path | None = typer.Option(None, "--csv", help="Also write per-tooth scores as CSV."),
    out: Path | None = typer.Option(
        None,
        "--out",
        help="Directory for report.json and the manifest (default: an evaluation/ folder next to --pred).",
    ),
    jobs: int | None = jobs_option(),
) -> None:
    """Per-tooth IoU and ASD of a prediction against ground truth."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    timer = StageTimer()
    pred = load_labels(pred_path)
    gt = load_labels(gt_path)
    if match:
        with timer.stage("match"):
            pred = match_labels(pred, gt)
    with timer.stage("evaluate"):
        report = evaluate(pred, gt, jobs=state.effective_jobs)
    payload = report.to_dict()

    out_dir = out or pred_path.parent / "evaluation"
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    written: dict[str, str | Path] = {"report": report_path}
    if csv_path is not None:
        report.to_dataframe().to_csv(csv_path)
        written["csv"] = csv_path

    if state.json:
        state.console.print(format_output(payload, json_mode=True))
    else:
        state.console.print(score_table("Per-tooth scores", payload["per_tooth"]))
        aggregate = payload["aggregate"]
        print_kv(state.console, "mean iou", aggregate["iou"])
        print_kv(state.console, "mean asd_mm", aggregate["asd_mm"])
        if report.undefined_asd:
            print_kv(state.console, "asd undefined for", report.undefined_asd)

    finish_run(
        state,
        "evaluate",
        out_dir,
        parameters={"match": match},
        inputs={"pred": pred_path, "gt": gt_path},
        outputs=written,
        timings_s=timer.timings,
        quiet=state.json,
    )
