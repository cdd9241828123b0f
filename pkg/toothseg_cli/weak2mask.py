from __future__ import annotations

from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.volume import load_intensity, save_volume
from toothseglib.stages.weaklabels import EnergyParams, parse_annotations, weak_to_mask

from .common import CliState, finish_run, jobs_option, pick


def weak2mask_cmd(
    ctx: typer.Context,
    image_path: Path = typer.Option(..., "--in", help="Intensity volume header (.vjson)."),
    ann_path: Path = typer.Option(..., "--ann", help="Annotation JSON file."),
    out: Path = typer.Option(..., "--out", help="Output directory."),
    k: float | None = typer.Option(None, "--k", help="Energy slope per mm (negative)."),
    tau: float | None = typer.Option(None, "--tau", help="Background energy."),
    manufacturer: str | None = typer.Option(
        None, "--manufacturer", help="Use the configured slope of this scanner manufacturer."
    ),
    distance_mode: str | None = typer.Option(
        None, "--distance-mode", help="'min' (point-to-centerline) or 'mean'."
    ),
    jobs: int | None = jobs_option(),
) -> None:
    """Turn weak axial-box annotations into a dense 33-class mask."""
    state = CliState.from_ctx(ctx, jobs=jobs)
    config = state.config
    params = EnergyParams(
        k=pick(k, config.slope_for(manufacturer)),
        background_energy=pick(tau, config.energy_tau),
        distance_mode=pick(distance_mode, config.distance_mode),
    )

    timer = StageTimer()
    image = load_intensity(image_path)
    annotations = parse_annotations(ann_path)
    with timer.stage("weak2mask"):
        labels = weak_to_mask(image, annotations, params, jobs=state.effective_jobs)

    out.mkdir(parents=True, exist_ok=True)
    written = {"labels": save_volume(labels, out / "labels")}
    finish_run(
        state,
        "weak2mask",
        out,
        parameters={
            "k": params.k,
            "tau": params.background_energy,
            "distance_mode": params.distance_mode,
            "manufacturer": manufacturer,
        },
        inputs={"image": image_path, "annotations": ann_path},
        outputs=written,
        timings_s=timer.timings,
    )
