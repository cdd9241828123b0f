from __future__ import annotations

from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.phantom import default_jaw, generate_phantom, save_study

from .common import CliState, finish_run, jobs_option, parse_triple, seed_option


def phantom_cmd(
    ctx: typer.Context,
    out: Path = typer.Option(..., "--out", help="Study directory to write."),
    teeth: int = typer.Option(8, "--teeth", min=1, max=32, help="Number of teeth."),
    shape: str = typer.Option("160,160,160", "--shape", help="Voxel counts Z,Y,X."),
    spacing: float = typer.Option(0.4, "--spacing", help="Isotropic voxel size in mm."),
    noise: float = typer.Option(0.0, "--noise", min=0.0, help="Gaussian noise sigma."),
    jobs: int | None = jobs_option(),
    seed: int | None = seed_option(),
) -> None:
    """Generate a synthetic study: image, ground-truth labels and weak annotations."""
    state = CliState.from_ctx(ctx, jobs=jobs, seed=seed)
    seed = state.effective_seed
    grid = parse_triple(shape, name="--shape")

    timer = StageTimer()
    with timer.stage("generate"):
        cfg = default_jaw(teeth, grid, (spacing, spacing, spacing), seed, noise_sigma=noise)
        image, labels, annotations = generate_phantom(cfg)
    with timer.stage("save"):
        written = save_study(out, image, labels, annotations)

    finish_run(
        state,
        "phantom",
        out,
        parameters={"teeth": teeth, "shape": list(grid), "spacing_mm": spacing, "noise_sigma": noise},
        inputs={},
        outputs=written,
        timings_s=timer.timings,
        seed=seed,
    )
