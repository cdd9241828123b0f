from __future__ import annotations

from pathlib import Path

import typer

from toothseglib.core.utils.timing import StageTimer
from toothseglib.stages.volume import (
    load_intensity,
    normalize_intensities,
    random_crop,
    resample_isotropic,
    save_volume,
)

from .common import CliState, finish_run, jobs_option, parse_triple, pick, seed_option


def preprocess_cmd(
    ctx: typer.Context,
    image_path: Path = typer.Option(..., "--in", help="Intensity volume header (.vjson)."),
    out: Path = typer.Option(..., "--out", help="Output directory."),
    spacing: float | None = typer.Option(None, "--spacing", help="Target isotropic spacing in mm."),
    lo_pct: float | None = typer.Option(None, "--lo", help="Lower clipping percentile."),
    hi_pct: float | None = typer.Option(None, "--hi", help="Upper clipping percentile."),
    crop: str | None = typer.Option(
        None, "--crop", help="Random training patch size Z,Y,X (uses --seed)."
    ),
    jobs: int | None = jobs_option(),
    seed: int | None = seed_option(),
) -> None:
    """Normalize intensities and resample to isotropic spacing."""
    state = CliState.from_ctx(ctx, jobs=jobs, seed=seed)
    config = state.config
    spacing = pick(spacing, config.coarse_spacing_mm)
    lo_pct = pick(lo_pct, config.lo_pct)
    hi_pct = pick(hi_pct, config.hi_pct)
    seed = state.effective_seed if crop else None

    timer = StageTimer()
    image = load_intensity(image_path)
    with timer.stage("normalize"):
        result = normalize_intensities(image, lo_pct, hi_pct)
    with timer.stage("resample"):
        result = resample_isotropic(result, spacing)
    if crop:
        size = parse_triple(crop, name="--crop")
        with timer.stage("crop"):
            result = random_crop(result, size, seed)

    out.mkdir(parents=True, exist_ok=True)
    written = {"image": save_volume(result, out / "image")}
    finish_run(
        state,
        "preprocess",
        out,
        parameters={"spacing_mm": spacing, "lo_pct": lo_pct, "hi_pct": hi_pct, "crop": crop},
        inputs={"image": image_path},
        outputs=written,
        timings_s=timer.timings,
        seed=seed,
    )
