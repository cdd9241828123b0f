from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from toothseglib import AppConfig, Config
from toothseglib.stages.segmenters import PipelineConfig
from toothseglib.workflows.pipeline import build_manifest, pipeline_config_from, write_manifest


@dataclass(frozen=True)
class CliState:
    console: Console
    err_console: Console
    debug: bool
    json: bool
    jobs: int | None = None
    seed: int | None = None

    @staticmethod
    def from_ctx(
        ctx: typer.Context, *, jobs: int | None = None, seed: int | None = None
    ) -> "CliState":
        """State from the app callback, with a command's own --jobs/--seed applied."""
        obj = getattr(ctx, "obj", None)
        if not isinstance(obj, CliState):
            raise RuntimeError("CLI state not initialized")
        overrides = {k: v for k, v in (("jobs", jobs), ("seed", seed)) if v is not None}
        return replace(obj, **overrides) if overrides else obj

    @property
    def config(self) -> Config:
        return AppConfig().config

    @property
    def effective_jobs(self) -> int:
        return self.jobs if self.jobs is not None else self.config.jobs

    @property
    def effective_seed(self) -> int:
        return self.seed if self.seed is not None else 0


def jobs_option() -> Any:
    return typer.Option(
        None,
        "--jobs",
        min=1,
        help="Teeth processed in parallel (defaults to the configured value).",
    )


def seed_option() -> Any:
    return typer.Option(
        None,
        "--seed",
        help="Seed for every random choice (phantom noise, random crops).",
    )


def connectivity_option() -> Any:
    return typer.Option(
        None,
        "--connectivity",
        help="Voxel connectivity (6 or 26) when keeping each tooth's largest component.",
    )


def configure_environment(state: CliState) -> None:
    if state.debug:
        os.environ.setdefault("TOOTHSEG_DEBUG", "1")


def format_output(value: Any, *, json_mode: bool) -> str:
    if not json_mode:
        return str(value)
    return json.dumps(value, indent=2, sort_keys=True, default=str)


def print_error(console: Console, message: str) -> None:
    console.print(
        Panel(
            Text(message, style="bold red"),
            title="Error",
            border_style="red",
            expand=False,
        )
    )


def print_success(console: Console, message: str) -> None:
    console.print(Text(message, style="green"))


def print_kv(console: Console, key: str, value: Any) -> None:
    console.print(Text(f"{key}: ", style="bold") + Text(str(value)))


def parse_triple(value: str, *, cast: type = int, name: str = "value") -> tuple[Any, Any, Any]:
    """Parse ``"Z,Y,X"`` (or a single number meaning all three axes)."""
    parts = [p.strip() for p in value.split(",") if p.strip()]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise typer.BadParameter(f"{name} needs one or three comma-separated numbers, got {value!r}")
    try:
        a, b, c = (cast(p) for p in parts)
    except ValueError as e:
        raise typer.BadParameter(f"{name}: {e}") from e
    return a, b, c


def pick(flag: Any, default: Any) -> Any:
    """Flag value when given, else the configured default."""
    return default if flag is None else flag


def finish_run(
    state: CliState,
    command: str,
    out_dir: Path,
    *,
    parameters: dict[str, Any],
    inputs: dict[str, str | Path],
    outputs: dict[str, str | Path],
    timings_s: dict[str, float] | None = None,
    seed: int | None = None,
    skipped: dict[int, str] | None = None,
    quiet: bool = False,
) -> Path:
    """Write the run manifest and report the outputs (unless ``quiet``)."""
    manifest = build_manifest(
        command,
        parameters=parameters,
        inputs=inputs,
        outputs=outputs,
        seed=seed,
        jobs=state.effective_jobs,
        timings_s=timings_s,
        skipped=skipped,
    )
    path = write_manifest(manifest, out_dir)
    if quiet:
        return path
    if state.json:
        state.console.print(format_output({**manifest, "manifest": str(path)}, json_mode=True))
    else:
        for key, value in outputs.items():
            print_kv(state.console, key, value)
        print_success(state.console, f"{command}: manifest written to {path}")
    return path


def score_table(title: str, per_tooth: dict[str, dict[str, Any]]) -> Table:
    table = Table(title=title)
    table.add_column("tooth", justify="right")
    table.add_column("iou", justify="right")
    table.add_column("asd_mm", justify="right")
    table.add_column("in gt")
    table.add_column("in pred")
    for tooth, score in per_tooth.items():
        asd = score["asd_mm"]
        table.add_row(
            tooth,
            f"{score['iou']:.4f}",
            "undefined" if asd is None else f"{asd:.4f}",
            "yes" if score["present_in_gt"] else "no",
            "yes" if score["present_in_pred"] else "no",
        )
    return table


def segmenter_inputs(
    gt: Path | None, coarse_probs: Path | None = None, fine_probs: Path | None = None
) -> dict[str, str | Path]:
    """Optional segmenter inputs worth recording in a manifest."""
    named = {"gt": gt, "coarse_probs": coarse_probs, "fine_probs": fine_probs}
    return {k: v for k, v in named.items() if v is not None}


def pipeline_config(state: CliState, **flags: Any) -> PipelineConfig:
    """Configured PipelineConfig with every given (non-None) flag applied."""
    base = pipeline_config_from(state.config)
    return replace(base, **{k: v for k, v in flags.items() if v is not None})
