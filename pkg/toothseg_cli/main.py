"""Typer + Rich CLI for toothseglib.

Install:
    pip install -e ".[cli]"

Run:
    tseg --help
"""

from __future__ import annotations

import os

import typer
from rich.console import Console
from rich.traceback import install as install_rich_traceback

from toothseglib import ToothSegError
from toothseglib.core.utils.logging import configure_logging
from toothseglib.workflows.pipeline import tool_version

from . import coarse as coarse_cmd
from . import compare as compare_cmd
from . import evaluate as evaluate_cmd
from . import fine as fine_cmd
from . import phantom as phantom_cmd
from . import pipeline as pipeline_cmd
from . import preprocess as preprocess_cmd
from . import roi as roi_cmd
from . import weak2mask as weak2mask_cmd
from .common import (
    CliState,
    configure_environment,
    format_output,
    jobs_option,
    print_error,
    seed_option,
)

app = typer.Typer(
    name="tseg",
    help="Coarse-to-fine tooth segmentation of CBCT volumes.",
    add_completion=False,
    no_args_is_help=True,
)

app.command("phantom")(phantom_cmd.phantom_cmd)
app.command("preprocess")(preprocess_cmd.preprocess_cmd)
app.command("weak2mask")(weak2mask_cmd.weak2mask_cmd)
app.command("coarse")(coarse_cmd.coarse_cmd)
app.command("roi")(roi_cmd.roi_cmd)
app.command("fine")(fine_cmd.fine_cmd)
app.command("pipeline")(pipeline_cmd.pipeline_cmd)
app.command("evaluate")(evaluate_cmd.evaluate_cmd)
app.command("compare")(compare_cmd.compare_cmd)


@app.callback()
def _global_options(
    ctx: typer.Context,
    debug: bool = typer.Option(
        False,
        "--debug",
        help="Show full tracebacks and enable library debug logging.",
    ),
    json_output: bool = typer.Option(
        False,
        "--json",
        help="Emit JSON to stdout (useful for scripting).",
    ),
    jobs: int | None = jobs_option(),
    seed: int | None = seed_option(),
) -> None:
    state = CliState(
        console=Console(stderr=False),
        err_console=Console(stderr=True),
        debug=debug,
        json=json_output,
        jobs=jobs,
        seed=seed,
    )
    ctx.obj = state

    configure_environment(state)
    configure_logging(state.config.log_level)
    if debug:
        install_rich_traceback(show_locals=False, suppress=[typer])


@app.command("version")
def version_cmd(ctx: typer.Context) -> None:
    """Print the library version."""
    state = CliState.from_ctx(ctx)
    version = tool_version()
    if state.json:
        state.console.print(format_output({"version": version}, json_mode=True))
    else:
        state.console.print(f"toothseg v{version}")


def main() -> None:
    """Console script entrypoint.

    Library, missing-file and bad-value errors exit with code 2 and a short
    message; set TOOTHSEG_DEBUG to get the traceback instead.
    """
    try:
        app()
    except (ToothSegError, FileNotFoundError, ValueError) as e:
        if os.environ.get("TOOTHSEG_DEBUG"):
            raise
        console = Console(stderr=True)
        print_error(console, str(e))
        raise SystemExit(2) from e
    except KeyboardInterrupt:
        raise SystemExit(130)
