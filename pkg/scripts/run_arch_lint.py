#!/usr/bin/env python3
"""Check the toothseg layering (cli -> workflows -> stages -> core) with import-linter."""

import subprocess
import sys

from rich.console import Console


def main():
    console = Console()
    console.print("[bold blue]Checking toothseg import layers...[/bold blue]")

    try:
        result = subprocess.run(["lint-imports"], capture_output=False)
    except FileNotFoundError:
        console.print("\n[bold red]Error: 'lint-imports' command not found.[/bold red]")
        console.print("Install the dev dependency group (import-linter): [bold]uv sync --group dev[/bold]")
        sys.exit(1)

    if result.returncode == 0:
        console.print("\n[bold green]Layer contract kept.[/bold green]")
    else:
        console.print("\n[bold red]Layer contract broken.[/bold red]")
        console.print(
            "[yellow]A lower layer imports a higher one. Move the shared code down "
            "(usually into toothseglib.core) instead of importing upward.[/yellow]"
        )
    sys.exit(result.returncode)


if __name__ == "__main__":
    main()
