from typing import Optional

import typer
from rich.console import Console

from linkmse.analysis.pipeline import emit_plot_data, read_average_outputs, run_pipeline
from linkmse.core.config import load_settings
from linkmse.core.errors import LinkMSEError, StageError
from linkmse.core.validation import ValidationError, validate_directory_path, validate_file_path

console = Console()


def run(
    config: str = typer.Argument(..., help="Pipeline config file"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Run directory (overrides [run] out)"),
):
    """Run ingest, compare, link, diag, per-draw estimation and averaging"""
    try:
        settings = load_settings()
        config_path = validate_file_path(config)
        with console.status("[bold]Running pipeline...[/bold]"):
            run_dir = run_pipeline(config_path, out, settings.workers, settings.block_rows)
    except StageError as e:
        console.print(f"[bold red]Pipeline stage {e.stage} failed:[/bold red] {e}")
        raise typer.Exit(1)
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Pipeline failed:[/bold red] {e}")
        raise typer.Exit(1)
    console.print(f"[bold green]Pipeline finished.[/bold green] Outputs in [bold cyan]{run_dir}[/bold cyan]")


def emit_plots(
    directory: str = typer.Option(..., "--dir", "-d", help="Averaging output directory"),
    out: str = typer.Option(..., "--out", "-o", help="Long-format CSV to write"),
):
    """Pooled and per-draw posterior curves as (series, N, density) rows"""
    try:
        pooled, per_draw = read_average_outputs(validate_directory_path(directory))
        frame = emit_plot_data(pooled, per_draw, validate_file_path(out, must_exist=False))
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Plot data failed:[/bold red] {e}")
        raise typer.Exit(1)
    console.print(f"[bold green]Wrote {frame['series'].nunique()} series to[/bold green] {out}")
