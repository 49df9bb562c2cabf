from typing import Optional

import typer
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from linkmse.analysis.compare import (
    SimilarityConfig,
    build_comparisons,
    default_rules,
    filter_candidates,
    load_comparison_config,
    write_candidates,
)
from linkmse.analysis.ingest import load_schema, read_record_store
from linkmse.core.config import load_settings
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import ValidationError, validate_directory_path, validate_file_path

console = Console()


def compare_records(
    records: str = typer.Option(..., "--records", "-r", help="Record store written by ingest"),
    schema: str = typer.Option(..., "--schema", "-s", help="Field schema file"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Comparison config (default: standard name/date/place levels)"),
    out: str = typer.Option(..., "--out", "-o", help="Candidate directory to write"),
    block_rows: Optional[int] = typer.Option(None, "--block-rows", help="Rows per comparison block (default LINKMSE_BLOCK_ROWS)"),
):
    """Compare all record pairs and split them into candidates and fixed non-matches"""
    try:
        settings = load_settings()
        field_schema = load_schema(validate_file_path(schema))
        _, entries = read_record_store(validate_file_path(records), field_schema)
        if config:
            similarity, rules = load_comparison_config(validate_file_path(config))
        else:
            similarity, rules = SimilarityConfig.standard(), default_rules()
        out_dir = validate_directory_path(out, must_exist=False, create_if_missing=True)
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
            progress.add_task(description=f"Comparing {len(entries)} records...", total=None)
            comparisons = build_comparisons(
                entries, field_schema, similarity, block_rows or settings.block_rows, settings.workers
            )
            candidates = filter_candidates(comparisons, rules)
        write_candidates(out_dir, candidates)
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Compare failed:[/bold red] {e}")
        raise typer.Exit(1)

    table = Table(title="Comparison data")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")
    table.add_row("records", str(candidates.n_records))
    table.add_row("compared pairs", str(candidates.n_compared))
    table.add_row("candidate pairs", str(candidates.n_candidates))
    table.add_row("records in candidates", str(len(candidates.touched_records())))
    table.add_row("components", str(len(candidates.components)))
    console.print(table)
    console.print(f"[bold green]Wrote candidate sets to[/bold green] {out_dir}")
