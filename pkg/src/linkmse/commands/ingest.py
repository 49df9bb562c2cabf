from typing import List

import typer
from rich.console import Console
from rich.table import Table

from linkmse.analysis.ingest import load_lists, load_schema, write_record_store
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import ValidationError, validate_file_path

console = Console()


def ingest_lists(
    lists: List[str] = typer.Argument(..., help="List CSV files, in list order"),
    schema: str = typer.Option(..., "--schema", "-s", help="Field schema file"),
    out: str = typer.Option(..., "--out", "-o", help="Record store CSV to write"),
):
    """Load and standardize K source lists into one record store"""
    try:
        schema_path = validate_file_path(schema)
        paths = [validate_file_path(p) for p in lists]
        out_path = validate_file_path(out, must_exist=False)
        field_schema = load_schema(schema_path)
        sources, records = load_lists(paths, field_schema)
        write_record_store(out_path, field_schema, records)
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Ingest failed:[/bold red] {e}")
        raise typer.Exit(1)

    table = Table(title="Source lists")
    table.add_column("List", justify="right", style="cyan")
    table.add_column("File", style="magenta")
    table.add_column("Records", justify="right", style="green")
    for source in sources:
        table.add_row(str(source.list_index), source.label, str(source.size))
    console.print(table)
    console.print(f"[bold green]Wrote {len(records)} records to[/bold green] {out_path}")
