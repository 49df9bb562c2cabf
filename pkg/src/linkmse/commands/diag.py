from typing import Optional

import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

from linkmse.analysis.compare import read_candidates
from linkmse.analysis.linkage import read_draws
from linkmse.analysis.pipeline import write_diagnostics
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import ValidationError, validate_directory_path, validate_file_path

console = Console()


def diagnose(
    draws: str = typer.Option(..., "--draws", "-d", help="Draw file written by link"),
    out: str = typer.Option(..., "--out", "-o", help="Directory for diagnostic CSVs"),
    candidates: Optional[str] = typer.Option(None, "--candidates", "-c", help="Candidate directory, for pair co-clustering"),
    frac_a: float = typer.Option(0.1, "--frac-a", help="Early Geweke window fraction"),
    frac_b: float = typer.Option(0.5, "--frac-b", help="Late Geweke window fraction"),
    max_lag: int = typer.Option(50, "--max-lag", help="Largest ACF lag"),
):
    """Partition summaries, Geweke scores and autocorrelations of a linkage chain"""
    try:
        chain = read_draws(validate_file_path(draws))
        cands = read_candidates(validate_directory_path(candidates)) if candidates else None
        out_dir = validate_directory_path(out, must_exist=False, create_if_missing=True)
        report = write_diagnostics(out_dir, chain, cands, frac_a, frac_b, max_lag)
        geweke = pd.read_csv(out_dir / "geweke.csv", keep_default_na=False)
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Diagnostics failed:[/bold red] {e}")
        raise typer.Exit(1)

    table = Table(title="Geweke diagnostics")
    table.add_column("Chain", style="cyan")
    table.add_column("Z", justify="right", style="green")
    table.add_column("Note", style="yellow")
    for row in geweke.itertuples():
        table.add_row(row.chain, str(row.z), row.note)
    console.print(table)
    observed = report["observed_count"]
    console.print(
        f"Distinct individuals: mean [bold]{observed['mean']:.1f}[/bold], "
        f"{100 * observed['level']:.0f}% interval [{observed['low']}, {observed['high']}]"
    )
    console.print(f"[bold green]Wrote diagnostics to[/bold green] {out_dir}")
