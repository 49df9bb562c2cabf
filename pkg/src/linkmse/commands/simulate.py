from typing import Optional

import typer
from rich.console import Console

from linkmse.analysis.simulate import generate, load_sim_spec, write_simulation
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import ValidationError, validate_directory_path, validate_file_path, validate_seed

console = Console()


def simulate_lists(
    spec: str = typer.Option(..., "--spec", help="Simulation spec file"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the spec's seed"),
):
    """Write synthetic list CSVs, truth.csv and true_table.csv"""
    try:
        sim_spec = load_sim_spec(validate_file_path(spec))
        if seed is not None:
            sim_spec = sim_spec.model_copy(update={"seed": validate_seed(seed)})
        out_dir = validate_directory_path(out, must_exist=False, create_if_missing=True)
        result = generate(sim_spec)
        paths = write_simulation(out_dir, result)
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Simulation failed:[/bold red] {e}")
        raise typer.Exit(1)

    for k, path in enumerate(paths, start=1):
        size = sum(1 for rec in result.records if rec.list_index == k)
        console.print(f"  list {k}: [cyan]{path.name}[/cyan] ({size} records)")
    console.print(
        f"[bold green]Simulated N={sim_spec.n_true}[/bold green] "
        f"({result.true_table.n_obs} observed, {result.n_missed} missed by every list) in {out_dir}"
    )
