from typing import Optional

import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn
from rich.table import Table

from linkmse.analysis.ingest import read_membership
from linkmse.analysis.linkage import read_draws
from linkmse.analysis.mse_lcmcr import LcmcrConfig
from linkmse.analysis.pipeline import (
    EstimationSettings,
    average,
    draw_tables,
    estimate_per_draw,
    select_draws,
    write_average_outputs,
)
from linkmse.core.config import load_settings
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import (
    ValidationError,
    validate_directory_path,
    validate_file_path,
    validate_list_subset,
    validate_seed,
)

console = Console()


def average_posteriors(
    draws: str = typer.Option(..., "--draws", "-d", help="Linkage draw file"),
    records: str = typer.Option(..., "--records", "-r", help="Record store (gives each record's list)"),
    lists: Optional[str] = typer.Option(None, "--lists", "-l", help="List subset, e.g. 1,2 (default: all)"),
    model: str = typer.Option("bma", "--model", "-m", help="bma, a model such as [1,2][3], or lcmcr"),
    prior: str = typer.Option("reciprocal", "--prior", help="Size prior: reciprocal or uniform"),
    nmax: Optional[int] = typer.Option(None, "--nmax", help="Largest population size (graphical default 30000)"),
    alpha: float = typer.Option(1.0, "--alpha", help="Prior count in every cell"),
    n_draws: int = typer.Option(100, "--n-draws", help="Partition draws to average over"),
    seed: int = typer.Option(0, "--seed", help="Seed for per-draw latent-class runs"),
    strata: int = typer.Option(10, "--strata", help="Latent classes (lcmcr only)"),
    iters: int = typer.Option(10000, "--iters", help="Latent-class iterations per draw"),
    burnin: int = typer.Option(1000, "--burnin", help="Latent-class burn-in per draw"),
    thin: int = typer.Option(10, "--thin", help="Latent-class thinning per draw"),
    out: str = typer.Option(..., "--out", "-o", help="Output directory"),
):
    """Average population size posteriors over saved partition draws"""
    try:
        runtime = load_settings()
        chain = read_draws(validate_file_path(draws))
        member_of = read_membership(validate_file_path(records))
        if len(member_of) != chain.n_records:
            raise ValidationError(f"Record store has {len(member_of)} records, draws cover {chain.n_records}")
        subset = validate_list_subset(lists, int(member_of.max()))
        settings = EstimationSettings(
            model=model,
            lists=subset,
            prior=prior,
            n_max=nmax,
            alpha=alpha,
            draws=n_draws,
            seed=validate_seed(seed),
            lcmcr=LcmcrConfig(strata=strata, iterations=iters, burnin=burnin, thin=thin),
        )
        out_dir = validate_directory_path(out, must_exist=False, create_if_missing=True)
        indices = select_draws(len(chain), settings.draws)
        tables = draw_tables(chain, indices, member_of, subset)
        with Progress(TextColumn("[progress.description]{task.description}"), BarColumn(), console=console) as progress:
            task = progress.add_task(description="Per-draw posteriors", total=len(tables))
            posteriors = estimate_per_draw(
                tables, settings, runtime.workers, lambda done: progress.update(task, completed=done)
            )
        averaged = average(posteriors, settings)
        write_average_outputs(out_dir, averaged, indices, tables)
    except (LinkMSEError, ValidationError, ValueError) as e:
        console.print(f"[bold red]Averaging failed:[/bold red] {e}")
        raise typer.Exit(1)

    pooled = averaged.posterior()
    low, high = pooled.interval(0.99)
    console.print(
        f"[bold]Linkage-averaged N[/bold]: mean [bold cyan]{pooled.mean:.1f}[/bold cyan], "
        f"99% interval [{low}, {high}] over {averaged.n_draws} draws"
    )
    table = Table(title="Variance decomposition")
    table.add_column("Source", style="cyan")
    table.add_column("Share", justify="right", style="green")
    for name, share in averaged.decomposition.shares().items():
        table.add_row(name, f"{100 * share:.1f}%")
    console.print(table)
    console.print(f"[bold green]Wrote averaging outputs to[/bold green] {out_dir}")
