from typing import Optional

import typer
from rich.console import Console
from rich.table import Table

from linkmse.analysis.histories import read_table
from linkmse.analysis.mse_graphical import bma_posterior, lincoln_petersen, posterior_N_given_m, prior_counts, select_models
from linkmse.analysis.mse_lcmcr import LcmcrConfig, run_lcmcr
from linkmse.analysis.posterior import SizePosterior, SizePrior, write_posterior, write_summary
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import ValidationError, validate_file_path, validate_mcmc_lengths, validate_seed

console = Console()


def _print_summary(post: SizePosterior, title: str) -> None:
    low, high = post.interval(0.99)
    console.print(f"[bold]{title}[/bold]: mean [bold cyan]{post.mean:.1f}[/bold cyan], 99% interval [{low}, {high}]")
    if post.layers:
        table = Table(title="Model posterior")
        table.add_column("Model", style="cyan")
        table.add_column("p(m | n)", justify="right", style="green")
        table.add_column("E(N | n, m)", justify="right", style="magenta")
        for layer in post.layers:
            table.add_row(layer.name, f"{layer.weight:.4f}", f"{layer.mean:.1f}")
        console.print(table)


def mse_graph(
    table: str = typer.Option(..., "--table", "-t", help="Capture-history table CSV"),
    model: Optional[str] = typer.Option(None, "--model", "-m", help="Model in bracket notation, e.g. [1,2][3]"),
    bma: bool = typer.Option(False, "--bma", help="Average over every non-saturated decomposable model"),
    prior: str = typer.Option("reciprocal", "--prior", help="Size prior: reciprocal or uniform"),
    nmax: int = typer.Option(30000, "--nmax", help="Largest population size on the grid"),
    alpha: float = typer.Option(1.0, "--alpha", help="Prior count in every cell"),
    out: str = typer.Option(..., "--out", "-o", help="Posterior CSV (N,prob); a JSON summary is written alongside"),
):
    """Posterior of N under a decomposable graphical model or model averaging"""
    try:
        if model and bma:
            raise ValidationError("Use either --model or --bma, not both")
        counts = read_table(validate_file_path(table))
        out_path = validate_file_path(out, must_exist=False)
        size_prior = SizePrior(kind=prior, n_max=nmax)
        cell_alpha = prior_counts(counts.n_lists, alpha)
        models = select_models(model or "bma", counts.n_lists)
        if model:
            post = posterior_N_given_m(counts, models[0], cell_alpha, size_prior)
        else:
            post = bma_posterior(counts, cell_alpha, size_prior, models)
        if counts.n_lists == 2:
            post.notes["lincoln_petersen"] = lincoln_petersen(counts)
        write_posterior(out_path, post)
        write_summary(out_path.with_suffix(".json"), post.summary(0.99))
    except (LinkMSEError, ValidationError, ValueError) as e:
        console.print(f"[bold red]Estimation failed:[/bold red] {e}")
        raise typer.Exit(1)

    _print_summary(post, model or "model average")
    if "lincoln_petersen" in post.notes:
        console.print(f"Lincoln-Petersen estimate: {post.notes['lincoln_petersen']:.1f}")


def mse_lcmcr(
    table: str = typer.Option(..., "--table", "-t", help="Capture-history table CSV"),
    strata: int = typer.Option(10, "--strata", "-S", help="Maximum number of latent classes"),
    iters: int = typer.Option(10000, "--iters", help="MCMC iterations"),
    burnin: int = typer.Option(1000, "--burnin", help="Iterations discarded as burn-in"),
    thin: int = typer.Option(10, "--thin", help="Keep one draw every THIN iterations"),
    seed: int = typer.Option(..., "--seed", help="Random seed"),
    prior: str = typer.Option("reciprocal", "--prior", help="Size prior: reciprocal or uniform"),
    nmax: Optional[int] = typer.Option(None, "--nmax", help="Hard truncation of N (default: none)"),
    out: str = typer.Option(..., "--out", "-o", help="CSV of N draws; a JSON summary is written alongside"),
):
    """Draws of N from the latent-class capture-recapture model"""
    try:
        validate_mcmc_lengths(iters, burnin, thin)
        seed = validate_seed(seed)
        counts = read_table(validate_file_path(table))
        out_path = validate_file_path(out, must_exist=False)
        config = LcmcrConfig(strata=strata, iterations=iters, burnin=burnin, thin=thin, prior=prior, n_max=nmax)
        post = run_lcmcr(counts, config, seed)
        write_posterior(out_path, post)
        write_summary(out_path.with_suffix(".json"), post.summary(0.99))
    except (LinkMSEError, ValidationError, ValueError) as e:
        console.print(f"[bold red]Estimation failed:[/bold red] {e}")
        raise typer.Exit(1)

    _print_summary(post, f"latent classes (S={strata})")
    if post.notes.get("cap_hits"):
        console.print(f"[yellow]Size cap {post.notes['cap']} was reached in {post.notes['cap_hits']} iterations[/yellow]")
