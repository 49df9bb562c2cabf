import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn

from linkmse.analysis.compare import read_candidates
from linkmse.analysis.linkage import McmcConfig, load_priors, mixture_rl_sampler, run_linkage_sampler, write_draws
from linkmse.core.errors import LinkMSEError
from linkmse.core.validation import (
    ValidationError,
    validate_directory_path,
    validate_file_path,
    validate_mcmc_lengths,
    validate_seed,
)

console = Console()


def link_records(
    candidates: str = typer.Option(..., "--candidates", "-c", help="Candidate directory written by compare"),
    priors: str = typer.Option(..., "--priors", "-p", help="Truncation points file with a [priors] section"),
    iters: int = typer.Option(10000, "--iters", help="Gibbs iterations"),
    burnin: int = typer.Option(1000, "--burnin", help="Iterations discarded as burn-in"),
    thin: int = typer.Option(5, "--thin", help="Keep one draw every THIN iterations"),
    seed: int = typer.Option(..., "--seed", help="Random seed"),
    out: str = typer.Option(..., "--out", "-o", help="Draw file to write"),
    baseline: str = typer.Option("partition", "--baseline", help="partition or mixture"),
    random_scan: bool = typer.Option(False, "--random-scan", help="Visit records in random order each sweep"),
    record_params: bool = typer.Option(False, "--record-params", help="Also write m/u traces"),
):
    """Run the partition Gibbs sampler (or the pairwise mixture baseline)"""
    try:
        validate_mcmc_lengths(iters, burnin, thin)
        seed = validate_seed(seed)
        if baseline not in ("partition", "mixture"):
            raise ValidationError(f"Unknown baseline: {baseline}")
        cands = read_candidates(validate_directory_path(candidates))
        lam = load_priors(validate_file_path(priors)).for_fields(cands.fields, cands.n_levels)
        out_path = validate_file_path(out, must_exist=False)
        config = McmcConfig(iterations=iters, burnin=burnin, thin=thin, random_scan=random_scan, record_params=record_params)
        with Progress(
            TextColumn("[progress.description]{task.description}"), BarColumn(), TimeElapsedColumn(), console=console
        ) as progress:
            task = progress.add_task(description=f"{baseline} sampler", total=iters)

            def advance(t: int) -> None:
                progress.update(task, completed=t)

            if baseline == "mixture":
                chain = mixture_rl_sampler(cands, lam, config, seed, advance).closures(cands)
            else:
                chain = run_linkage_sampler(cands, lam, config, seed, advance)
        write_draws(out_path, chain)
    except (LinkMSEError, ValidationError) as e:
        console.print(f"[bold red]Linkage failed:[/bold red] {e}")
        raise typer.Exit(1)

    console.print(f"[bold green]Saved {len(chain)} draws over {chain.n_records} records to[/bold green] {out_path}")
    if chain.non_transitive is not None:
        console.print(f"Mean non-transitive triplets per draw: [bold]{chain.non_transitive.mean():.2f}[/bold]")
