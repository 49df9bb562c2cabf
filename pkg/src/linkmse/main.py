import typer
from rich.console import Console

from linkmse import __version__
from linkmse.commands import average, compare, diag, ingest, link, mse, pipeline, simulate
from linkmse.core.config import load_settings
from linkmse.core.errors import ConfigError
from linkmse.core.log import configure_logging

app = typer.Typer(
    help="Bayesian record linkage and linkage-averaged population size estimation",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()


@app.callback()
def main():
    """Configure logging from LINKMSE_* environment settings"""
    try:
        settings = load_settings()
    except ConfigError as e:
        console.print(f"[bold red]Configuration error:[/bold red] {e}")
        raise typer.Exit(1)
    configure_logging(settings.log_level)


app.command("ingest", help="Load and standardize K source lists into a record store")(ingest.ingest_lists)
app.command("compare", help="Build comparison vectors and candidate pairs")(compare.compare_records)
app.command("link", help="Sample coreference partitions")(link.link_records)
app.command("diag", help="Convergence diagnostics for a linkage draw file")(diag.diagnose)
app.command("simulate", help="Generate synthetic lists with known truth")(simulate.simulate_lists)
app.command("mse-graph", help="Population size under decomposable graphical models")(mse.mse_graph)
app.command("mse-lcmcr", help="Population size under the latent-class model")(mse.mse_lcmcr)
app.command("average", help="Linkage-averaged population size posterior")(average.average_posteriors)
app.command("pipeline", help="Run every stage from a pipeline config")(pipeline.run)
app.command("emit-plots", help="Long-format plot data from averaging outputs")(pipeline.emit_plots)


@app.command()
def info():
    """Show information about linkmse"""
    console.print(f"[bold blue]linkmse[/bold blue] - v{__version__}")
    console.print("Record linkage with linkage-averaged capture-recapture estimation.")


if __name__ == "__main__":
    app()
