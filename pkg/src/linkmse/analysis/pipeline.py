"""End-to-end runs: ingest, compare, link, diagnose, estimate per draw, average.

A run directory holds every intermediate artifact plus manifest.json with
package versions, seeds and SHA-256 hashes of inputs and outputs.
"""

import contextlib
import hashlib
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator

import linkmse
from linkmse.analysis import diagnostics
from linkmse.analysis.averaging import AveragedPosterior, average_closed_form, average_draws
from linkmse.analysis.compare import (
    SimilarityConfig,
    build_comparisons,
    default_rules,
    filter_candidates,
    load_comparison_config,
    write_candidates,
)
from linkmse.analysis.histories import ContingencyTable, capture_histories, marginalize, write_table
from linkmse.analysis.ingest import load_lists, load_schema, membership, write_record_store
from linkmse.analysis.linkage import (
    LinkageChain,
    McmcConfig,
    TruncationPriors,
    mixture_rl_sampler,
    priors_from_sections,
    run_linkage_sampler,
    write_draws,
)
from linkmse.analysis.mse_graphical import bma_posterior, lincoln_petersen, posterior_N_given_m, prior_counts, select_models
from linkmse.analysis.mse_lcmcr import LcmcrConfig, run_lcmcr
from linkmse.analysis.posterior import SizePosterior, SizePrior, read_posterior, write_posterior, write_summary
from linkmse.core.config import Sections, parse_bool, read_sections, require_section, split_list
from linkmse.core.errors import ConfigError, LinkMSEError, StageError
from linkmse.core.log import get_logger
from linkmse.core.validation import ValidationError, validate_list_subset

logger = get_logger(__name__)

_VERSIONED = ("numpy", "scipy", "pandas", "rapidfuzz", "pydantic", "typer", "rich")


class EstimationSettings(BaseModel):
    """Which population-size model runs on each partition draw."""
    model: str = "bma"
    lists: Optional[List[int]] = None
    prior: Literal["reciprocal", "uniform"] = "reciprocal"
    n_max: Optional[int] = None
    alpha: float = 1.0
    draws: int = 100
    seed: int = 0
    lcmcr: LcmcrConfig = LcmcrConfig()

    @field_validator('alpha')
    @classmethod
    def validate_alpha(cls, v):
        if v <= 0:
            raise ValueError('alpha must be positive')
        return v

    @field_validator('draws')
    @classmethod
    def validate_draws(cls, v):
        if v < 1:
            raise ValueError('draws must be at least 1')
        return v

    @property
    def uses_draws(self) -> bool:
        return self.model == "lcmcr"

    def size_prior(self) -> SizePrior:
        return SizePrior(kind=self.prior, n_max=self.n_max or SizePrior().n_max)

    def estimate(self, table: ContingencyTable, seed: int) -> SizePosterior:
        if self.model == "lcmcr":
            config = self.lcmcr.model_copy(update={"prior": self.prior, "n_max": self.n_max})
            return run_lcmcr(table, config, seed)
        models = select_models(self.model, table.n_lists)
        alpha = prior_counts(table.n_lists, self.alpha)
        if self.model == "bma":
            post = bma_posterior(table, alpha, self.size_prior(), models)
        else:
            post = posterior_N_given_m(table, models[0], alpha, self.size_prior())
        if table.n_lists == 2:
            post.notes["lincoln_petersen"] = lincoln_petersen(table)
        return post


def estimation_from_section(section: Dict[str, str], where: str) -> EstimationSettings:
    kwargs: Dict[str, object] = {}
    lcmcr: Dict[str, object] = {}
    try:
        for key, value in section.items():
            if key == "lists":
                kwargs["lists"] = validate_list_subset(value)
            elif key in ("model", "prior"):
                kwargs[key] = value
            elif key in ("n_max", "draws", "seed"):
                kwargs[key] = int(value)
            elif key == "alpha":
                kwargs[key] = float(value)
            elif key in ("strata", "iterations", "burnin", "thin"):
                lcmcr[key] = int(value)
            else:
                raise ConfigError(f"{where}: unknown [estimation] key '{key}'")
        if lcmcr:
            kwargs["lcmcr"] = LcmcrConfig(**lcmcr)
        return EstimationSettings(**kwargs)
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"Invalid [estimation] in {where}: {e}")


class LinkageSettings(BaseModel):
    mcmc: McmcConfig = McmcConfig()
    seed: int = 0
    baseline: Literal["partition", "mixture"] = "partition"


def linkage_from_section(section: Dict[str, str], where: str) -> LinkageSettings:
    mcmc: Dict[str, object] = {}
    kwargs: Dict[str, object] = {}
    try:
        for key, value in section.items():
            if key in ("iterations", "burnin", "thin"):
                mcmc[key] = int(value)
            elif key in ("random_scan", "record_params"):
                mcmc[key] = parse_bool(value, f"{where} [linkage] {key}")
            elif key == "seed":
                kwargs["seed"] = int(value)
            elif key == "baseline":
                kwargs["baseline"] = value
            else:
                raise ConfigError(f"{where}: unknown [linkage] key '{key}'")
        return LinkageSettings(mcmc=McmcConfig(**mcmc), **kwargs)
    except ValueError as e:
        raise ConfigError(f"Invalid [linkage] in {where}: {e}")


class PipelineConfig(BaseModel):
    source: Path
    lists: List[Path]
    schema_path: Path
    compare_path: Optional[Path] = None
    priors: TruncationPriors
    linkage: LinkageSettings
    estimation: EstimationSettings
    out: Optional[Path] = None

    def input_files(self) -> Dict[str, Path]:
        files = {"config": self.source, "schema": self.schema_path}
        files.update((f"list{k}", p) for k, p in enumerate(self.lists, start=1))
        if self.compare_path is not None:
            files["compare"] = self.compare_path
        return files


def _resolve(base: Path, value: str) -> Path:
    path = Path(value).expanduser()
    return path if path.is_absolute() else (base / path)


def load_pipeline_config(path: Union[str, Path]) -> PipelineConfig:
    """Sections [inputs], [compare], [priors], [linkage], [estimation], [run].

    Relative paths resolve against the config file's directory.
    """
    path = Path(path)
    sections: Sections = read_sections(path)
    base = path.parent
    priors = priors_from_sections(sections, path)
    inputs = require_section(sections, "inputs", path)
    if "lists" not in inputs or "schema" not in inputs:
        raise ConfigError(f"{path}: [inputs] needs lists and schema")
    compare = sections.get("compare", {})
    run = sections.get("run", {})
    return PipelineConfig(
        source=path,
        lists=[_resolve(base, item) for item in split_list(inputs["lists"])],
        schema_path=_resolve(base, inputs["schema"]),
        compare_path=_resolve(base, compare["config"]) if compare.get("config") else None,
        priors=priors,
        linkage=linkage_from_section(sections.get("linkage", {}), str(path)),
        estimation=estimation_from_section(sections.get("estimation", {}), str(path)),
        out=_resolve(base, run["out"]) if run.get("out") else None,
    )


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any library error inside the block tagged with the stage name."""
    try:
        yield
    except StageError:
        raise
    except (LinkMSEError, ValidationError) as e:
        raise StageError(name, str(e)) from e


def select_draws(n_available: int, wanted: int) -> np.ndarray:
    """Indices of `wanted` evenly spaced saved draws (all of them if fewer exist)."""
    if wanted >= n_available:
        return np.arange(n_available)
    return np.unique(np.linspace(0, n_available - 1, wanted).round().astype(np.int64))


def draw_tables(
    chain: LinkageChain,
    indices: Sequence[int],
    member_of: np.ndarray,
    subset: Optional[Sequence[int]] = None,
) -> List[ContingencyTable]:
    n_lists = int(member_of.max())
    tables = []
    for t in indices:
        table = capture_histories(chain.draws[t], member_of, n_lists)
        tables.append(marginalize(table, subset) if subset else table)
    return tables


def _estimate_job(args) -> SizePosterior:
    settings, table, seed = args
    return settings.estimate(table, seed)


def estimate_per_draw(
    tables: Sequence[ContingencyTable],
    settings: EstimationSettings,
    workers: int = 1,
    progress: Optional[Callable[[int], None]] = None,
) -> List[SizePosterior]:
    """Conditional posteriors p(N | n(Z^(t))), one per table, in input order."""
    children = np.random.SeedSequence(settings.seed).spawn(len(tables))
    seeds = [int(child.generate_state(1)[0]) for child in children]
    jobs = [(settings, table, seed) for table, seed in zip(tables, seeds)]
    results: List[SizePosterior] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for post in pool.map(_estimate_job, jobs):
                results.append(post)
                if progress is not None:
                    progress(len(results))
    else:
        for job in jobs:
            results.append(_estimate_job(job))
            if progress is not None:
                progress(len(results))
    return results


def average(posteriors: Sequence[SizePosterior], settings: EstimationSettings) -> AveragedPosterior:
    if settings.uses_draws:
        return average_draws([p.draws for p in posteriors])
    return average_closed_form(posteriors)


def emit_plot_data(
    pooled: Union[AveragedPosterior, SizePosterior],
    per_draw: Sequence[SizePosterior],
    path: Optional[Union[str, Path]] = None,
) -> pd.DataFrame:
    """Long table (series, N, density): the pooled curve plus one curve per draw."""
    frames = [pd.DataFrame({"series": "pooled", "N": pooled.support, "density": pooled.probs})]
    for t, post in enumerate(per_draw):
        frames.append(pd.DataFrame({"series": f"draw_{t}", "N": post.support, "density": post.probs}))
    frame = pd.concat(frames, ignore_index=True)
    if path is not None:
        frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return frame


def read_average_outputs(directory: Union[str, Path]) -> tuple:
    """Pooled posterior and per-draw posteriors (ordered by draw index) from an averaging directory."""
    directory = Path(directory)
    pooled = read_posterior(directory / "pooled.csv")
    files = sorted((directory / "per_draw").glob("draw_*.csv"), key=lambda p: int(p.stem.split("_", 1)[1]))
    return pooled, [read_posterior(p) for p in files]


def write_diagnostics(
    directory: Path,
    chain: LinkageChain,
    candidates=None,
    frac_a: float = 0.1,
    frac_b: float = 0.5,
    max_lag: int = 50,
) -> Dict[str, object]:
    """summaries.csv, geweke.csv, acf.csv and, with candidates, pair_probs.csv."""
    directory.mkdir(parents=True, exist_ok=True)
    summaries = diagnostics.partition_summaries(chain, candidates)
    chains = summaries.scalar_chains()
    if chain.param_trace is not None:
        chains.extend(diagnostics.ScalarChain(name, chain.param_trace[:, i]) for i, name in enumerate(chain.param_names))
    summaries.frame().to_csv(directory / "summaries.csv", index=False, lineterminator="\n")
    diagnostics.geweke_table(chains, frac_a, frac_b).to_csv(directory / "geweke.csv", index=False, lineterminator="\n")
    diagnostics.acf_table(chains, max_lag).to_csv(directory / "acf.csv", index=False, lineterminator="\n")
    if candidates is not None:
        summaries.pair_probabilities().to_csv(directory / "pair_probs.csv", index=False, lineterminator="\n")
    report = {"observed_count": summaries.observed_count(), "draws": len(chain)}
    if chain.non_transitive is not None:
        report["non_transitive_mean"] = float(chain.non_transitive.mean())
    write_summary(directory / "diagnostics.json", report)
    return report


def write_average_outputs(
    directory: Path,
    averaged: AveragedPosterior,
    indices: Sequence[int],
    tables: Sequence[ContingencyTable],
) -> None:
    """pooled.csv, per_draw.csv, per_draw/draw_<t>.csv, decomposition.json, summary.json and plot_data.csv."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "per_draw").mkdir(exist_ok=True)
    pooled = averaged.posterior()
    write_posterior(directory / "pooled.csv", pooled)
    rows = []
    for t, table, post in zip(indices, tables, averaged.per_draw):
        write_posterior(directory / "per_draw" / f"draw_{int(t)}.csv", post)
        low, high = post.interval(0.99)
        rows.append((int(t), table.n_obs, post.mean, post.var, low, high))
    pd.DataFrame(rows, columns=["draw", "n_obs", "mean", "var", "low99", "high99"]).to_csv(
        directory / "per_draw.csv", index=False, lineterminator="\n", float_format="%.17g"
    )
    write_summary(directory / "decomposition.json", averaged.decomposition.report())
    write_summary(directory / "summary.json", pooled.summary(0.99))
    emit_plot_data(averaged, averaged.per_draw, directory / "plot_data.csv")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _versions() -> Dict[str, str]:
    versions = {"linkmse": linkmse.__version__, "python": platform.python_version()}
    for name in _VERSIONED:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(run_dir: Path, config: PipelineConfig) -> Dict[str, object]:
    outputs = sorted(p for p in run_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    inputs = {key: _sha256(p) for key, p in config.input_files().items()}
    manifest = {
        "versions": _versions(),
        "seeds": {"linkage": config.linkage.seed, "estimation": config.estimation.seed},
        "inputs": inputs,
        "input_digest": hashlib.sha256(json.dumps(inputs, sort_keys=True).encode()).hexdigest(),
        "outputs": {str(p.relative_to(run_dir)): _sha256(p) for p in outputs},
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def run_pipeline(
    config_path: Union[str, Path],
    out: Optional[Union[str, Path]] = None,
    workers: int = 1,
    block_rows: int = 256,
) -> Path:
    """Execute every stage in order; any failure surfaces as a StageError."""
    with stage("config"):
        config = load_pipeline_config(config_path)
        run_dir = Path(out) if out is not None else config.out
        if run_dir is None:
            raise ConfigError("no run directory: set [run] out or pass one explicitly")
        run_dir.mkdir(parents=True, exist_ok=True)

    with stage("ingest"):
        schema = load_schema(config.schema_path)
        _, records = load_lists(config.lists, schema)
        write_record_store(run_dir / "records.csv", schema, records)
        member_of = membership(records)

    with stage("compare"):
        if config.compare_path is not None:
            similarity, rules = load_comparison_config(config.compare_path)
        else:
            similarity, rules = SimilarityConfig.standard(), default_rules()
        comparisons = build_comparisons(records, schema, similarity, block_rows, workers)
        candidates = filter_candidates(comparisons, rules)
        write_candidates(run_dir / "candidates", candidates)

    with stage("link"):
        lam = config.priors.for_fields(candidates.fields, candidates.n_levels)
        if config.linkage.baseline == "mixture":
            chain = mixture_rl_sampler(candidates, lam, config.linkage.mcmc, config.linkage.seed).closures(candidates)
        else:
            chain = run_linkage_sampler(candidates, lam, config.linkage.mcmc, config.linkage.seed)
        write_draws(run_dir / "draws.txt", chain)

    with stage("diag"):
        write_diagnostics(run_dir / "diag", chain, candidates)

    with stage("estimate"):
        settings = config.estimation
        subset = validate_list_subset(",".join(map(str, settings.lists)), int(member_of.max())) if settings.lists else None
        indices = select_draws(len(chain), settings.draws)
        tables = draw_tables(chain, indices, member_of, subset)
        tables_dir = run_dir / "tables"
        tables_dir.mkdir(exist_ok=True)
        for t, table in zip(indices, tables):
            write_table(tables_dir / f"draw_{int(t)}.csv", table)
        posteriors = estimate_per_draw(tables, settings, workers)

    with stage("average"):
        averaged = average(posteriors, settings)
        write_average_outputs(run_dir / "average", averaged, indices, tables)

    write_manifest(run_dir, config)
    logger.info("pipeline finished: %s", run_dir)
    return run_dir
