"""Bayesian partition model for joint duplicate detection and record linkage.

Comparison levels follow the sequential parameterization

    P1(level = l) = m_l * prod_{l' < l} (1 - m_l')      for l < L
    P1(level = L) = prod_{l' < L} (1 - m_l')

(and likewise P0 with u). Coreference partitions are labelings Z in which
two records may share a label only if every pair inside the cluster is a
candidate pair. The prior gives each feasible labeling mass proportional to
(r - n(Z))!.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, field_validator, model_validator
from scipy.special import betainc, betaincinv, betaln, expit, gammaln

from linkmse.analysis.compare import MISSING, CandidateSets, ComparisonVector
from linkmse.analysis.unionfind import UnionFind
from linkmse.core.config import Sections, parse_floats, read_sections, require_section
from linkmse.core.errors import ConfigError, InstanceTooLargeError, LinkageError
from linkmse.core.log import get_logger

logger = get_logger(__name__)

Progress = Optional[Callable[[int], None]]


class TruncationPriors(BaseModel):
    """Lower truncation points lambda_fl of the uniform priors on m_fl."""
    points: Dict[str, List[float]]

    @field_validator('points')
    @classmethod
    def validate_points(cls, v):
        for name, values in v.items():
            if any(not 0.0 <= x < 1.0 for x in values):
                raise ValueError(f'{name}: truncation points must lie in [0, 1)')
        return v

    @classmethod
    def standard(cls) -> "TruncationPriors":
        return cls(points={
            "given_name": [0.95, 0.99, 0.99],
            "family_name": [0.95, 0.99, 0.99],
            "year": [0.90, 0.95, 0.99],
            "month": [0.80, 0.90, 0.99],
            "day": [0.70, 0.70, 0.70],
            "place": [0.80],
        })

    @classmethod
    def flat(cls, fields: Sequence[str], n_levels: Sequence[int]) -> "TruncationPriors":
        return cls(points={f: [0.0] * n for f, n in zip(fields, n_levels)})

    @classmethod
    def from_section(cls, section: Dict[str, str], source: str = "priors") -> "TruncationPriors":
        points = {name: parse_floats(value, f"{source} [priors] {name}") for name, value in section.items()}
        try:
            return cls(points=points)
        except ValueError as e:
            raise ConfigError(f"Invalid priors in {source}: {e}")

    def for_fields(self, fields: Sequence[str], n_levels: Sequence[int]) -> List[np.ndarray]:
        out = []
        for name, n in zip(fields, n_levels):
            if name not in self.points:
                raise ConfigError(f"missing priors for field {name}")
            if len(self.points[name]) != n:
                raise ConfigError(f"priors for {name}: expected {n} truncation points, got {len(self.points[name])}")
            out.append(np.asarray(self.points[name], dtype=np.float64))
        return out


def priors_from_sections(sections: Sections, source: Union[str, Path] = "priors") -> TruncationPriors:
    return TruncationPriors.from_section(require_section(sections, "priors"), str(source))


def load_priors(path: Union[str, Path]) -> TruncationPriors:
    return priors_from_sections(read_sections(path), path)


class McmcConfig(BaseModel):
    iterations: int = 10000
    burnin: int = 1000
    thin: int = 5
    random_scan: bool = False
    record_params: bool = False

    @model_validator(mode='after')
    def validate_lengths(self):
        if self.iterations < 1 or self.burnin < 0 or self.thin < 1:
            raise ValueError('iterations must be positive, burnin non-negative, thin positive')
        if self.iterations - self.burnin < self.thin:
            raise ValueError('no draws would be saved with these iterations/burnin/thin')
        return self

    @property
    def n_saved(self) -> int:
        return (self.iterations - self.burnin) // self.thin

    def is_saved(self, iteration: int) -> bool:
        """`iteration` counts from 1."""
        return iteration > self.burnin and (iteration - self.burnin) % self.thin == 0


@dataclass
class LinkageParams:
    m: List[np.ndarray]
    u: List[np.ndarray]
    lam: List[np.ndarray]

    def __post_init__(self):
        for f, (m, u, lam) in enumerate(zip(self.m, self.u, self.lam)):
            if m.shape != lam.shape or u.shape != m.shape:
                raise LinkageError(f"field {f}: m, u and lambda must have one entry per level below L_f")
            if np.any(m < lam) or np.any(m <= 0) or np.any(m > 1):
                raise LinkageError(f"field {f}: m must lie in [lambda, 1] and be positive")
            if np.any(u <= 0) or np.any(u >= 1):
                raise LinkageError(f"field {f}: u must lie in (0, 1)")

    @property
    def n_levels(self) -> List[int]:
        return [len(m) for m in self.m]


def level_log_probs(probs: np.ndarray) -> np.ndarray:
    """Log P(level = l), l = 0..L, from the sequential conditional probabilities."""
    with np.errstate(divide="ignore"):
        log_fail = np.log1p(-probs)
        out = np.concatenate([[0.0], np.cumsum(log_fail)])
        out[:-1] += np.log(probs)
    return out


def _log_prob_table(probs: Sequence[np.ndarray]) -> np.ndarray:
    # last column stays 0 so that level -1 (missing) indexes a zero contribution
    width = max(len(p) for p in probs) + 2
    table = np.zeros((len(probs), width))
    for f, p in enumerate(probs):
        table[f, :len(p) + 1] = level_log_probs(p)
    return table


def _vector_log_lik(levels: Sequence[Optional[int]], probs: Sequence[np.ndarray]) -> float:
    total = 0.0
    for level, p in zip(levels, probs):
        if level is None:
            continue
        if not 0 <= level <= len(p):
            raise LinkageError(f"level {level} outside 0..{len(p)}")
        total += level_log_probs(p)[level]
    return float(total)


def log_lik_pair_coref(vector: ComparisonVector, params: LinkageParams) -> float:
    """ln P1(gamma_ij); missing fields contribute 0."""
    return _vector_log_lik(vector.levels, params.m)


def log_lik_pair_noncoref(vector: ComparisonVector, params: LinkageParams) -> float:
    return _vector_log_lik(vector.levels, params.u)


def pair_log_ratios(levels: np.ndarray, params: LinkageParams) -> np.ndarray:
    """ln P1 - ln P0 for every row of an int8 level matrix (-1 = missing)."""
    if len(levels) == 0:
        return np.zeros(0)
    cols = np.arange(levels.shape[1])[None, :]
    t1, t0 = _log_prob_table(params.m), _log_prob_table(params.u)
    idx = levels.astype(np.int64)
    return (t1[cols, idx] - t0[cols, idx]).sum(axis=1)


def canonicalize(labels: Sequence[int]) -> np.ndarray:
    """Relabel so each record's label is the smallest record index in its cluster."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return labels.astype(np.int64)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    return first[inverse.ravel()].astype(np.int64)


def n_clusters(labels: Sequence[int]) -> int:
    return len(np.unique(labels))


def is_feasible(labels: Sequence[int], candidates: CandidateSets) -> bool:
    labels = np.asarray(labels)
    if len(labels) != candidates.n_records:
        return False
    allowed = set(map(tuple, candidates.pairs.tolist()))
    clusters: Dict[int, List[int]] = {}
    for i, lab in enumerate(labels.tolist()):
        clusters.setdefault(lab, []).append(i)
    for members in clusters.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                if (members[a], members[b]) not in allowed:
                    return False
    return True


def log_partition_prior(labels: Sequence[int], candidates: CandidateSets) -> float:
    """ln[(r - n(Z))! / r!] on the feasible set, -inf outside it."""
    if not is_feasible(labels, candidates):
        return -math.inf
    r = candidates.n_records
    return float(gammaln(r - n_clusters(labels) + 1) - gammaln(r + 1))


def level_counts(levels: np.ndarray, mask: np.ndarray, n_levels: Sequence[int]) -> List[np.ndarray]:
    """Per field, counts of observed levels 0..L_f among the masked rows."""
    out = []
    chosen = levels[mask]
    for f, n in enumerate(n_levels):
        column = chosen[:, f]
        out.append(np.bincount(column[column != MISSING], minlength=n + 1).astype(np.int64))
    return out


def _agree_disagree(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """a_l = #(level = l), b_l = #(level > l) for l = 0..L-1."""
    beyond = np.cumsum(counts[::-1])[::-1]
    return counts[:-1], beyond[1:]


def truncated_beta(a: float, b: float, low: float, rng: np.random.Generator) -> float:
    """Draw from Beta(a, b) restricted to [low, 1] by inverse CDF."""
    if low <= 0.0:
        return float(rng.beta(a, b))
    below = betainc(a, b, low)
    if below < 0.5:
        x = betaincinv(a, b, below + rng.random() * (1.0 - below))
        return float(min(max(x, low), 1.0))
    # upper tail through the mirrored distribution 1 - X ~ Beta(b, a)
    mass = betainc(b, a, 1.0 - low)
    if mass > 0.0:
        y = betaincinv(b, a, rng.random() * mass)
        return float(min(max(1.0 - y, low), 1.0))
    rate = (b - 1.0) / (1.0 - low) - (a - 1.0) / low
    logger.warning("truncated Beta(%.3g, %.3g) mass above %.6g underflows; using boundary approximation", a, b, low)
    if rate <= 0.0:
        return float(low)
    return float(min(low + rng.exponential(1.0 / rate), 1.0))


def _draw_params(
    coref: np.ndarray, candidates: CandidateSets, lam: Sequence[np.ndarray], rng: np.random.Generator
) -> LinkageParams:
    counts_c = level_counts(candidates.levels, np.ones(len(candidates.levels), dtype=bool), candidates.n_levels)
    counts_1 = level_counts(candidates.levels, coref, candidates.n_levels)
    m, u = [], []
    for f, low in enumerate(lam):
        a1, b1 = _agree_disagree(counts_1[f])
        a0, b0 = _agree_disagree(counts_c[f] - counts_1[f] + candidates.fixed_tallies[f])
        m.append(np.array([truncated_beta(1.0 + a, 1.0 + b, lo, rng) for a, b, lo in zip(a1, b1, low)]))
        u.append(np.clip(rng.beta(1.0 + a0, 1.0 + b0), 1e-300, 1.0 - 1e-16))
    return LinkageParams(m=m, u=u, lam=[np.asarray(x, dtype=np.float64) for x in lam])


def coreference_mask(labels: np.ndarray, candidates: CandidateSets) -> np.ndarray:
    if len(candidates.pairs) == 0:
        return np.zeros(0, dtype=bool)
    return labels[candidates.pairs[:, 0]] == labels[candidates.pairs[:, 1]]


def gibbs_update_params(
    labels: Sequence[int], candidates: CandidateSets, lam: Sequence[np.ndarray], rng: np.random.Generator
) -> LinkageParams:
    """Draw m (truncated Beta) and u (Beta) given the current partition."""
    return _draw_params(coreference_mask(np.asarray(labels), candidates), candidates, lam, rng)


class _Neighborhoods:
    """Candidate neighbors and pair positions per record, built once per candidate set."""

    def __init__(self, candidates: CandidateSets):
        nbrs: Dict[int, List[Tuple[int, int]]] = {}
        for p, (i, j) in enumerate(candidates.pairs.tolist()):
            nbrs.setdefault(i, []).append((j, p))
            nbrs.setdefault(j, []).append((i, p))
        self.active = sorted(nbrs)
        self.nbrs = {j: tuple(pairs) for j, pairs in nbrs.items()}


def _sweep(
    labels: np.ndarray,
    ratios: np.ndarray,
    hood: _Neighborhoods,
    r: int,
    rng: np.random.Generator,
    order: Sequence[int],
) -> np.ndarray:
    labs = labels.tolist()
    ratio = ratios.tolist()
    uniforms = rng.random(len(order)).tolist()
    # labels stay below r before the sweep; fresh labels take r, r + 1, ...
    counts_by_label = np.bincount(labels, minlength=r + len(order))
    n_total = int(np.count_nonzero(counts_by_label))
    sizes = counts_by_label.tolist()
    fresh = r
    exp = math.exp
    for step, j in enumerate(order):
        cur = labs[j]
        sizes[cur] -= 1
        if not sizes[cur]:
            n_total -= 1
        counts: Dict[int, int] = {}
        totals: Dict[int, float] = {}
        for k, p in hood.nbrs[j]:
            lab = labs[k]
            if lab in counts:
                counts[lab] += 1
                totals[lab] += ratio[p]
            else:
                counts[lab] = 1
                totals[lab] = ratio[p]
        # joinable clusters are those with every member a candidate neighbor of j
        choices = [lab for lab, count in counts.items() if count == sizes[lab]]
        pick = None
        if choices:
            join_prior = math.log(r - n_total)
            weights = [join_prior + totals[lab] for lab in choices]
            top = max(0.0, max(weights))
            running = exp(-top)
            cumulative = [running]
            for w in weights:
                running += exp(w - top)
                cumulative.append(running)
            target = uniforms[step] * running
            slot = next(i for i, c in enumerate(cumulative) if c > target)
            if slot:
                pick = choices[slot - 1]
        if pick is None:
            if sizes[cur]:
                pick = fresh
                fresh += 1
            else:
                pick = cur
            n_total += 1
        labs[j] = pick
        sizes[pick] += 1
    return canonicalize(labs)


def gibbs_update_labels(
    labels: Sequence[int],
    params: LinkageParams,
    candidates: CandidateSets,
    rng: np.random.Generator,
    random_scan: bool = False,
) -> np.ndarray:
    """One sweep reassigning each record to its singleton or a fully linked cluster."""
    hood = _Neighborhoods(candidates)
    ratios = pair_log_ratios(candidates.levels, params)
    order = rng.permutation(hood.active).tolist() if random_scan else hood.active
    return _sweep(canonicalize(labels), ratios, hood, candidates.n_records, rng, order)


@dataclass
class LinkageChain:
    draws: np.ndarray
    seed: int
    iterations: int
    burnin: int
    thin: int
    baseline: str = "partition"
    param_names: List[str] = field(default_factory=list)
    param_trace: Optional[np.ndarray] = None
    non_transitive: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.draws)

    @property
    def n_records(self) -> int:
        return self.draws.shape[1]


def _param_names(candidates: CandidateSets) -> List[str]:
    names = []
    for kind in ("m", "u"):
        for name, n in zip(candidates.fields, candidates.n_levels):
            names.extend(f"{kind}[{name},{l}]" for l in range(n))
    return names


def _flatten_params(params: LinkageParams) -> np.ndarray:
    return np.concatenate(list(params.m) + list(params.u))


def run_linkage_sampler(
    candidates: CandidateSets,
    lam: Sequence[np.ndarray],
    config: McmcConfig,
    seed: int,
    progress: Progress = None,
) -> LinkageChain:
    """Alternate parameter and label updates from the all-singleton partition."""
    rng = np.random.default_rng(seed)
    r = candidates.n_records
    labels = np.arange(r, dtype=np.int64)
    hood = _Neighborhoods(candidates)
    draws = np.empty((config.n_saved, r), dtype=np.int32)
    trace = np.empty((config.n_saved, 2 * sum(candidates.n_levels))) if config.record_params else None
    saved = 0
    for t in range(1, config.iterations + 1):
        params = gibbs_update_params(labels, candidates, lam, rng)
        if hood.active:
            ratios = pair_log_ratios(candidates.levels, params)
            order = rng.permutation(hood.active).tolist() if config.random_scan else hood.active
            labels = _sweep(labels, ratios, hood, r, rng, order)
        if config.is_saved(t):
            draws[saved] = labels
            if trace is not None:
                trace[saved] = _flatten_params(params)
            saved += 1
        if progress is not None:
            progress(t)
    logger.info("linkage sampler: %d iterations, %d draws saved", config.iterations, saved)
    return LinkageChain(
        draws=draws,
        seed=seed,
        iterations=config.iterations,
        burnin=config.burnin,
        thin=config.thin,
        param_names=_param_names(candidates) if trace is not None else [],
        param_trace=trace,
    )


@dataclass
class PartitionDistribution:
    """Exact posterior over every feasible partition of a small instance."""
    partitions: np.ndarray
    log_prior: np.ndarray
    log_marginal_likelihood: np.ndarray
    probs: np.ndarray

    def __len__(self):
        return len(self.partitions)

    def prob_of(self, labels: Sequence[int]) -> float:
        target = canonicalize(labels)
        hits = np.all(self.partitions == target[None, :], axis=1)
        return float(self.probs[hits].sum())


def _enumerate_feasible(candidates: CandidateSets, limit: int) -> List[np.ndarray]:
    adjacency: Dict[int, set] = {}
    for i, j in candidates.pairs.tolist():
        adjacency.setdefault(i, set()).add(j)
        adjacency.setdefault(j, set()).add(i)
    active = sorted(adjacency)
    base = np.arange(candidates.n_records, dtype=np.int64)
    found: List[np.ndarray] = []
    blocks: List[List[int]] = []

    def place(pos: int) -> None:
        if pos == len(active):
            labels = base.copy()
            for block in blocks:
                labels[block] = block[0]
            found.append(labels)
            if len(found) > limit:
                raise InstanceTooLargeError(f"more than {limit} feasible partitions")
            return
        rec = active[pos]
        for block in blocks:
            if all(member in adjacency[rec] for member in block):
                block.append(rec)
                place(pos + 1)
                block.pop()
        blocks.append([rec])
        place(pos + 1)
        blocks.pop()

    place(0)
    return found


def _log_m_integral(a: np.ndarray, b: np.ndarray, low: np.ndarray) -> np.ndarray:
    # int_low^1 m^a (1-m)^b dm / (1 - low), with the upper tail mass taken from the mirrored Beta
    with np.errstate(divide="ignore"):
        return betaln(a + 1, b + 1) + np.log(betainc(b + 1, a + 1, 1.0 - low)) - np.log1p(-low)


def log_marginal_likelihood(labels: np.ndarray, candidates: CandidateSets, lam: Sequence[np.ndarray]) -> float:
    """ln P(comparisons | Z) with every m_fl and u_fl integrated against its prior."""
    coref = coreference_mask(labels, candidates)
    counts_c = level_counts(candidates.levels, np.ones(len(candidates.levels), dtype=bool), candidates.n_levels)
    counts_1 = level_counts(candidates.levels, coref, candidates.n_levels)
    total = 0.0
    for f, low in enumerate(lam):
        a1, b1 = _agree_disagree(counts_1[f])
        a0, b0 = _agree_disagree(counts_c[f] - counts_1[f] + candidates.fixed_tallies[f])
        total += float(np.sum(_log_m_integral(a1, b1, np.asarray(low, dtype=np.float64))))
        total += float(np.sum(betaln(a0 + 1, b0 + 1)))
    return total


def exact_posterior_enumeration(
    candidates: CandidateSets, lam: Sequence[np.ndarray], max_partitions: int = 10_000
) -> PartitionDistribution:
    """Prior times integrated likelihood for every feasible partition, normalized."""
    partitions = _enumerate_feasible(candidates, max_partitions)
    r = candidates.n_records
    log_prior = np.array([gammaln(r - n_clusters(z) + 1) - gammaln(r + 1) for z in partitions])
    log_lik = np.array([log_marginal_likelihood(z, candidates, lam) for z in partitions])
    log_post = log_prior + log_lik
    probs = np.exp(log_post - log_post.max())
    probs /= probs.sum()
    return PartitionDistribution(np.array(partitions), log_prior, log_lik, probs)


@dataclass
class MixtureChain:
    """Pairwise match indicators over C from the mixture baseline."""
    indicators: np.ndarray
    p: np.ndarray
    seed: int
    iterations: int
    burnin: int
    thin: int

    def __len__(self):
        return len(self.indicators)

    def closures(self, candidates: CandidateSets) -> LinkageChain:
        results = [transitive_closure(candidates.pairs, m, candidates.n_records) for m in self.indicators]
        draws = np.array([res.labels for res in results], dtype=np.int32).reshape(len(results), candidates.n_records)
        return LinkageChain(
            draws=draws,
            seed=self.seed,
            iterations=self.iterations,
            burnin=self.burnin,
            thin=self.thin,
            baseline="mixture",
            non_transitive=np.array([res.non_transitive for res in results], dtype=np.int64),
        )


def mixture_rl_sampler(
    candidates: CandidateSets,
    lam: Sequence[np.ndarray],
    config: McmcConfig,
    seed: int,
    progress: Progress = None,
) -> MixtureChain:
    """Gibbs sampler treating each candidate pair's match status independently."""
    rng = np.random.default_rng(seed)
    n_pairs = len(candidates.pairs)
    match = np.zeros(n_pairs, dtype=bool)
    saved_m = np.empty((config.n_saved, n_pairs), dtype=bool)
    saved_p = np.empty(config.n_saved)
    saved = 0
    for t in range(1, config.iterations + 1):
        params = _draw_params(match, candidates, lam, rng)
        n_match = int(match.sum())
        p = rng.beta(1.0 + n_match, 1.0 + n_pairs - n_match)
        if n_pairs:
            log_odds = np.log(p) - np.log1p(-p) + pair_log_ratios(candidates.levels, params)
            match = rng.random(n_pairs) < expit(log_odds)
        if config.is_saved(t):
            saved_m[saved] = match
            saved_p[saved] = p
            saved += 1
        if progress is not None:
            progress(t)
    return MixtureChain(saved_m, saved_p, seed, config.iterations, config.burnin, config.thin)


@dataclass
class ClosureResult:
    labels: np.ndarray
    non_transitive: int


def transitive_closure(pairs: np.ndarray, indicators: np.ndarray, n_records: int) -> ClosureResult:
    """Union-find closure of the linked pairs plus the count of open triplets before closure."""
    forest = UnionFind(n_records)
    adjacency: Dict[int, set] = {}
    for (i, j), linked in zip(pairs.tolist(), np.asarray(indicators, dtype=bool).tolist()):
        if linked:
            forest.union(i, j)
            adjacency.setdefault(i, set()).add(j)
            adjacency.setdefault(j, set()).add(i)
    # a triplet with exactly two links has a unique center
    open_triplets = 0
    for center, linked in adjacency.items():
        around = sorted(linked)
        for a in range(len(around)):
            for b in range(a + 1, len(around)):
                if around[b] not in adjacency[around[a]]:
                    open_triplets += 1
    return ClosureResult(forest.labels(), open_triplets)


def write_draws(path: Union[str, Path], chain: LinkageChain) -> None:
    path = Path(path)
    header = (
        f"# seed={chain.seed} iterations={chain.iterations} burnin={chain.burnin} "
        f"thin={chain.thin} records={chain.n_records} baseline={chain.baseline}\n"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header)
        for row in chain.draws:
            f.write(" ".join(map(str, row.tolist())) + "\n")
    if chain.param_trace is not None:
        with open(path.with_suffix(".params.csv"), "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(chain.param_names) + "\n")
            for row in chain.param_trace:
                f.write(",".join(repr(float(x)) for x in row) + "\n")
    if chain.non_transitive is not None:
        with open(path.with_suffix(".closure.csv"), "w", encoding="utf-8", newline="\n") as f:
            f.write("draw,non_transitive\n")
            for t, count in enumerate(chain.non_transitive.tolist()):
                f.write(f"{t},{count}\n")


def read_draws(path: Union[str, Path]) -> LinkageChain:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise LinkageError(f"Draw file not found: {path}")
    if not lines or not lines[0].startswith("#"):
        raise LinkageError(f"{path}: missing draw-file header")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    rows = [list(map(int, line.split())) for line in lines[1:] if line.strip()]
    r = int(meta.get("records", len(rows[0]) if rows else 0))
    if any(len(row) != r for row in rows):
        raise LinkageError(f"{path}: every draw must list {r} labels")
    if not rows:
        raise LinkageError(f"{path}: no draws")
    return LinkageChain(
        draws=np.array(rows, dtype=np.int32),
        seed=int(meta.get("seed", 0)),
        iterations=int(meta.get("iterations", 0)),
        burnin=int(meta.get("burnin", 0)),
        thin=int(meta.get("thin", 1)),
        baseline=meta.get("baseline", "partition"),
    )
