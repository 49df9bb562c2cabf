"""Population size under decomposable graphical models with hyper-Dirichlet priors.

For a table n* completed by the unobserved cell n_0 = N - n_obs,

    P(n | N, m) = N! / prod_h n_h! * psi_m(alpha + n*) / psi_m(alpha)

where ln psi_m sums lnGamma over clique marginals, subtracts Q lnGamma of the
grand total (Q connected components) and subtracts lnGamma over nonempty
separator marginals.
"""

import functools
import itertools
import re
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from linkmse.analysis.histories import ContingencyTable, list_bit
from linkmse.analysis.posterior import ModelLayer, SizePosterior, SizePrior
from linkmse.analysis.unionfind import UnionFind
from linkmse.core.errors import EstimationError
from linkmse.core.log import get_logger

logger = get_logger(__name__)

_GRID_CHUNK = 65536
_CLIQUE = re.compile(r"\[([0-9,\s]+)\]")

MODELS_K3 = (
    "[1][2][3]",
    "[1,2][3]",
    "[1,3][2]",
    "[1][2,3]",
    "[1,2][1,3]",
    "[1,2][2,3]",
    "[1,3][2,3]",
)


@dataclass(frozen=True)
class DecomposableModel:
    n_lists: int
    cliques: Tuple[FrozenSet[int], ...]
    separators: Tuple[FrozenSet[int], ...]
    n_components: int

    @property
    def name(self) -> str:
        return "".join("[" + ",".join(map(str, sorted(c))) + "]" for c in self.cliques)

    def __str__(self):
        return self.name


def _perfect_order(cliques: List[FrozenSet[int]]) -> Optional[List[FrozenSet[int]]]:
    for order in itertools.permutations(cliques):
        seen: FrozenSet[int] = frozenset()
        ok = True
        for pos, clique in enumerate(order):
            sep = clique & seen
            if pos and sep and not any(sep <= earlier for earlier in order[:pos]):
                ok = False
                break
            seen |= clique
        if ok:
            return list(order)
    return None


def parse_model(name: str, n_lists: int) -> DecomposableModel:
    """Build a model from bracket notation such as `[1,2][2,3]`, checking it is decomposable."""
    text = name.replace(" ", "")
    blocks = _CLIQUE.findall(text)
    if not blocks or "".join(f"[{b}]" for b in blocks) != text:
        raise EstimationError(f"cannot parse model name '{name}'")
    cliques = []
    for block in blocks:
        nodes = frozenset(int(x) for x in block.split(",") if x)
        if not nodes:
            raise EstimationError(f"empty clique in '{name}'")
        cliques.append(nodes)
    nodes = frozenset().union(*cliques)
    if nodes != frozenset(range(1, n_lists + 1)):
        raise EstimationError(f"model '{name}' must cover lists 1..{n_lists} exactly")
    if len(set(cliques)) != len(cliques) or any(a < b for a in cliques for b in cliques):
        raise EstimationError(f"model '{name}' lists non-maximal or repeated cliques")
    order = _perfect_order(cliques)
    if order is None:
        raise EstimationError(f"model '{name}' is not decomposable (its graph is not chordal)")
    separators = []
    seen: FrozenSet[int] = frozenset()
    for clique in order:
        sep = clique & seen
        if sep:
            separators.append(sep)
        seen |= clique
    forest = UnionFind(n_lists + 1)
    for clique in cliques:
        first = min(clique)
        for node in clique:
            forest.union(first, node)
    n_components = forest.n_clusters - 1
    return DecomposableModel(n_lists, tuple(cliques), tuple(separators), n_components)


def enumerate_decomposable(n_lists: int) -> List[DecomposableModel]:
    """The non-saturated decomposable models over two or three lists."""
    if n_lists == 2:
        return [parse_model("[1][2]", 2)]
    if n_lists == 3:
        return [parse_model(name, 3) for name in MODELS_K3]
    raise EstimationError(f"model enumeration supports 2 or 3 lists, got {n_lists}")


def select_models(choice: str, n_lists: int) -> List[DecomposableModel]:
    """`bma` for every enumerated model, otherwise one model by name."""
    if choice == "bma":
        return enumerate_decomposable(n_lists)
    return [parse_model(choice, n_lists)]


def prior_counts(n_lists: int, alpha: float = 1.0) -> np.ndarray:
    if alpha <= 0:
        raise EstimationError("prior counts must be positive")
    return np.full(1 << n_lists, float(alpha))


@functools.lru_cache(maxsize=None)
def _projection(nodes: FrozenSet[int], n_lists: int) -> np.ndarray:
    """0/1 matrix mapping all 2^K cells onto the cells of the margin over `nodes`."""
    keep = sorted(nodes)
    width = len(keep)
    out = np.zeros((1 << n_lists, 1 << width))
    for h in range(1 << n_lists):
        proj = 0
        for pos, k in enumerate(keep, start=1):
            if h & list_bit(k, n_lists):
                proj |= list_bit(pos, width)
        out[h, proj] = 1.0
    return out


def log_psi(model: DecomposableModel, counts: np.ndarray) -> np.ndarray:
    """ln psi over the last axis of `counts` (2^K cells, all positive)."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape[-1] != 1 << model.n_lists:
        raise EstimationError(f"expected {1 << model.n_lists} cells, got {counts.shape[-1]}")
    out = -model.n_components * gammaln(counts.sum(axis=-1))
    for clique in model.cliques:
        out = out + gammaln(counts @ _projection(clique, model.n_lists)).sum(axis=-1)
    for sep in model.separators:
        out = out - gammaln(counts @ _projection(sep, model.n_lists)).sum(axis=-1)
    return out


def _check_alpha(alpha: Optional[np.ndarray], n_lists: int) -> np.ndarray:
    alpha = prior_counts(n_lists) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (1 << n_lists,) or np.any(alpha <= 0):
        raise EstimationError(f"prior counts must be {1 << n_lists} positive values")
    return alpha


def _log_lik_grid(
    table: ContingencyTable, grid: np.ndarray, model: DecomposableModel, alpha: np.ndarray
) -> np.ndarray:
    observed = table.dense().astype(np.float64)
    log_base = -gammaln(observed[1:] + 1).sum() - log_psi(model, alpha)
    out = np.empty(len(grid))
    for start in range(0, len(grid), _GRID_CHUNK):
        sizes = grid[start:start + _GRID_CHUNK].astype(np.float64)
        cells = np.tile(observed, (len(sizes), 1))
        cells[:, 0] = sizes - table.n_obs
        out[start:start + len(sizes)] = (
            gammaln(sizes + 1) - gammaln(cells[:, 0] + 1) + log_psi(model, alpha + cells) + log_base
        )
    return out


def log_prob_n_given_Nm(
    table: ContingencyTable, N: int, model: DecomposableModel, alpha: Optional[np.ndarray] = None
) -> float:
    """ln P(n | N, m) with the model parameters integrated against the hyper-Dirichlet prior."""
    if N < table.n_obs:
        raise EstimationError(f"N={N} is below the observed count {table.n_obs}")
    if model.n_lists != table.n_lists:
        raise EstimationError("model and table cover different numbers of lists")
    alpha = _check_alpha(alpha, table.n_lists)
    return float(_log_lik_grid(table, np.array([N]), model, alpha)[0])


def posterior_N_given_m(
    table: ContingencyTable,
    model: DecomposableModel,
    alpha: Optional[np.ndarray] = None,
    size_prior: Optional[SizePrior] = None,
) -> SizePosterior:
    size_prior = size_prior or SizePrior()
    if model.n_lists != table.n_lists:
        raise EstimationError("model and table cover different numbers of lists")
    alpha = _check_alpha(alpha, table.n_lists)
    if table.n_obs == 0 and size_prior.kind == "reciprocal":
        raise EstimationError("empty table: a reciprocal size prior needs at least one observed individual")
    grid = size_prior.grid(table.n_obs)
    log_prior = size_prior.log_weights(grid)
    log_prior = log_prior - logsumexp(log_prior)
    log_joint = _log_lik_grid(table, grid, model, alpha) + log_prior
    log_evidence = float(logsumexp(log_joint))
    if not np.isfinite(log_evidence):
        raise EstimationError(f"posterior under {model.name} has zero total mass")
    probs = np.exp(log_joint - log_evidence)
    return SizePosterior(grid, probs / probs.sum(), log_evidence=log_evidence)


def _weights(evidences: Sequence[float]) -> np.ndarray:
    # uniform p(m) over the models considered
    log_w = np.asarray(evidences, dtype=np.float64)
    return np.exp(log_w - logsumexp(log_w))


def model_posterior(
    table: ContingencyTable,
    models: Sequence[DecomposableModel],
    alpha: Optional[np.ndarray] = None,
    size_prior: Optional[SizePrior] = None,
) -> Dict[str, float]:
    if not models:
        raise EstimationError("at least one model is required")
    evidences = [posterior_N_given_m(table, m, alpha, size_prior).log_evidence for m in models]
    return {m.name: float(w) for m, w in zip(models, _weights(evidences))}


def bma_posterior(
    table: ContingencyTable,
    alpha: Optional[np.ndarray] = None,
    size_prior: Optional[SizePrior] = None,
    models: Optional[Sequence[DecomposableModel]] = None,
) -> SizePosterior:
    """Mixture of the per-model posteriors weighted by p(m | n)."""
    models = list(models) if models is not None else enumerate_decomposable(table.n_lists)
    if not models:
        raise EstimationError("at least one model is required")
    posts = [posterior_N_given_m(table, m, alpha, size_prior) for m in models]
    weights = _weights([p.log_evidence for p in posts])
    probs = np.zeros(len(posts[0].probs))
    for w, post in zip(weights, posts):
        probs += w * post.probs
    layers = [ModelLayer(m.name, float(w), p.mean, p.var) for m, w, p in zip(models, weights, posts)]
    for layer in layers:
        logger.debug("model %s: weight %.4f, mean %.1f", layer.name, layer.weight, layer.mean)
    return SizePosterior(
        posts[0].support,
        probs / probs.sum(),
        layers=layers,
        log_evidence=float(logsumexp([p.log_evidence for p in posts]) - np.log(len(posts))),
    )


def lincoln_petersen(table: ContingencyTable) -> float:
    """n_1 * n_2 / n_11 for two lists; infinite when the lists share no one."""
    if table.n_lists != 2:
        raise EstimationError("the Lincoln-Petersen estimate needs exactly two lists")
    n11 = table.get("11")
    n1 = n11 + table.get("10")
    n2 = n11 + table.get("01")
    if n11 == 0:
        return float("inf")
    return n1 * n2 / n11
