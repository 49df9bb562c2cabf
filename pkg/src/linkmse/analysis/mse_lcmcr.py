"""Latent-class capture-recapture with a truncated stick-breaking prior.

Individuals fall in one of S classes with weights pi; within class s list k
captures independently with probability theta_sk. The sampler augments the
table with the n_0 missed individuals and works on class counts per pattern,
which is exchangeable with sampling one class per individual.
"""

from dataclasses import dataclass, field
from typing import Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, field_validator, model_validator
from scipy.special import gammaln, logsumexp
from scipy.stats import nbinom

from linkmse.analysis.histories import ContingencyTable, list_bit
from linkmse.analysis.posterior import SizePosterior, SizePrior
from linkmse.core.errors import EstimationError
from linkmse.core.log import get_logger

logger = get_logger(__name__)

TAIL_PROB = 1e-15
A_SHAPE = 0.25
A_RATE = 0.25


class LcmcrConfig(BaseModel):
    strata: int = 10
    iterations: int = 10000
    burnin: int = 1000
    thin: int = 10
    prior: Literal["reciprocal", "uniform"] = "reciprocal"
    n_max: Optional[int] = None

    @field_validator('strata')
    @classmethod
    def validate_strata(cls, v):
        if v < 1:
            raise ValueError('strata must be at least 1')
        return v

    @model_validator(mode='after')
    def validate_lengths(self):
        if self.iterations < 1 or self.burnin < 0 or self.thin < 1:
            raise ValueError('iterations must be positive, burnin non-negative, thin positive')
        if self.iterations - self.burnin < self.thin:
            raise ValueError('no draws would be saved with these iterations/burnin/thin')
        if self.n_max is not None and self.n_max < 1:
            raise ValueError('n_max must be positive')
        return self

    @property
    def n_saved(self) -> int:
        return (self.iterations - self.burnin) // self.thin

    def is_saved(self, iteration: int) -> bool:
        return iteration > self.burnin and (iteration - self.burnin) % self.thin == 0


@dataclass
class LcmcrChain:
    n_draws: np.ndarray
    a_sb: np.ndarray
    pi: np.ndarray
    n_obs: int
    cap: Optional[int] = None
    cap_hits: int = 0
    notes: Dict[str, object] = field(default_factory=dict)

    def posterior(self) -> SizePosterior:
        return SizePosterior.from_draws(self.n_draws, notes=dict(self.notes))


def _bits(n_lists: int) -> np.ndarray:
    """(2^K, K) capture indicators of every pattern."""
    patterns = np.arange(1 << n_lists)[:, None]
    masks = np.array([list_bit(k, n_lists) for k in range(1, n_lists + 1)])[None, :]
    return ((patterns & masks) > 0).astype(np.float64)


def _log_gamma_draws(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """log of Gamma(shape, 1) draws; shapes below 1 go through Gamma(shape + 1) * U^(1/shape)."""
    shape = np.asarray(shape, dtype=np.float64)
    small = shape < 1.0
    out = np.log(rng.gamma(np.where(small, shape + 1.0, shape)))
    uniform = rng.random(shape.shape)
    return np.where(small, out + np.log(uniform) / np.where(small, shape, 1.0), out)


def _log_sticks(class_totals: np.ndarray, a_sb: float, rng: np.random.Generator):
    """Draw V_t ~ Beta(1 + n_t, a + n_{>t}) for t < S; return log pi and sum log(1 - V_t)."""
    n_classes = len(class_totals)
    if n_classes == 1:
        return np.zeros(1), 0.0
    beyond = np.cumsum(class_totals[::-1])[::-1][1:]
    log_g1 = _log_gamma_draws(1.0 + class_totals[:-1], rng)
    log_g2 = _log_gamma_draws(a_sb + beyond, rng)
    log_total = np.logaddexp(log_g1, log_g2)
    log_v = log_g1 - log_total
    log_rest = log_g2 - log_total
    log_pi = np.empty(n_classes)
    log_pi[:-1] = log_v + np.concatenate([[0.0], np.cumsum(log_rest)[:-1]])
    log_pi[-1] = log_rest.sum()
    return log_pi, float(log_rest.sum())


def _size_cap(table: ContingencyTable) -> int:
    """10 n_obs max(1, 1 / smallest per-list capture rate)."""
    dense = table.dense()
    bits = _bits(table.n_lists)
    per_list = dense @ bits
    rates = per_list / table.n_obs
    low = rates.min()
    scale = 1.0 / low if low > 0 else float(table.n_obs)
    return int(np.ceil(10 * table.n_obs * max(1.0, scale)))


def _sample_missed(
    n_obs: int,
    log_theta0: float,
    size_prior: SizePrior,
    limit: int,
    rng: np.random.Generator,
) -> tuple:
    """Draw n_0 by inverse CDF on a grid cut at the negative-binomial tail or `limit`."""
    size = n_obs if size_prior.kind == "reciprocal" else n_obs + 1
    capture = -np.expm1(log_theta0)
    tail = nbinom.ppf(1.0 - TAIL_PROB, size, capture) if capture > 0 else np.inf
    hit = not np.isfinite(tail) or tail > limit
    upper = int(limit if hit else tail)
    n0 = np.arange(upper + 1, dtype=np.float64)
    sizes = n0 + n_obs
    log_w = size_prior.log_weights(sizes) + gammaln(sizes + 1) - gammaln(n0 + 1) + n0 * log_theta0
    weights = np.exp(log_w - log_w.max())
    cdf = np.cumsum(weights)
    pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(pick, upper), hit


def sample_lcmcr(
    table: ContingencyTable,
    config: LcmcrConfig,
    seed: int,
    fixed_theta: Optional[np.ndarray] = None,
) -> LcmcrChain:
    """Gibbs sampler with data augmentation for the missed individuals.

    An empty table switches the likelihood off (n_0 stays 0), which leaves
    the sampler drawing from the prior. `fixed_theta` (S x K) pins the
    capture probabilities.
    """
    n_lists, n_classes = table.n_lists, config.strata
    if n_lists < 2:
        raise EstimationError("latent-class estimation needs at least two lists")
    rng = np.random.default_rng(seed)
    bits = _bits(n_lists)
    counts_obs = table.dense()
    n_obs = table.n_obs
    size_prior = SizePrior(kind=config.prior, n_max=max(config.n_max or 1, 1))

    cap = None
    limit = 0
    if n_obs:
        if config.n_max is not None:
            if config.n_max < n_obs:
                raise EstimationError(f"n_max {config.n_max} is below the observed count {n_obs}")
            limit = config.n_max - n_obs
        else:
            cap = _size_cap(table)
            limit = cap - n_obs

    if fixed_theta is not None:
        theta = np.asarray(fixed_theta, dtype=np.float64)
        if theta.shape != (n_classes, n_lists) or np.any(theta <= 0) or np.any(theta >= 1):
            raise EstimationError("fixed capture probabilities must be an S x K array inside (0, 1)")
    else:
        theta = rng.beta(1.0, 1.0, size=(n_classes, n_lists))
    steps = np.arange(1, n_classes + 1)
    v = 1.0 / (n_classes - steps + 1.0)
    log_pi = np.log(v) + np.concatenate([[0.0], np.cumsum(np.log1p(-v[:-1]))])
    a_sb = 1.0

    saved_n = np.empty(config.n_saved, dtype=np.int64)
    saved_a = np.empty(config.n_saved)
    saved_pi = np.empty((config.n_saved, n_classes))
    occupancy_last = 0.0
    cap_hits = 0
    saved = 0
    counts = counts_obs.copy()
    for t in range(1, config.iterations + 1):
        log_cell = bits @ np.log(theta).T + (1.0 - bits) @ np.log1p(-theta).T
        if n_obs:
            log_theta0 = float(logsumexp(log_pi + log_cell[0]))
            n0, hit = _sample_missed(n_obs, log_theta0, size_prior, limit, rng)
            cap_hits += int(hit and cap is not None)
        else:
            n0 = 0
        counts[0] = n0

        log_class = log_pi[None, :] + log_cell
        probs = np.exp(log_class - log_class.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        by_class = rng.multinomial(counts, probs)
        class_totals = by_class.sum(axis=0)

        if fixed_theta is None:
            captured = bits.T @ by_class
            missed = class_totals[None, :] - captured
            theta = rng.beta(1.0 + captured.T, 1.0 + missed.T)
            theta = np.clip(theta, 1e-12, 1.0 - 1e-12)

        log_pi, log_rest = _log_sticks(class_totals, a_sb, rng)
        if n_classes > 1:
            a_sb = rng.gamma(A_SHAPE + n_classes - 1, 1.0 / (A_RATE - log_rest))

        if config.is_saved(t):
            saved_n[saved] = n_obs + n0
            saved_a[saved] = a_sb
            saved_pi[saved] = np.exp(log_pi)
            total = class_totals.sum()
            occupancy_last += class_totals[-1] / total if total else 0.0
            saved += 1

    notes: Dict[str, object] = {"strata": n_classes, "size_prior": config.prior}
    if n_obs and n_classes > 1 and occupancy_last / saved > 0.01:
        logger.warning(
            "last latent class holds %.1f%% of individuals on average; consider more strata",
            100 * occupancy_last / saved,
        )
        notes["last_class_occupancy"] = float(occupancy_last / saved)
    if cap is not None:
        notes["cap"] = cap
        notes["cap_hits"] = cap_hits
        if cap_hits:
            logger.warning("size cap %d bounded the n_0 grid in %d of %d iterations", cap, cap_hits, config.iterations)
    logger.info("latent-class sampler: %d iterations, %d draws saved", config.iterations, saved)
    return LcmcrChain(saved_n, saved_a, saved_pi, n_obs, cap, cap_hits, notes)


def run_lcmcr(
    table: ContingencyTable, config: LcmcrConfig, seed: int, fixed_theta: Optional[np.ndarray] = None
) -> SizePosterior:
    """Draw set of N = n_obs + n_0 from the latent-class sampler."""
    return sample_lcmcr(table, config, seed, fixed_theta).posterior()
