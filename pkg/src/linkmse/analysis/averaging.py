"""Linkage-averaged population-size posteriors and their variance decompositions.

Each saved partition Z^(t) yields a conditional posterior p(N | n(Z^(t))).
The averaged posterior gives every partition draw weight 1/d. Variances over
the draw index use divisor d so the total-variance identities hold exactly
on the sample.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from linkmse.analysis.compare import CandidateSets
from linkmse.analysis.histories import ContingencyTable, capture_histories, marginalize
from linkmse.analysis.linkage import exact_posterior_enumeration
from linkmse.analysis.posterior import SizePosterior
from linkmse.core.errors import EstimationError


@dataclass
class VarianceDecomposition:
    linkage: float
    residual: float
    model: float = 0.0

    @property
    def total(self) -> float:
        return self.linkage + self.model + self.residual

    def shares(self) -> Dict[str, float]:
        total = self.total
        if total <= 0:
            return {"linkage": 0.0, "model": 0.0, "residual": 1.0}
        return {
            "linkage": self.linkage / total,
            "model": self.model / total,
            "residual": self.residual / total,
        }

    @property
    def linkage_share(self) -> float:
        return self.shares()["linkage"]

    @property
    def model_share(self) -> float:
        return self.shares()["model"]

    @property
    def residual_share(self) -> float:
        return self.shares()["residual"]

    def report(self) -> Dict[str, object]:
        return {
            "terms": {"linkage": self.linkage, "model": self.model, "residual": self.residual},
            "total_variance": self.total,
            "shares_percent": {k: 100.0 * v for k, v in self.shares().items()},
            "between_draw_divisor": "d",
        }


def variance_decomposition(cond_means: Sequence[float], cond_vars: Sequence[float]) -> VarianceDecomposition:
    """Var(N) = Var_t E(N | Z^(t)) + Mean_t Var(N | Z^(t))."""
    means = np.asarray(cond_means, dtype=np.float64)
    variances = np.asarray(cond_vars, dtype=np.float64)
    if means.size == 0 or means.shape != variances.shape:
        raise EstimationError("need one conditional mean and variance per draw")
    return VarianceDecomposition(linkage=float(means.var()), residual=float(variances.mean()))


def variance_decomposition_model(
    means: np.ndarray, variances: np.ndarray, weights: np.ndarray
) -> VarianceDecomposition:
    """Three-term split over draws t (rows) and models m (columns)."""
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if means.ndim != 2 or means.shape != variances.shape or means.shape != weights.shape:
        raise EstimationError("per-model moments and weights must share a (draws, models) shape")
    if np.any(np.abs(weights.sum(axis=1) - 1.0) > 1e-9):
        raise EstimationError("model weights must sum to 1 for every draw")
    per_draw = (weights * means).sum(axis=1)
    between_models = (weights * (means - per_draw[:, None]) ** 2).sum(axis=1)
    within = (weights * variances).sum(axis=1)
    return VarianceDecomposition(
        linkage=float(per_draw.var()),
        model=float(between_models.mean()),
        residual=float(within.mean()),
    )


@dataclass
class AveragedPosterior:
    support: np.ndarray
    probs: np.ndarray
    cond_means: np.ndarray
    cond_vars: np.ndarray
    decomposition: VarianceDecomposition
    per_draw: List[SizePosterior] = field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return len(self.cond_means)

    def posterior(self) -> SizePosterior:
        return SizePosterior(self.support, self.probs)

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def var(self) -> float:
        centered = self.support - self.mean
        return float(np.dot(centered * centered, self.probs))


def _decompose(posteriors: Sequence[SizePosterior]) -> VarianceDecomposition:
    if all(p.layers for p in posteriors):
        names = [layer.name for layer in posteriors[0].layers]
        if all([layer.name for layer in p.layers] == names for p in posteriors) and len(names) > 1:
            means = np.array([[layer.mean for layer in p.layers] for p in posteriors])
            variances = np.array([[layer.var for layer in p.layers] for p in posteriors])
            weights = np.array([[layer.weight for layer in p.layers] for p in posteriors])
            return variance_decomposition_model(means, variances, weights)
    return variance_decomposition([p.mean for p in posteriors], [p.var for p in posteriors])


def average_closed_form(posteriors: Sequence[SizePosterior]) -> AveragedPosterior:
    """p_LA(N) = (1/d) sum_t p(N | n(Z^(t))) on the union of the supports."""
    if not posteriors:
        raise EstimationError("no per-draw posteriors to average")
    grid = posteriors[0].support
    for post in posteriors[1:]:
        grid = np.union1d(grid, post.support)
    pooled = np.zeros(len(grid))
    for post in posteriors:
        pooled += post.pmf_on(grid)
    pooled /= len(posteriors)
    return AveragedPosterior(
        support=grid,
        probs=pooled / pooled.sum(),
        cond_means=np.array([p.mean for p in posteriors]),
        cond_vars=np.array([p.var for p in posteriors]),
        decomposition=_decompose(posteriors),
        per_draw=list(posteriors),
    )


def average_draws(draw_sets: Sequence[Sequence[int]]) -> AveragedPosterior:
    """Pool per-partition draw sets, each set weighted 1/d whatever its length."""
    if not draw_sets:
        raise EstimationError("no per-draw samples to average")
    arrays = [np.asarray(s, dtype=np.int64) for s in draw_sets]
    if any(a.size == 0 for a in arrays):
        raise EstimationError("every partition draw needs at least one N draw")
    values = np.concatenate(arrays)
    weights = np.concatenate([np.full(a.size, 1.0 / (len(arrays) * a.size)) for a in arrays])
    support, inverse = np.unique(values, return_inverse=True)
    pooled = np.zeros(len(support))
    np.add.at(pooled, inverse.ravel(), weights)
    per_draw = [SizePosterior.from_draws(a) for a in arrays]
    return AveragedPosterior(
        support=support,
        probs=pooled / pooled.sum(),
        cond_means=np.array([a.mean() for a in arrays]),
        cond_vars=np.array([a.var() for a in arrays]),
        decomposition=variance_decomposition([a.mean() for a in arrays], [a.var() for a in arrays]),
        per_draw=per_draw,
    )


@dataclass
class JointCheck:
    support: np.ndarray
    p_la: np.ndarray
    p_joint: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.p_la - self.p_joint)))


def joint_exact_check(
    candidates: CandidateSets,
    lam: Sequence[np.ndarray],
    membership: Sequence[int],
    estimate: Callable[[ContingencyTable], SizePosterior],
    subset: Optional[Sequence[int]] = None,
    max_partitions: int = 10_000,
) -> JointCheck:
    """Averaged posterior over every feasible partition versus the joint model's N-marginal.

    `estimate` maps a capture-history table to p_C(N | n(Z)).
    """
    dist = exact_posterior_enumeration(candidates, lam, max_partitions)
    n_lists = int(np.max(membership))
    posts = []
    for labels in dist.partitions:
        table = capture_histories(labels, membership, n_lists)
        posts.append(estimate(marginalize(table, subset) if subset else table))
    grid = posts[0].support
    for post in posts[1:]:
        grid = np.union1d(grid, post.support)
    conditional = np.array([post.pmf_on(grid) for post in posts])

    p_la = dist.probs @ conditional

    with np.errstate(divide="ignore"):
        log_joint = (dist.log_prior + dist.log_marginal_likelihood)[:, None] + np.log(conditional)
    p_joint = np.exp(logsumexp(log_joint, axis=0) - logsumexp(log_joint))
    return JointCheck(grid, p_la, p_joint)
