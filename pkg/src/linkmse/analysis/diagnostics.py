"""Convergence diagnostics for scalar chains and summaries of partition draws."""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from linkmse.analysis.compare import CandidateSets
from linkmse.analysis.linkage import LinkageChain, coreference_mask
from linkmse.core.errors import DegenerateChainError, DiagnosticsError

MIN_GEWEKE_LENGTH = 100


@dataclass
class ScalarChain:
    name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise DiagnosticsError(f"chain {self.name}: need a 1-d chain of length >= 2")

    def __len__(self):
        return len(self.values)


@dataclass
class PartitionSummaries:
    """Per-draw scalars plus co-clustering indicator chains for the candidate pairs."""
    n_clusters: np.ndarray
    size_1: np.ndarray
    size_2: np.ndarray
    size_3_plus: np.ndarray
    pairs: Optional[np.ndarray] = None
    coclustered: Optional[np.ndarray] = None

    def scalar_chains(self) -> List[ScalarChain]:
        return [
            ScalarChain("n_clusters", self.n_clusters),
            ScalarChain("size_1", self.size_1),
            ScalarChain("size_2", self.size_2),
            ScalarChain("size_3_plus", self.size_3_plus),
        ]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "draw": np.arange(len(self.n_clusters)),
            "n_clusters": self.n_clusters,
            "size_1": self.size_1,
            "size_2": self.size_2,
            "size_3_plus": self.size_3_plus,
        })

    def pair_probabilities(self) -> pd.DataFrame:
        """Posterior frequency with which each candidate pair is co-clustered."""
        if self.pairs is None:
            return pd.DataFrame(columns=["i", "j", "prob"])
        return pd.DataFrame({
            "i": self.pairs[:, 0],
            "j": self.pairs[:, 1],
            "prob": self.coclustered.mean(axis=0) if len(self.coclustered) else np.zeros(len(self.pairs)),
        })

    def observed_count(self, level: float = 0.95) -> Dict[str, float]:
        """Posterior mean and central interval of the number of distinct individuals."""
        tail = 100 * (1 - level) / 2
        low, high = np.percentile(self.n_clusters, [tail, 100 - tail], method="inverted_cdf")
        return {"mean": float(self.n_clusters.mean()), "level": level, "low": int(low), "high": int(high)}


def partition_summaries(chain: LinkageChain, candidates: Optional[CandidateSets] = None) -> PartitionSummaries:
    if len(chain) == 0:
        raise DiagnosticsError("empty chain")
    n_draws = len(chain)
    n_clusters = np.empty(n_draws, dtype=np.int64)
    hist = np.zeros((n_draws, 3), dtype=np.int64)
    for t, labels in enumerate(chain.draws):
        _, sizes = np.unique(labels, return_counts=True)
        n_clusters[t] = len(sizes)
        hist[t] = np.bincount(np.minimum(sizes, 3), minlength=4)[1:]
    pairs = coclustered = None
    if candidates is not None:
        if candidates.n_records != chain.n_records:
            raise DiagnosticsError("candidate sets and draws cover different record counts")
        pairs = candidates.pairs
        coclustered = np.array([coreference_mask(labels, candidates) for labels in chain.draws], dtype=np.int8)
        coclustered = coclustered.reshape(n_draws, len(pairs))
    return PartitionSummaries(n_clusters, hist[:, 0], hist[:, 1], hist[:, 2], pairs, coclustered)


def _batch_means_variance(values: np.ndarray) -> float:
    """Spectral density at zero from non-overlapping batch means, floor(sqrt(n)) batches."""
    n_batches = max(int(np.sqrt(len(values))), 2)
    batch_size = len(values) // n_batches
    means = values[:n_batches * batch_size].reshape(n_batches, batch_size).mean(axis=1)
    return float(batch_size * means.var(ddof=1))


def geweke_z(values, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """Difference of early and late window means over their batch-means standard error."""
    values = np.asarray(values, dtype=np.float64)
    if not 0 < frac_a < 1 or not 0 < frac_b < 1 or frac_a + frac_b > 1:
        raise DiagnosticsError("window fractions must be positive and sum to at most 1")
    if len(values) < MIN_GEWEKE_LENGTH:
        raise DiagnosticsError(f"Geweke diagnostic needs at least {MIN_GEWEKE_LENGTH} values")
    first = values[:int(frac_a * len(values))]
    last = values[len(values) - int(frac_b * len(values)):]
    if np.ptp(first) == 0 or np.ptp(last) == 0:
        raise DegenerateChainError("degenerate chain")
    s_a, s_b = _batch_means_variance(first), _batch_means_variance(last)
    if s_a <= 0 or s_b <= 0:
        raise DegenerateChainError("degenerate chain")
    return float((first.mean() - last.mean()) / np.sqrt(s_a / len(first) + s_b / len(last)))


def acf(values, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..max_lag."""
    values = np.asarray(values, dtype=np.float64)
    if max_lag < 1 or len(values) <= max_lag:
        raise DiagnosticsError("chain must be longer than max_lag >= 1")
    centered = values - values.mean()
    gamma0 = np.dot(centered, centered) / len(values)
    if gamma0 == 0:
        raise DegenerateChainError("degenerate chain")
    n = len(values)
    return np.array([np.dot(centered[:n - k], centered[k:]) / n / gamma0 for k in range(1, max_lag + 1)])


def effective_sample_size(values, max_lag: Optional[int] = None) -> float:
    """n / (1 + 2 sum rho_k), summing adjacent-lag pairs while their sum stays positive."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    max_lag = max_lag or min(n - 1, 1000)
    rho = np.concatenate([[1.0], acf(values, max_lag)])
    total = 0.0
    for k in range(0, len(rho) - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        total += pair
    return float(n / max(2.0 * total - 1.0, 1e-12))


def batch_means_se(values) -> float:
    """Monte Carlo standard error of the chain mean."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 4:
        raise DiagnosticsError("need at least four values for batch means")
    return float(np.sqrt(_batch_means_variance(values) / len(values)))


def geweke_table(chains: List[ScalarChain], frac_a: float = 0.1, frac_b: float = 0.5) -> pd.DataFrame:
    """Geweke Z per chain; degenerate or short chains get NaN with the reason."""
    rows = []
    for chain in chains:
        try:
            rows.append((chain.name, geweke_z(chain.values, frac_a, frac_b), ""))
        except DiagnosticsError as e:
            rows.append((chain.name, np.nan, str(e)))
    return pd.DataFrame(rows, columns=["chain", "z", "note"])


def acf_table(chains: List[ScalarChain], max_lag: int) -> pd.DataFrame:
    rows = []
    for chain in chains:
        lag = min(max_lag, len(chain) - 1)
        try:
            values = acf(chain.values, lag)
        except DiagnosticsError:
            continue
        rows.extend((chain.name, k, float(v)) for k, v in enumerate(values, start=1))
    return pd.DataFrame(rows, columns=["chain", "lag", "acf"])
