"""Population-size posteriors, their priors and their file formats."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator

from linkmse.core.errors import EstimationError


class SizePrior(BaseModel):
    """p(N) proportional to 1/N or flat, truncated at `n_max`."""
    kind: Literal["reciprocal", "uniform"] = "reciprocal"
    n_max: int = 30000

    @field_validator('n_max')
    @classmethod
    def validate_n_max(cls, v):
        if v < 1:
            raise ValueError('n_max must be positive')
        return v

    def log_weights(self, grid: np.ndarray) -> np.ndarray:
        """Unnormalized log p(N); a reciprocal prior puts no mass on N = 0."""
        grid = np.asarray(grid, dtype=np.float64)
        if self.kind == "uniform":
            return np.zeros_like(grid)
        with np.errstate(divide="ignore"):
            return -np.log(grid)

    def grid(self, n_obs: int) -> np.ndarray:
        if self.n_max < n_obs:
            raise EstimationError(f"n_max {self.n_max} is below the observed count {n_obs}")
        return np.arange(n_obs, self.n_max + 1, dtype=np.int64)


@dataclass
class ModelLayer:
    """One model's contribution to an averaged posterior."""
    name: str
    weight: float
    mean: float
    var: float


@dataclass
class SizePosterior:
    """Posterior pmf of N on an integer support, or the draws it was tabulated from."""
    support: np.ndarray
    probs: np.ndarray
    draws: Optional[np.ndarray] = None
    layers: List[ModelLayer] = field(default_factory=list)
    log_evidence: Optional[float] = None
    notes: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.support.shape != self.probs.shape or self.support.size == 0:
            raise EstimationError("posterior support and probabilities must be nonempty and aligned")
        if np.any(np.diff(self.support) <= 0):
            raise EstimationError("posterior support must be strictly increasing")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-8:
            raise EstimationError("posterior probabilities must be nonnegative and sum to 1")

    @classmethod
    def from_draws(cls, draws: Sequence[int], **kwargs) -> "SizePosterior":
        draws = np.asarray(draws, dtype=np.int64)
        if draws.size == 0:
            raise EstimationError("no draws to tabulate")
        support, counts = np.unique(draws, return_counts=True)
        return cls(support, counts / draws.size, draws=draws, **kwargs)

    @classmethod
    def point_mass(cls, n: int) -> "SizePosterior":
        return cls(np.array([n]), np.array([1.0]))

    @property
    def mean(self) -> float:
        if self.draws is not None:
            return float(self.draws.mean())
        return float(np.dot(self.support, self.probs))

    @property
    def var(self) -> float:
        if self.draws is not None:
            return float(self.draws.var())
        centered = self.support - self.mean
        return float(np.dot(centered * centered, self.probs))

    @property
    def mode(self) -> int:
        return int(self.support[np.argmax(self.probs)])

    def quantile(self, q: float) -> int:
        """Smallest N whose cumulative probability reaches q."""
        cdf = np.cumsum(self.probs)
        idx = int(np.searchsorted(cdf, q - 1e-12, side="left"))
        return int(self.support[min(idx, len(self.support) - 1)])

    def interval(self, level: float = 0.99) -> Tuple[int, int]:
        tail = (1.0 - level) / 2.0
        return self.quantile(tail), self.quantile(1.0 - tail)

    def pmf_on(self, grid: np.ndarray) -> np.ndarray:
        """Probabilities re-gridded onto `grid`, which must contain the support."""
        out = np.zeros(len(grid))
        pos = np.searchsorted(grid, self.support)
        if np.any(pos >= len(grid)) or np.any(grid[np.minimum(pos, len(grid) - 1)] != self.support):
            raise EstimationError("target grid does not cover the posterior support")
        out[pos] = self.probs
        return out

    def summary(self, level: float = 0.99) -> Dict[str, object]:
        low, high = self.interval(level)
        out: Dict[str, object] = {
            "mean": self.mean,
            "sd": float(np.sqrt(self.var)),
            "mode": self.mode,
            "interval_level": level,
            "interval": [low, high],
        }
        if self.layers:
            out["models"] = {layer.name: {"weight": layer.weight, "mean": layer.mean, "var": layer.var}
                             for layer in self.layers}
        if self.log_evidence is not None:
            out["log_evidence"] = self.log_evidence
        out.update(self.notes)
        return out


def write_posterior(path: Union[str, Path], posterior: SizePosterior) -> None:
    """`N,prob` CSV for a pmf; draw sets are written as `draw,N`."""
    if posterior.draws is not None:
        frame = pd.DataFrame({"draw": np.arange(len(posterior.draws)), "N": posterior.draws})
    else:
        frame = pd.DataFrame({"N": posterior.support, "prob": posterior.probs})
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def read_posterior(path: Union[str, Path]) -> SizePosterior:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise EstimationError(f"Posterior file not found: {path}")
    if list(frame.columns) == ["N", "prob"]:
        probs = frame["prob"].to_numpy(dtype=np.float64)
        return SizePosterior(frame["N"].to_numpy(), probs / probs.sum())
    if list(frame.columns) == ["draw", "N"]:
        return SizePosterior.from_draws(frame["N"].to_numpy())
    raise EstimationError(f"{path}: expected columns N,prob or draw,N")


def write_summary(path: Union[str, Path], summary: Dict[str, object]) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
