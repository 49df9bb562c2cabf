"""Capture-history tables built from coreference partitions.

A pattern h over K lists is stored as an integer whose bit (1 << (K - k))
says list k captured the individual, so the K-character string form reads
list 1 leftmost and the dense index of a pattern equals its integer key.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from linkmse.core.errors import EstimationError

MAX_LISTS = 16


def pattern_string(h: int, n_lists: int) -> str:
    return format(h, f"0{n_lists}b")


def parse_pattern(text: str) -> int:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise EstimationError(f"invalid inclusion pattern '{text}'")
    return int(text, 2)


def list_bit(k: int, n_lists: int) -> int:
    """Bit of list k (1-based)."""
    return 1 << (n_lists - k)


@dataclass
class ContingencyTable:
    n_lists: int
    counts: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.n_lists <= MAX_LISTS:
            raise EstimationError(f"number of lists must be in 1..{MAX_LISTS}, got {self.n_lists}")
        cleaned = {}
        for h, n in self.counts.items():
            if not 0 < h < (1 << self.n_lists):
                raise EstimationError(f"pattern {h} is not an observable pattern over {self.n_lists} lists")
            if n < 0:
                raise EstimationError(f"negative count for pattern {pattern_string(h, self.n_lists)}")
            if n:
                cleaned[int(h)] = int(n)
        self.counts = dict(sorted(cleaned.items()))

    @property
    def n_obs(self) -> int:
        return sum(self.counts.values())

    def get(self, pattern: Union[int, str]) -> int:
        key = parse_pattern(pattern) if isinstance(pattern, str) else pattern
        return self.counts.get(key, 0)

    def dense(self) -> np.ndarray:
        """Counts for all 2^K patterns; the all-zero cell is 0."""
        out = np.zeros(1 << self.n_lists, dtype=np.int64)
        for h, n in self.counts.items():
            out[h] = n
        return out

    @classmethod
    def from_dense(cls, counts: Sequence[int]) -> "ContingencyTable":
        counts = np.asarray(counts, dtype=np.int64)
        n_lists = int(np.log2(len(counts)))
        if 1 << n_lists != len(counts):
            raise EstimationError(f"dense table length {len(counts)} is not a power of two")
        return cls(n_lists, {h: int(n) for h, n in enumerate(counts) if h and n})

    def __add__(self, other: "ContingencyTable") -> "ContingencyTable":
        if other.n_lists != self.n_lists:
            raise EstimationError("cannot add tables over different numbers of lists")
        merged = dict(self.counts)
        for h, n in other.counts.items():
            merged[h] = merged.get(h, 0) + n
        return ContingencyTable(self.n_lists, merged)

    def __eq__(self, other):
        return isinstance(other, ContingencyTable) and other.n_lists == self.n_lists and other.counts == self.counts

    def __repr__(self):
        cells = ", ".join(f"{pattern_string(h, self.n_lists)}={n}" for h, n in self.counts.items())
        return f"ContingencyTable(K={self.n_lists}: {cells})"


def capture_histories(
    labels: Sequence[int], membership: Sequence[int], n_lists: Optional[int] = None
) -> ContingencyTable:
    """Cross-classify each cluster of `labels` by the lists its records come from.

    `membership` gives the 1-based list of every record.
    """
    labels = np.asarray(labels, dtype=np.int64)
    membership = np.asarray(membership, dtype=np.int64)
    if labels.shape != membership.shape:
        raise EstimationError("labels and membership must cover the same records")
    n_lists = int(membership.max()) if n_lists is None and len(membership) else n_lists
    if n_lists is None or n_lists < 2:
        raise EstimationError("capture histories need at least two lists")
    if len(membership) and (membership.min() < 1 or membership.max() > n_lists):
        raise EstimationError(f"list indices must lie in 1..{n_lists}")
    clusters, inverse = np.unique(labels, return_inverse=True)
    patterns = np.zeros(len(clusters), dtype=np.int64)
    np.bitwise_or.at(patterns, inverse.ravel(), np.left_shift(1, n_lists - membership))
    observed = np.bincount(patterns, minlength=1 << n_lists)
    return ContingencyTable(n_lists, {h: int(n) for h, n in enumerate(observed) if h and n})


def marginalize(table: ContingencyTable, subset: Iterable[int]) -> ContingencyTable:
    """Sum out the lists outside `subset` (1-based); patterns empty on the subset are dropped."""
    keep: List[int] = sorted(set(subset))
    if not keep:
        raise EstimationError("empty list subset")
    if keep[0] < 1 or keep[-1] > table.n_lists:
        raise EstimationError(f"list subset {keep} outside 1..{table.n_lists}")
    width = len(keep)
    out: Dict[int, int] = {}
    for h, n in table.counts.items():
        projected = 0
        for pos, k in enumerate(keep, start=1):
            if h & list_bit(k, table.n_lists):
                projected |= list_bit(pos, width)
        if projected:
            out[projected] = out.get(projected, 0) + n
    return ContingencyTable(width, out)


def write_table(path: Union[str, Path], table: ContingencyTable, include_zero: bool = False, zero_count: int = 0) -> None:
    """CSV with `pattern` and `count`; `include_zero` adds the all-zero cell (ground-truth tables)."""
    rows = []
    if include_zero:
        rows.append((pattern_string(0, table.n_lists), int(zero_count)))
    rows.extend((pattern_string(h, table.n_lists), n) for h, n in sorted(table.counts.items()))
    pd.DataFrame(rows, columns=["pattern", "count"]).to_csv(path, index=False, lineterminator="\n")


def read_table(path: Union[str, Path]) -> ContingencyTable:
    """Inverse of `write_table`; an all-zero row, if present, is ignored."""
    try:
        frame = pd.read_csv(path, dtype={"pattern": str, "count": np.int64})
    except FileNotFoundError:
        raise EstimationError(f"Table file not found: {path}")
    except ValueError as e:
        raise EstimationError(f"Malformed table file {path}: {e}")
    if list(frame.columns) != ["pattern", "count"]:
        raise EstimationError(f"{path}: expected columns pattern,count")
    if frame.empty:
        raise EstimationError(f"{path}: empty table")
    widths = {len(p) for p in frame["pattern"]}
    if len(widths) != 1:
        raise EstimationError(f"{path}: patterns of differing length")
    n_lists = widths.pop()
    counts: Dict[int, int] = {}
    for text, n in zip(frame["pattern"], frame["count"]):
        h = parse_pattern(text)
        if h == 0:
            continue
        if h in counts:
            raise EstimationError(f"{path}: duplicate pattern {text}")
        counts[h] = int(n)
    return ContingencyTable(n_lists, counts)
