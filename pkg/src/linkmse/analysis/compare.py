"""Ordinal comparison vectors for record pairs and candidate-pair filtering.

Levels are stored as int8 with -1 marking a missing comparison. Only pairs
(i, j) with i < j are materialized.
"""

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator, model_validator
from rapidfuzz.distance import Levenshtein
from rapidfuzz.process import cdist

from linkmse.analysis.ingest import FieldKind, FieldSchema, RecordEntry
from linkmse.analysis.unionfind import UnionFind
from linkmse.core.config import parse_bool, parse_floats, read_sections
from linkmse.core.errors import ComparisonError, ConfigError
from linkmse.core.log import get_logger

logger = get_logger(__name__)

MISSING = -1
NA = "NA"


class MeasureKind(str, Enum):
    EDIT = "normalized-edit-distance"
    ABSDIFF = "absolute-difference"
    BINARY = "binary"


class FieldComparison(BaseModel):
    """One field's measure and the right-closed upper bounds of levels 0..L_f-1.

    Level L_f covers everything above the last breakpoint.
    """
    field: str
    measure: MeasureKind
    breakpoints: List[float]

    @model_validator(mode='after')
    def validate_breakpoints(self):
        bps = self.breakpoints
        if not bps:
            raise ValueError(f'{self.field}: at least one breakpoint is required')
        if bps[0] < 0:
            raise ValueError(f'{self.field}: level 0 must contain the measure minimum 0')
        if any(b <= a for a, b in zip(bps, bps[1:])):
            raise ValueError(f'{self.field}: breakpoints must be strictly increasing')
        if self.measure == MeasureKind.EDIT and bps[-1] >= 1:
            raise ValueError(f'{self.field}: edit-distance breakpoints must stay below 1')
        if self.measure == MeasureKind.BINARY and bps != [0.0]:
            raise ValueError(f'{self.field}: binary comparisons take the single breakpoint 0')
        return self

    @property
    def n_levels(self) -> int:
        """L_f, the number of non-zero levels."""
        return len(self.breakpoints)


class FixRule(BaseModel):
    """Fix a pair as non-coreferent when `field` is observed at `level` or above."""
    field: str
    level: int

    @field_validator('level')
    @classmethod
    def validate_level(cls, v):
        if v < 1:
            raise ValueError('fix-rule level must be at least 1')
        return v


class SimilarityConfig(BaseModel):
    fields: List[FieldComparison]
    permute_tokens: bool = True
    max_permutation_tokens: int = 3
    blocking: Optional[str] = None

    @field_validator('fields')
    @classmethod
    def validate_fields(cls, v):
        if not v:
            raise ValueError('at least one compared field is required')
        names = [f.field for f in v]
        if len(set(names)) != len(names):
            raise ValueError(f'duplicate compared fields: {names}')
        return v

    @field_validator('max_permutation_tokens')
    @classmethod
    def validate_max_tokens(cls, v):
        if v < 1:
            raise ValueError('max_permutation_tokens must be positive')
        return v

    @property
    def names(self) -> List[str]:
        return [f.field for f in self.fields]

    @property
    def n_levels(self) -> List[int]:
        return [f.n_levels for f in self.fields]

    @classmethod
    def standard(cls) -> "SimilarityConfig":
        """Levels of disagreement for names, date of death and place."""
        name_bps = [0.0, 0.25, 0.5]
        return cls(fields=[
            FieldComparison(field="given_name", measure=MeasureKind.EDIT, breakpoints=name_bps),
            FieldComparison(field="family_name", measure=MeasureKind.EDIT, breakpoints=name_bps),
            FieldComparison(field="year", measure=MeasureKind.ABSDIFF, breakpoints=[0, 1, 3]),
            FieldComparison(field="month", measure=MeasureKind.ABSDIFF, breakpoints=[0, 1, 3]),
            FieldComparison(field="day", measure=MeasureKind.ABSDIFF, breakpoints=[0, 2, 7]),
            FieldComparison(field="place", measure=MeasureKind.BINARY, breakpoints=[0]),
        ])


def default_rules() -> List[FixRule]:
    return [FixRule(field="given_name", level=3), FixRule(field="family_name", level=3)]


def load_comparison_config(path: Union[str, Path]) -> Tuple[SimilarityConfig, List[FixRule]]:
    """Read per-field sections plus optional [options] and [rules]."""
    sections = read_sections(path)
    options = sections.pop("options", {})
    rule_lines = sections.pop("rules", {})
    fields = []
    for name, opts in sections.items():
        if "measure" not in opts or "breakpoints" not in opts:
            raise ConfigError(f"{path}: field [{name}] needs measure and breakpoints")
        fields.append({
            "field": name,
            "measure": opts["measure"],
            "breakpoints": parse_floats(opts["breakpoints"], f"{path} [{name}]"),
        })
    kwargs = {"fields": fields}
    if "permute_tokens" in options:
        kwargs["permute_tokens"] = parse_bool(options["permute_tokens"], f"{path} [options]")
    if "max_permutation_tokens" in options:
        kwargs["max_permutation_tokens"] = int(options["max_permutation_tokens"])
    if options.get("blocking"):
        kwargs["blocking"] = options["blocking"]
    try:
        config = SimilarityConfig(**kwargs)
        rules = [FixRule(field=f, level=int(level)) for f, level in rule_lines.items()]
    except ValueError as e:
        raise ConfigError(f"Invalid comparison config {path}: {e}")
    unknown = [r.field for r in rules if r.field not in config.names]
    if unknown:
        raise ConfigError(f"{path}: rules reference uncompared fields {unknown}")
    return config, rules


@dataclass(frozen=True)
class ComparisonVector:
    i: int
    j: int
    levels: Tuple[Optional[int], ...]


def _vector(i: int, j: int, row: np.ndarray) -> ComparisonVector:
    return ComparisonVector(int(i), int(j), tuple(None if v == MISSING else int(v) for v in row))


@dataclass
class ComparisonSet:
    """Comparison vectors over the compared pairs P (upper triangle)."""
    fields: List[str]
    n_levels: List[int]
    n_records: int
    pairs: np.ndarray
    levels: np.ndarray

    def __len__(self):
        return len(self.pairs)

    def __iter__(self) -> Iterator[ComparisonVector]:
        for (i, j), row in zip(self.pairs, self.levels):
            yield _vector(i, j, row)


@dataclass
class CandidateSets:
    """Free pairs C, tallies for the fixed pairs P minus C, and C's components."""
    fields: List[str]
    n_levels: List[int]
    n_records: int
    n_compared: int
    pairs: np.ndarray
    levels: np.ndarray
    fixed_tallies: List[np.ndarray]
    components: List[List[int]] = field(default_factory=list)

    @property
    def n_candidates(self) -> int:
        return len(self.pairs)

    @property
    def n_fixed(self) -> int:
        return self.n_compared - len(self.pairs)

    def pair_index(self) -> Dict[Tuple[int, int], int]:
        return {(int(i), int(j)): p for p, (i, j) in enumerate(self.pairs)}

    def touched_records(self) -> List[int]:
        return sorted(set(self.pairs.ravel().tolist()))


def _token_variants(tokens: Sequence[str], max_tokens: int, permute: bool) -> List[str]:
    if not permute or len(tokens) < 2:
        return ["".join(tokens)]
    if len(tokens) <= max_tokens:
        orders = itertools.permutations(tokens)
    else:
        swaps = []
        for k in range(len(tokens) - 1):
            swapped = list(tokens)
            swapped[k], swapped[k + 1] = swapped[k + 1], swapped[k]
            swaps.append(swapped)
        orders = [tokens] + swaps
    return list(dict.fromkeys("".join(order) for order in orders))


def normalized_edit_distance(
    a: Sequence[str], b: Sequence[str], permute: bool = True, max_tokens: int = 3
) -> float:
    """Levenshtein distance over the longer concatenation, minimized over token orders."""
    if not a and not b:
        raise ComparisonError("cannot compare two empty names (should be missing upstream)")
    best = 1.0
    for left in _token_variants(a, max_tokens, permute):
        best = min(best, Levenshtein.normalized_distance(left, "".join(b)))
    for right in _token_variants(b, max_tokens, permute):
        best = min(best, Levenshtein.normalized_distance("".join(a), right))
    return best


def discretize(value: float, comparison: FieldComparison) -> int:
    if value is None or np.isnan(value):
        raise ComparisonError(f"{comparison.field}: cannot discretize a missing value")
    if value < 0 or (comparison.measure == MeasureKind.EDIT and value > 1):
        raise ComparisonError(f"{comparison.field}: value {value} outside the measure range")
    return int(np.searchsorted(comparison.breakpoints, value, side="left"))


def _discretize_array(values: np.ndarray, comparison: FieldComparison) -> np.ndarray:
    out = np.full(values.shape, MISSING, dtype=np.int8)
    observed = ~np.isnan(values)
    out[observed] = np.searchsorted(comparison.breakpoints, values[observed], side="left")
    return out


class _NameField:
    def __init__(self, values: Sequence[Optional[Tuple[str, ...]]], config: SimilarityConfig):
        self.missing = np.array([v is None for v in values])
        self.base = ["".join(v) if v is not None else "" for v in values]
        self.variants: List[str] = []
        self.offsets = np.zeros(len(values) + 1, dtype=np.int64)
        for i, v in enumerate(values):
            self.variants.extend(
                _token_variants(v, config.max_permutation_tokens, config.permute_tokens) if v else [""]
            )
            self.offsets[i + 1] = len(self.variants)

    def distances(self, rows: slice, cols: slice, workers: int) -> np.ndarray:
        row_var = self.variants[self.offsets[rows.start]:self.offsets[rows.stop]]
        col_var = self.variants[self.offsets[cols.start]:self.offsets[cols.stop]]
        scorer = Levenshtein.normalized_distance
        left = cdist(row_var, self.base[cols], scorer=scorer, dtype=np.float64, workers=workers)
        left = np.minimum.reduceat(left, self.offsets[rows.start:rows.stop] - self.offsets[rows.start], axis=0)
        right = cdist(self.base[rows], col_var, scorer=scorer, dtype=np.float64, workers=workers)
        right = np.minimum.reduceat(right, self.offsets[cols.start:cols.stop] - self.offsets[cols.start], axis=1)
        dist = np.minimum(left, right)
        dist[self.missing[rows], :] = np.nan
        dist[:, self.missing[cols]] = np.nan
        return dist


def _numeric(values: Sequence[object]) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in values], dtype=np.float64)


def _codes(values: Sequence[object]) -> np.ndarray:
    seen: Dict[object, int] = {}
    return np.array([MISSING if v is None else seen.setdefault(v, len(seen)) for v in values], dtype=np.int64)


_COMPATIBLE = {
    MeasureKind.EDIT: {FieldKind.NAME},
    MeasureKind.ABSDIFF: {FieldKind.YEAR, FieldKind.MONTH, FieldKind.DAY},
    MeasureKind.BINARY: set(FieldKind),
}


def build_comparisons(
    records: Sequence[RecordEntry],
    schema: FieldSchema,
    config: SimilarityConfig,
    block_rows: int = 256,
    workers: int = 1,
) -> ComparisonSet:
    """Comparison vectors for all pairs i < j, or the pairs sharing the blocking value."""
    r = len(records)
    if r < 2:
        raise ComparisonError("need at least two records to compare")
    if [rec.record_index for rec in records] != list(range(r)):
        raise ComparisonError("records must be indexed 0..r-1 in order")

    prepared = []
    for comparison in config.fields:
        spec = schema.fields[schema.index(comparison.field)]
        if spec.kind not in _COMPATIBLE[comparison.measure]:
            raise ConfigError(f"{comparison.field}: measure {comparison.measure.value} does not apply to {spec.kind.value}")
        values = [rec.values[schema.index(comparison.field)] for rec in records]
        if comparison.measure == MeasureKind.EDIT:
            prepared.append(_NameField(values, config))
        elif comparison.measure == MeasureKind.ABSDIFF:
            prepared.append(_numeric(values))
        else:
            prepared.append(_codes(values))

    block_key = None
    if config.blocking:
        col = schema.index(config.blocking)
        block_key = _codes([rec.values[col] for rec in records])

    all_pairs, all_levels = [], []
    for start in range(0, r - 1, block_rows):
        stop = min(start + block_rows, r)
        rows, cols = slice(start, stop), slice(start, r)
        ii = np.arange(start, stop)[:, None]
        jj = np.arange(start, r)[None, :]
        keep = jj > ii
        if block_key is not None:
            keep &= (block_key[rows][:, None] == block_key[cols][None, :]) & (block_key[rows][:, None] != MISSING)
        if not keep.any():
            continue
        block_levels = []
        for comparison, data in zip(config.fields, prepared):
            if comparison.measure == MeasureKind.EDIT:
                values = data.distances(rows, cols, workers)
            elif comparison.measure == MeasureKind.ABSDIFF:
                values = np.abs(data[rows][:, None] - data[cols][None, :])
            else:
                a, b = data[rows][:, None], data[cols][None, :]
                values = np.where((a == MISSING) | (b == MISSING), np.nan, (a != b).astype(np.float64))
            block_levels.append(_discretize_array(values, comparison)[keep])
        pi, pj = np.nonzero(keep)
        all_pairs.append(np.column_stack([pi + start, pj + start]).astype(np.int32))
        all_levels.append(np.column_stack(block_levels).astype(np.int8))

    n_fields = len(config.fields)
    pairs = np.concatenate(all_pairs) if all_pairs else np.zeros((0, 2), dtype=np.int32)
    levels = np.concatenate(all_levels) if all_levels else np.zeros((0, n_fields), dtype=np.int8)
    logger.info("compared %d record pairs over %d fields", len(pairs), n_fields)
    return ComparisonSet(config.names, config.n_levels, r, pairs, levels)


def filter_candidates(comparisons: ComparisonSet, rules: Sequence[FixRule]) -> CandidateSets:
    """Split P into free pairs C and tallies of the pairs fixed as non-coreferent."""
    fired = np.zeros(len(comparisons), dtype=bool)
    for rule in rules:
        if rule.field not in comparisons.fields:
            raise ComparisonError(f"rule on uncompared field {rule.field}")
        column = comparisons.levels[:, comparisons.fields.index(rule.field)]
        fired |= (column != MISSING) & (column >= rule.level)

    tallies = []
    fixed_levels = comparisons.levels[fired]
    for f, n_levels in enumerate(comparisons.n_levels):
        column = fixed_levels[:, f]
        tallies.append(np.bincount(column[column != MISSING], minlength=n_levels + 1).astype(np.int64))

    pairs = comparisons.pairs[~fired]
    levels = comparisons.levels[~fired]
    forest = UnionFind(comparisons.n_records)
    for i, j in pairs:
        forest.union(int(i), int(j))
    components = forest.groups(pairs.ravel().tolist())
    logger.info("candidate pairs: %d of %d, %d components", len(pairs), len(comparisons), len(components))
    return CandidateSets(
        fields=list(comparisons.fields),
        n_levels=list(comparisons.n_levels),
        n_records=comparisons.n_records,
        n_compared=len(comparisons),
        pairs=pairs,
        levels=levels,
        fixed_tallies=tallies,
        components=components,
    )


def write_candidates(directory: Union[str, Path], candidates: CandidateSets) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(candidates.pairs, columns=["i", "j"])
    for f, name in enumerate(candidates.fields):
        column = candidates.levels[:, f]
        frame[name] = [NA if v == MISSING else str(int(v)) for v in column]
    frame.to_csv(directory / "candidates.csv", index=False, lineterminator="\n")

    tally_rows = [
        (name, level, int(count))
        for name, tally in zip(candidates.fields, candidates.fixed_tallies)
        for level, count in enumerate(tally)
    ]
    pd.DataFrame(tally_rows, columns=["field", "level", "count"]).to_csv(
        directory / "fixed_tallies.csv", index=False, lineterminator="\n"
    )
    comp_rows = [(c, i) for c, members in enumerate(candidates.components) for i in members]
    pd.DataFrame(comp_rows, columns=["component", "record_index"]).to_csv(
        directory / "components.csv", index=False, lineterminator="\n"
    )
    meta = {
        "fields": candidates.fields,
        "n_levels": candidates.n_levels,
        "n_records": candidates.n_records,
        "n_compared": candidates.n_compared,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_candidates(directory: Union[str, Path]) -> CandidateSets:
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text())
        frame = pd.read_csv(directory / "candidates.csv", dtype=str, keep_default_na=False)
        tallies_frame = pd.read_csv(directory / "fixed_tallies.csv")
        comps = pd.read_csv(directory / "components.csv")
    except FileNotFoundError as e:
        raise ComparisonError(f"Incomplete candidate directory {directory}: {e}")
    fields = meta["fields"]
    pairs = frame[["i", "j"]].astype(np.int64).to_numpy().astype(np.int32).reshape(-1, 2)
    levels = np.column_stack(
        [[MISSING if v == NA else int(v) for v in frame[name]] for name in fields]
    ).astype(np.int8) if len(frame) else np.zeros((0, len(fields)), dtype=np.int8)
    tallies = []
    for name, n_levels in zip(fields, meta["n_levels"]):
        tally = np.zeros(n_levels + 1, dtype=np.int64)
        rows = tallies_frame[tallies_frame["field"] == name]
        tally[rows["level"].to_numpy()] = rows["count"].to_numpy()
        tallies.append(tally)
    components = [
        sorted(group["record_index"].tolist()) for _, group in comps.groupby("component", sort=True)
    ]
    return CandidateSets(
        fields=fields,
        n_levels=list(meta["n_levels"]),
        n_records=int(meta["n_records"]),
        n_compared=int(meta["n_compared"]),
        pairs=pairs,
        levels=levels,
        fixed_tallies=tallies,
        components=components,
    )
