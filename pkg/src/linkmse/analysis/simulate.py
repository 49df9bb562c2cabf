"""Synthetic populations captured by K lists, with known linkage and table.

Individuals are unique on (given name, family name, date). Each captured
individual emits one record per list (plus optional duplicates), each record
independently distorted with typos, missing cells and date shifts.
"""

import string
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator, model_validator

from linkmse.analysis.histories import ContingencyTable, list_bit, pattern_string
from linkmse.analysis.ingest import FieldKind, FieldSchema, FieldSpec, RecordEntry, format_value
from linkmse.core.config import parse_floats, read_sections, require_section
from linkmse.core.errors import ConfigError
from linkmse.core.log import get_logger

logger = get_logger(__name__)

GIVEN_NAMES = (
    "JOSE", "MARIA", "JUAN", "ANA", "CARLOS", "ROSA", "MANUEL", "CARMEN", "LUIS", "MARTA",
    "FRANCISCO", "ELENA", "PEDRO", "TERESA", "MIGUEL", "JULIA", "ANTONIO", "SOFIA", "JORGE", "LUCIA",
    "RAFAEL", "ISABEL", "SANTOS", "DOLORES", "RAMON", "GLORIA", "ALFREDO", "PAULA", "OSCAR", "ELSA",
)
FAMILY_NAMES = (
    "HERNANDEZ", "LOPEZ", "MARTINEZ", "GONZALEZ", "RAMIREZ", "FLORES", "RIVERA", "GARCIA", "PEREZ",
    "CRUZ", "SANCHEZ", "REYES", "MEJIA", "ORTIZ", "ALVARADO", "CASTILLO", "MORALES", "ROMERO",
    "AGUILAR", "GUEVARA", "PORTILLO", "MENJIVAR", "ESCOBAR", "ARGUETA", "LANDAVERDE", "SORIANO",
)
PLACES = (
    "AHUACHAPAN", "CABANAS", "CHALATENANGO", "CUSCATLAN", "LA LIBERTAD", "LA PAZ", "LA UNION",
    "MORAZAN", "SAN MIGUEL", "SAN SALVADOR", "SAN VICENTE", "SANTA ANA", "SONSONATE", "USULUTAN",
)
FIELDS = ("given_name", "family_name", "year", "month", "day", "place")
_DATE_RANGE = {"year": (1980, 1992), "month": (1, 12), "day": (1, 28)}


def simulation_schema() -> FieldSchema:
    kinds = [FieldKind.NAME, FieldKind.NAME, FieldKind.YEAR, FieldKind.MONTH, FieldKind.DAY, FieldKind.CATEGORICAL]
    return FieldSchema(fields=[FieldSpec(name=n, kind=k) for n, k in zip(FIELDS, kinds)])


class CaptureSpec(BaseModel):
    """How individuals are captured: per-list probabilities, latent classes, or full cell probabilities."""
    model: Literal["independence", "latent-class", "cells"] = "independence"
    probs: List[float] = []
    weights: List[float] = []
    classes: List[List[float]] = []

    @field_validator('probs', 'weights')
    @classmethod
    def validate_probabilities(cls, v):
        if any(not 0.0 <= p <= 1.0 for p in v):
            raise ValueError('probabilities must lie in [0, 1]')
        return v


class DistortionSpec(BaseModel):
    typo: float = 0.0
    missing: float = 0.0
    date_shift: float = 0.0
    max_shift: int = 2

    @model_validator(mode='after')
    def validate_rates(self):
        for name in ("typo", "missing", "date_shift"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f'{name} rate must lie in [0, 1]')
        if self.max_shift < 1:
            raise ValueError('max_shift must be at least 1')
        return self


class SimSpec(BaseModel):
    n_true: int
    n_lists: int
    capture: CaptureSpec
    distortion: DistortionSpec = DistortionSpec()
    duplicates: List[float] = []
    seed: int = 0

    @model_validator(mode='after')
    def validate_spec(self):
        if self.n_true < 1:
            raise ValueError('population size must be at least 1')
        if not 2 <= self.n_lists <= 16:
            raise ValueError('number of lists must be in 2..16')
        cap = self.capture
        if cap.model == "independence" and len(cap.probs) != self.n_lists:
            raise ValueError('independence capture needs one probability per list')
        if cap.model == "cells":
            if len(cap.probs) != 1 << self.n_lists or abs(sum(cap.probs) - 1.0) > 1e-9:
                raise ValueError(f'cell capture needs {1 << self.n_lists} probabilities summing to 1')
        if cap.model == "latent-class":
            if not cap.weights or len(cap.weights) != len(cap.classes) or abs(sum(cap.weights) - 1.0) > 1e-9:
                raise ValueError('latent-class capture needs one weight per class, summing to 1')
            if any(len(c) != self.n_lists or any(not 0.0 <= p <= 1.0 for p in c) for c in cap.classes):
                raise ValueError('each class needs one capture probability in [0, 1] per list')
        if self.duplicates and len(self.duplicates) != self.n_lists:
            raise ValueError('duplicate rates must be given per list')
        if any(not 0.0 <= p <= 1.0 for p in self.duplicates):
            raise ValueError('duplicate rates must lie in [0, 1]')
        return self


def load_sim_spec(path: Union[str, Path]) -> SimSpec:
    """[population] size/lists/seed, [capture], optional [distortion] and [duplicates] rates."""
    sections = read_sections(path)
    population = require_section(sections, "population", Path(path))
    capture = require_section(sections, "capture", Path(path))
    where = str(path)
    try:
        cap: Dict[str, object] = {"model": capture.get("model", "independence")}
        if "probs" in capture:
            cap["probs"] = parse_floats(capture["probs"], f"{where} [capture] probs")
        if "weights" in capture:
            cap["weights"] = parse_floats(capture["weights"], f"{where} [capture] weights")
        class_keys = sorted((k for k in capture if k.startswith("class_")), key=lambda k: int(k.split("_", 1)[1]))
        cap["classes"] = [parse_floats(capture[k], f"{where} [capture] {k}") for k in class_keys]
        distortion = {k: float(v) if k != "max_shift" else int(v) for k, v in sections.get("distortion", {}).items()}
        duplicates = parse_floats(sections.get("duplicates", {}).get("rates", ""), f"{where} [duplicates]")
        return SimSpec(
            n_true=int(population["size"]),
            n_lists=int(population["lists"]),
            seed=int(population.get("seed", 0)),
            capture=CaptureSpec(**cap),
            distortion=DistortionSpec(**distortion),
            duplicates=duplicates,
        )
    except KeyError as e:
        raise ConfigError(f"{where}: missing key {e}")
    except ValueError as e:
        raise ConfigError(f"Invalid simulation spec {where}: {e}")


@dataclass
class SimulationResult:
    schema: FieldSchema
    records: List[RecordEntry]
    truth: np.ndarray
    true_table: ContingencyTable
    n_missed: int

    @property
    def n_lists(self) -> int:
        return self.true_table.n_lists

    def membership(self) -> np.ndarray:
        return np.array([rec.list_index for rec in self.records], dtype=np.int64)


def _draw_individuals(n: int, rng: np.random.Generator) -> List[tuple]:
    people, seen = [], set()
    while len(people) < n:
        given = [GIVEN_NAMES[rng.integers(len(GIVEN_NAMES))]]
        if rng.random() < 0.2:
            given.append(GIVEN_NAMES[rng.integers(len(GIVEN_NAMES))])
        family = [FAMILY_NAMES[rng.integers(len(FAMILY_NAMES))]]
        if rng.random() < 0.5:
            family.append(FAMILY_NAMES[rng.integers(len(FAMILY_NAMES))])
        date = tuple(int(rng.integers(lo, hi + 1)) for lo, hi in _DATE_RANGE.values())
        key = (tuple(given), tuple(family)) + date
        if key in seen:
            continue
        seen.add(key)
        people.append(key + (PLACES[rng.integers(len(PLACES))],))
    return people


def _capture_patterns(spec: SimSpec, rng: np.random.Generator) -> np.ndarray:
    n, k = spec.n_true, spec.n_lists
    cap = spec.capture
    if cap.model == "cells":
        return rng.choice(1 << k, size=n, p=np.asarray(cap.probs))
    if cap.model == "independence":
        probs = np.tile(np.asarray(cap.probs), (n, 1))
    else:
        classes = rng.choice(len(cap.weights), size=n, p=np.asarray(cap.weights))
        probs = np.asarray(cap.classes)[classes]
    hits = rng.random((n, k)) < probs
    masks = np.array([list_bit(j, k) for j in range(1, k + 1)])
    return (hits * masks).sum(axis=1)


def _typo(tokens: Tuple[str, ...], rng: np.random.Generator) -> Tuple[str, ...]:
    pos = int(rng.integers(len(tokens)))
    word = list(tokens[pos])
    if len(word) >= 2 and rng.random() < 0.5:
        i = int(rng.integers(len(word) - 1))
        word[i], word[i + 1] = word[i + 1], word[i]
    else:
        i = int(rng.integers(len(word)))
        choices = [c for c in string.ascii_uppercase if c != word[i]]
        word[i] = choices[rng.integers(len(choices))]
    out = list(tokens)
    out[pos] = "".join(word)
    return tuple(out)


def _distort(person: tuple, dist: DistortionSpec, rng: np.random.Generator) -> Tuple[object, ...]:
    values: List[Optional[object]] = list(person)
    for f in (0, 1):
        if rng.random() < dist.typo:
            values[f] = _typo(values[f], rng)
    if rng.random() < dist.date_shift:
        f = 2 + int(rng.integers(3))
        lo, hi = _DATE_RANGE[FIELDS[f]]
        shift = int(rng.integers(1, dist.max_shift + 1)) * (1 if rng.random() < 0.5 else -1)
        values[f] = int(min(max(values[f] + shift, lo), hi if f != 4 else 31))
    for f in range(len(values)):
        if rng.random() < dist.missing:
            values[f] = None
    return tuple(values)


def generate(spec: SimSpec) -> SimulationResult:
    """Draw a population, capture it, and emit distorted records list by list."""
    rng = np.random.default_rng(spec.seed)
    people = _draw_individuals(spec.n_true, rng)
    patterns = _capture_patterns(spec, rng)
    counts = np.bincount(patterns, minlength=1 << spec.n_lists)
    true_table = ContingencyTable(spec.n_lists, {h: int(c) for h, c in enumerate(counts) if h and c})

    records: List[RecordEntry] = []
    truth: List[int] = []
    for k in range(1, spec.n_lists + 1):
        members = np.nonzero(patterns & list_bit(k, spec.n_lists))[0]
        dup_rate = spec.duplicates[k - 1] if spec.duplicates else 0.0
        emitted: List[int] = []
        for person in members.tolist():
            emitted.append(person)
            if dup_rate and rng.random() < dup_rate:
                emitted.append(person)
        for person in rng.permutation(np.array(emitted, dtype=np.int64)).tolist():
            records.append(RecordEntry(len(records), k, _distort(people[person], spec.distortion, rng)))
            truth.append(person)
    logger.info("simulated %d individuals, %d records, %d missed by every list", spec.n_true, len(records), int(counts[0]))
    return SimulationResult(simulation_schema(), records, np.array(truth, dtype=np.int64), true_table, int(counts[0]))


def write_simulation(directory: Union[str, Path], result: SimulationResult) -> List[Path]:
    """list<k>.csv per list, truth.csv, true_table.csv (every pattern, all-zero row first) and schema.ini."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    names = result.schema.names
    for k in range(1, result.n_lists + 1):
        rows = [[format_value(v) for v in rec.values] for rec in result.records if rec.list_index == k]
        path = directory / f"list{k}.csv"
        pd.DataFrame(rows, columns=names).to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    pd.DataFrame({
        "record_index": [rec.record_index for rec in result.records],
        "list": [rec.list_index for rec in result.records],
        "individual": result.truth,
    }).to_csv(directory / "truth.csv", index=False, lineterminator="\n")
    dense = result.true_table.dense()
    dense[0] = result.n_missed
    pd.DataFrame({
        "pattern": [pattern_string(h, result.n_lists) for h in range(len(dense))],
        "count": dense,
    }).to_csv(directory / "true_table.csv", index=False, lineterminator="\n")
    schema_lines = [f"[{f.name}]\nkind = {f.kind.value}\n" for f in result.schema.fields]
    (directory / "schema.ini").write_text("\n".join(schema_lines))
    return paths
