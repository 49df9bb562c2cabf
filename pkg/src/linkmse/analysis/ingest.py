"""Loading, validating and standardizing the K source lists.

Every record gets a global index in concatenation order (list 1 first) and
keeps per-cell missingness: an empty cell is `None` in `RecordEntry.values`.
"""

import csv
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator

from linkmse.core.config import parse_bool, read_sections
from linkmse.core.errors import ConfigError, IngestError
from linkmse.core.log import get_logger

logger = get_logger(__name__)

LABEL_COLUMN = "record_label"
LIST_COLUMN = "__list"
INDEX_COLUMN = "__idx"

# Latin-1 letters folded to ASCII, grouped so each pair lines up.
_FOLD_GROUPS = [
    ("ÀÁÂÃÄÅ", "AAAAAA"), ("àáâãäå", "aaaaaa"),
    ("Çç", "Cc"),
    ("ÈÉÊË", "EEEE"), ("èéêë", "eeee"),
    ("ÌÍÎÏ", "IIII"), ("ìíîï", "iiii"),
    ("Ññ", "Nn"),
    ("ÒÓÔÕÖØ", "OOOOOO"), ("òóôõöø", "oooooo"),
    ("ÙÚÛÜ", "UUUU"), ("ùúûü", "uuuu"),
    ("Ýýÿ", "Yyy"),
]
_FOLD_MULTI = {"Æ": "AE", "æ": "ae", "ß": "SS", "Þ": "TH", "þ": "th", "Ð": "D", "ð": "d"}
_FOLD_TABLE = str.maketrans(
    {**{s: d for src, dst in _FOLD_GROUPS for s, d in zip(src, dst)}, **_FOLD_MULTI}
)
_DROP = re.compile(r"['.`´]")
_BREAK = re.compile(r"[^A-Z0-9]+")


class FieldKind(str, Enum):
    NAME = "name-string"
    YEAR = "date-year"
    MONTH = "date-month"
    DAY = "date-day"
    CATEGORICAL = "categorical"


class FieldSpec(BaseModel):
    name: str
    kind: FieldKind
    required: bool = False

    @field_validator('name')
    @classmethod
    def validate_name(cls, v):
        v = v.strip()
        if not v or v in (LABEL_COLUMN, LIST_COLUMN, INDEX_COLUMN):
            raise ValueError(f'invalid field name: {v!r}')
        return v


class FieldSchema(BaseModel):
    fields: List[FieldSpec]

    @field_validator('fields')
    @classmethod
    def validate_fields(cls, v):
        if not v:
            raise ValueError('schema needs at least one field')
        names = [f.name for f in v]
        if len(set(names)) != len(names):
            raise ValueError(f'duplicate field names in schema: {names}')
        return v

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.fields]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"Unknown field: {name}")


@dataclass(frozen=True)
class RecordEntry:
    record_index: int
    list_index: int
    values: Tuple[object, ...]
    label: Optional[str] = None


@dataclass(frozen=True)
class SourceList:
    list_index: int
    label: str
    size: int


def load_schema(path: Union[str, Path]) -> FieldSchema:
    sections = read_sections(path)
    fields = []
    for name, options in sections.items():
        if "kind" not in options:
            raise ConfigError(f"{path}: field [{name}] has no kind")
        required = parse_bool(options.get("required", "false"), f"{path} [{name}] required")
        fields.append({"name": name, "kind": options["kind"], "required": required})
    try:
        return FieldSchema(fields=fields)
    except ValueError as e:
        raise ConfigError(f"Invalid schema {path}: {e}")


def standardize_names(raw: Optional[str]) -> Optional[Tuple[str, ...]]:
    """Uppercase, fold accents, strip punctuation and tokenize on whitespace.

    Apostrophes and periods are dropped ("O'NEIL" -> "ONEIL"); every other
    non-alphanumeric character is a token break. Empty input is missing.
    """
    if raw is None:
        return None
    folded = raw.translate(_FOLD_TABLE).upper()
    folded = _DROP.sub("", folded)
    tokens = _BREAK.sub(" ", folded).split()
    return tuple(tokens) if tokens else None


def _parse_date(text: str, kind: FieldKind, where: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise IngestError(f"{where}: unparseable date component '{text}'")
    low, high = {
        FieldKind.YEAR: (1, 9999),
        FieldKind.MONTH: (1, 12),
        FieldKind.DAY: (1, 31),
    }[kind]
    if not low <= value <= high:
        raise IngestError(f"{where}: {kind.value} {value} outside {low}-{high}")
    return value


def parse_value(text: str, spec: FieldSpec, where: str) -> object:
    text = text.strip()
    if not text:
        return None
    if spec.kind == FieldKind.NAME:
        return standardize_names(text)
    if spec.kind == FieldKind.CATEGORICAL:
        tokens = standardize_names(text)
        return " ".join(tokens) if tokens else None
    return _parse_date(text, spec.kind, where)


def format_value(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return " ".join(value)
    return str(value)


def _read_header(path: Path) -> List[str]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            header = next(csv.reader(f))
    except StopIteration:
        raise IngestError(f"{path}: empty file")
    except UnicodeDecodeError as e:
        raise IngestError(f"{path}: not UTF-8 text ({e.reason} at byte {e.start})")
    except csv.Error as e:
        raise IngestError(f"{path}: malformed CSV header ({e})")
    header = [h.strip() for h in header]
    duplicates = sorted({h for h in header if header.count(h) > 1})
    if duplicates:
        raise IngestError(f"{path}: duplicate header names {duplicates}")
    return header


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except UnicodeDecodeError as e:
        raise IngestError(f"{path}: not UTF-8 text ({e.reason} at byte {e.start})")
    except pd.errors.ParserError as e:
        raise IngestError(f"{path}: malformed CSV ({e})")
    frame.columns = [c.strip() for c in frame.columns]
    return frame


def _check_header(path: Path, header: Sequence[str], schema: FieldSchema, extra: Sequence[str] = ()) -> None:
    allowed = set(schema.names) | {LABEL_COLUMN} | set(extra)
    unknown = [h for h in header if h not in allowed]
    if unknown:
        raise IngestError(f"{path}: columns not in schema: {unknown}")
    missing = [f.name for f in schema.fields if f.required and f.name not in header]
    if missing:
        raise IngestError(f"{path}: required columns missing: {missing}")


def _records_from_frame(
    frame: pd.DataFrame, schema: FieldSchema, list_index: int, start: int, source: Path
) -> List[RecordEntry]:
    columns = [frame[f.name].tolist() if f.name in frame.columns else None for f in schema.fields]
    labels = frame[LABEL_COLUMN].tolist() if LABEL_COLUMN in frame.columns else None
    records = []
    for row in range(len(frame)):
        values = []
        for spec, column in zip(schema.fields, columns):
            text = column[row] if column is not None else ""
            values.append(parse_value(text, spec, f"{source} row {row + 2} field {spec.name}"))
        label = (labels[row].strip() or None) if labels is not None else None
        records.append(RecordEntry(start + row, list_index, tuple(values), label))
    return records


def load_lists(
    paths: Sequence[Union[str, Path]], schema: FieldSchema
) -> Tuple[List[SourceList], List[RecordEntry]]:
    """Load K >= 2 CSV lists into one record store, in concatenation order."""
    if len(paths) < 2:
        raise IngestError("need at least two lists")
    sources: List[SourceList] = []
    records: List[RecordEntry] = []
    for k, raw_path in enumerate(paths, start=1):
        path = Path(raw_path)
        if not path.is_file():
            raise IngestError(f"List file not found: {path}")
        header = _read_header(path)
        _check_header(path, header, schema)
        frame = _read_frame(path)
        chunk = _records_from_frame(frame, schema, k, len(records), path)
        records.extend(chunk)
        sources.append(SourceList(k, path.stem, len(chunk)))
        logger.info("list %d (%s): %d records", k, path.name, len(chunk))
    return sources, records


def membership(records: Sequence[RecordEntry]) -> np.ndarray:
    """List index (1..K) of every record, ordered by record index."""
    return np.array([rec.list_index for rec in records], dtype=np.int64)


def write_record_store(path: Union[str, Path], schema: FieldSchema, records: Sequence[RecordEntry]) -> None:
    rows: Dict[str, list] = {LIST_COLUMN: [], INDEX_COLUMN: [], LABEL_COLUMN: []}
    for name in schema.names:
        rows[name] = []
    for rec in records:
        rows[LIST_COLUMN].append(rec.list_index)
        rows[INDEX_COLUMN].append(rec.record_index)
        rows[LABEL_COLUMN].append(rec.label or "")
        for name, value in zip(schema.names, rec.values):
            rows[name].append(format_value(value))
    pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n")


def read_record_store(
    path: Union[str, Path], schema: FieldSchema
) -> Tuple[List[SourceList], List[RecordEntry]]:
    """Reload a store written by `write_record_store`."""
    path = Path(path)
    header = _read_header(path)
    if header[:2] != [LIST_COLUMN, INDEX_COLUMN]:
        raise IngestError(f"{path}: not a record store (expected {LIST_COLUMN},{INDEX_COLUMN} first)")
    _check_header(path, header, schema, extra=(LIST_COLUMN, INDEX_COLUMN))
    frame = _read_frame(path)
    try:
        list_ids = [int(v) for v in frame[LIST_COLUMN]]
        indices = [int(v) for v in frame[INDEX_COLUMN]]
    except ValueError:
        raise IngestError(f"{path}: non-integer {LIST_COLUMN}/{INDEX_COLUMN} values")
    if indices != list(range(len(frame))):
        raise IngestError(f"{path}: record indices must run 0..r-1 in order")
    if list_ids != sorted(list_ids):
        raise IngestError(f"{path}: records must be grouped by list in concatenation order")

    records: List[RecordEntry] = []
    sources: List[SourceList] = []
    for k in sorted(set(list_ids)):
        part = frame[frame[LIST_COLUMN].astype(int) == k].reset_index(drop=True)
        chunk = _records_from_frame(part, schema, k, len(records), path)
        records.extend(chunk)
        sources.append(SourceList(k, f"list{k}", len(chunk)))
    if len(sources) < 2:
        raise IngestError("need at least two lists")
    return sources, records


def read_membership(path: Union[str, Path]) -> np.ndarray:
    """List index of every record in a record store, without parsing field values."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, usecols=[LIST_COLUMN, INDEX_COLUMN], dtype=np.int64)
    except FileNotFoundError:
        raise IngestError(f"Record store not found: {path}")
    except ValueError as e:
        raise IngestError(f"{path}: not a record store ({e})")
    if frame[INDEX_COLUMN].tolist() != list(range(len(frame))):
        raise IngestError(f"{path}: record indices must run 0..r-1 in order")
    return frame[LIST_COLUMN].to_numpy()
