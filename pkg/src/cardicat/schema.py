"""Mixed-type schema inference, persistence, and forward/inverse encoding.

A column is *numerical* when every non-missing token parses as a finite
float, otherwise it is discrete. Discrete columns with at most two levels
are *binary*, the rest *categorical*. Levels are ordered by descending
frequency with lexicographic tie-breaks so the same file always yields the
same schema.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, SchemaError

SCHEMA_VERSION = 1

NUMERICAL = "numerical"
BINARY = "binary"
CATEGORICAL = "categorical"
KINDS = (NUMERICAL, BINARY, CATEGORICAL)

NA_LEVEL = "⟨NA⟩"
MASK_LEVEL = "⟨MASK⟩"
MISSING_TOKEN = ""


@dataclass(frozen=True)
class Table:
    """Raw CSV content: a header plus string-valued rows."""

    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        j = self.header.index(name)
        return [r[j] for r in self.rows]

    def take(self, indices: Iterable[int]) -> "Table":
        return Table(self.header, tuple(self.rows[i] for i in indices))


def read_csv(source: str | Path | io.TextIOBase) -> Table:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _read_csv_stream(fh)
    return _read_csv_stream(source)


def _read_csv_stream(fh) -> Table:
    reader = csv.reader(fh)
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise DataError("empty CSV file") from None
    if not header or header == ("",):
        raise DataError("CSV header row is empty")
    dupes = sorted(n for n, c in Counter(header).items() if c > 1)
    if dupes:
        raise DataError(f"duplicate header names: {dupes}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append(tuple(row))
    if not rows:
        raise DataError("CSV has a header but no data rows")
    return Table(header, tuple(rows))


def write_csv(path: str | Path, table: Table) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.header)
        writer.writerows(table.rows)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    levels: tuple[str, ...] = ()
    mean: float | None = None
    sd: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == NUMERICAL:
            if self.levels:
                raise SchemaError(f"{self.name}: numerical feature with levels")
            if self.sd is not None and not self.sd > 0:
                raise SchemaError(f"{self.name}: constant numerical column (sd={self.sd})")
        else:
            c = len(self.levels)
            if c == 0 or len(set(self.levels)) != c:
                raise SchemaError(f"{self.name}: levels must be non-empty and distinct")
            if (self.kind == BINARY) != (c <= 2):
                raise SchemaError(
                    f"{self.name}: kind {self.kind} inconsistent with cardinality {c}")

    @property
    def cardinality(self) -> int | None:
        return None if self.kind == NUMERICAL else len(self.levels)

    @property
    def is_discrete(self) -> bool:
        return self.kind != NUMERICAL

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == NUMERICAL:
            d["mean"] = self.mean
            d["sd"] = self.sd
        else:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(name=d["name"], kind=d["kind"], levels=tuple(d.get("levels", ())),
                   mean=d.get("mean"), sd=d.get("sd"))


def discrete_kind(cardinality: int) -> str:
    return BINARY if cardinality <= 2 else CATEGORICAL


@dataclass(frozen=True)
class Schema:
    features: tuple[FeatureSpec, ...]
    version: int = SCHEMA_VERSION
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, name: str) -> FeatureSpec:
        return self.features[self.index(name)]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def of_kind(self, kind: str) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.kind == kind)

    @property
    def has_moments(self) -> bool:
        return all(f.sd is not None for f in self.of_kind(NUMERICAL))

    def to_dict(self) -> dict:
        return {"version": self.version, "features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        version = d.get("version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema version {version!r}")
        return cls(tuple(FeatureSpec.from_dict(f) for f in d["features"]), version)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Schema":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def with_moments(self, table: Table) -> "Schema":
        """Recompute numerical mean/sd (ddof=1) from ``table``."""
        feats = []
        for f in self.features:
            if f.kind == NUMERICAL:
                vals = _parse_numeric(f.name, table.column(f.name))
                feats.append(replace(f, **_moments(f.name, vals)))
            else:
                feats.append(f)
        return Schema(tuple(feats), self.version)


def _parse_float(token: str) -> float | None:
    try:
        v = float(token)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_numeric(name: str, tokens: Sequence[str]) -> np.ndarray:
    out = np.empty(len(tokens), dtype=np.float64)
    for i, t in enumerate(tokens):
        v = _parse_float(t)
        if v is None:
            kind = "missing value" if t == MISSING_TOKEN else f"non-numeric token {t!r}"
            raise DataError(f"{name}: {kind} in numerical column (row {i})")
        out[i] = v
    return out


def _moments(name: str, vals: np.ndarray) -> dict:
    if len(vals) < 2:
        raise SchemaError(f"{name}: need at least 2 rows to estimate sd")
    sd = float(np.std(vals, ddof=1))
    if not sd > 0:
        raise SchemaError(f"{name}: constant numerical column")
    return {"mean": float(np.mean(vals)), "sd": sd}


def order_levels(tokens: Iterable[str]) -> tuple[str, ...]:
    counts = Counter(NA_LEVEL if t == MISSING_TOKEN else t for t in tokens)
    return tuple(sorted(counts, key=lambda lv: (-counts[lv], lv)))


def infer_schema(source: Table | str | Path, *, max_numeric_as_categorical: int = 0) -> Schema:
    """Classify every column and compute numerical moments.

    ``max_numeric_as_categorical`` forces integer-valued columns with at most
    that many distinct values to be treated as discrete. Rows with a missing
    numerical value are ignored when estimating moments.
    """
    table = source if isinstance(source, Table) else read_csv(source)
    kinds = {}
    for j, name in enumerate(table.header):
        tokens = [r[j] for r in table.rows]
        present = [t for t in tokens if t != MISSING_TOKEN]
        parsed = [_parse_float(t) for t in present]
        if present and all(v is not None for v in parsed):
            distinct = set(parsed)
            forced = (all(v == int(v) for v in distinct)
                      and len(distinct) <= max_numeric_as_categorical)
            kinds[name] = None if forced else NUMERICAL
        else:
            kinds[name] = None
    complete = drop_missing_numeric(table, [n for n, k in kinds.items() if k == NUMERICAL])
    if not complete.rows:
        raise DataError("no rows left after dropping missing numerical values")
    feats = []
    for j, name in enumerate(table.header):
        if kinds[name] == NUMERICAL:
            vals = _parse_numeric(name, complete.column(name))
            feats.append(FeatureSpec(name, NUMERICAL, **_moments(name, vals)))
        else:
            levels = order_levels(complete.column(name))
            feats.append(FeatureSpec(name, discrete_kind(len(levels)), levels))
    return Schema(tuple(feats))


def drop_missing_numeric(table: Table, numeric_names: Iterable[str] | Schema) -> Table:
    if isinstance(numeric_names, Schema):
        numeric_names = [f.name for f in numeric_names.of_kind(NUMERICAL)]
    cols = [table.header.index(n) for n in numeric_names]
    if not cols:
        return table
    keep = tuple(r for r in table.rows if all(r[j] != MISSING_TOKEN for j in cols))
    return Table(table.header, keep)


@dataclass(frozen=True)
class EncodedDataset:
    """Per-feature columns in schema order.

    Numerical columns hold standardized float64 values, discrete columns
    int64 label codes. Arrays are read-only.
    """

    schema: Schema
    columns: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.columns) != len(self.schema):
            raise SchemaError("column count does not match schema")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise SchemaError("ragged encoded columns")
        for f, col in zip(self.schema, self.columns):
            if f.kind == NUMERICAL:
                if not np.all(np.isfinite(col)):
                    raise DataError(f"{f.name}: non-finite standardized value")
            elif len(col) and (col.min() < 0 or col.max() >= f.cardinality):
                raise DataError(f"{f.name}: label code out of range")
            col.setflags(write=False)

    def __len__(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n(self) -> int:
        return len(self)

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.schema.index(name)]

    def take(self, indices) -> "EncodedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EncodedDataset(self.schema, tuple(c[idx] for c in self.columns))


def encode(schema: Schema, table: Table, *, strict: bool = True) -> EncodedDataset:
    """Map raw rows to standardized reals and label codes.

    In lenient mode an unknown level falls back to the NA level when the
    feature has one; otherwise it is always an error.
    """
    if not schema.has_moments:
        raise SchemaError("schema has numerical features without moments")
    cols = []
    for f in schema:
        try:
            tokens = table.column(f.name)
        except ValueError:
            raise SchemaError(f"input is missing column {f.name!r}") from None
        if f.kind == NUMERICAL:
            cols.append((_parse_numeric(f.name, tokens) - f.mean) / f.sd)
            continue
        lookup = {lv: i for i, lv in enumerate(f.levels)}
        na = lookup.get(NA_LEVEL)
        codes = np.empty(len(tokens), dtype=np.int64)
        for i, t in enumerate(tokens):
            key = NA_LEVEL if t == MISSING_TOKEN else t
            code = lookup.get(key)
            if code is None:
                if strict or na is None:
                    raise SchemaError(f"{f.name}: unknown level {t!r}")
                code = na
            codes[i] = code
        cols.append(codes)
    return EncodedDataset(schema, tuple(cols))


def format_number(x: float) -> str:
    return repr(float(x))


def decode(schema: Schema, data: EncodedDataset | Sequence[np.ndarray]) -> Table:
    columns = data.columns if isinstance(data, EncodedDataset) else tuple(data)
    if len(columns) != len(schema):
        raise SchemaError("column count does not match schema")
    out = []
    for f, col in zip(schema, columns):
        if f.kind == NUMERICAL:
            vals = np.asarray(col, dtype=np.float64)
            if not np.all(np.isfinite(vals)):
                raise DataError(f"{f.name}: non-finite standardized value")
            out.append([format_number(v) for v in vals * f.sd + f.mean])
        else:
            codes = np.asarray(col)
            if len(codes) and (codes.min() < 0 or codes.max() >= f.cardinality):
                raise DataError(f"{f.name}: label code out of range")
            out.append([f.levels[c] for c in codes])
    return Table(schema.names, tuple(zip(*out)) if out and out[0] else ())


def one_hot(code: int, c: int) -> np.ndarray:
    if not 0 <= code < c:
        raise ValueError(f"code {code} out of range for cardinality {c}")
    v = np.zeros(c)
    v[code] = 1.0
    return v


def one_hot_matrix(codes: np.ndarray, c: int, dtype=np.float64) -> np.ndarray:
    codes = np.asarray(codes)
    if len(codes) and (codes.min() < 0 or codes.max() >= c):
        raise ValueError(f"code out of range for cardinality {c}")
    m = np.zeros((len(codes), c), dtype=dtype)
    m[np.arange(len(codes)), codes] = 1.0
    return m


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise DataError("need at least 2 rows to split")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(math.floor(n * fraction))
    return perm[:k], perm[k:]


def split(dataset, fraction: float, seed: int):
    """Shuffle and partition rows; works on a ``Table`` or an ``EncodedDataset``."""
    train_idx, test_idx = split_indices(len(dataset), fraction, seed)
    return dataset.take(train_idx), dataset.take(test_idx)
