"""Tabular data: schemas, CSV loading, binarization and stratified folds.

Rows carry mixed numeric/categorical attributes and a binary label stored
canonically as +1/-1. Values are kept column-wise: numeric columns are
float arrays with NaN for missing cells, categorical columns are integer
codes into the schema's category list with -1 for missing cells.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError
from .patterns import CategoricalLiteral, Literal, NumericLiteral

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING_TOKENS = frozenset({"", "?"})


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise DataError(f"attribute {self.name!r}: no categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"attribute {self.name!r}: duplicate categories")
        if self.lower is not None and self.upper is not None and self.lower > self.upper:
            raise DataError(f"attribute {self.name!r}: lower bound exceeds upper bound")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    @property
    def n_categories(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]
    label_column: str
    positive_label: str
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataError("attribute names must be unique")
        if self.label_column in names:
            raise DataError(f"label column {self.label_column!r} is also an attribute")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DataError(f"unknown attribute {name!r}") from None

    def attribute(self, name: str) -> Attribute:
        return self.attributes[self.index(name)]

    def __contains__(self, name) -> bool:
        return name in self._index

    def with_bounds(self, bounds: Mapping[str, tuple[float, float]]) -> "Schema":
        attrs = []
        for a in self.attributes:
            if a.is_numeric and a.name in bounds:
                lo, hi = bounds[a.name]
                a = Attribute(a.name, a.kind, a.categories, lo, hi)
            attrs.append(a)
        return Schema(tuple(attrs), self.label_column, self.positive_label)


def parse_schema(text: str) -> Schema:
    """Parse the line-oriented schema format.

    ``name:numeric`` or ``name:categorical=v1|v2|...`` per attribute, and a
    final ``label=<name>:positive=<value>`` line. Blank lines and ``#``
    comments are ignored.
    """
    attrs: list[Attribute] = []
    label = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if label is not None:
            raise ParseError("label line must be the last line", lineno, line)
        if line.startswith("label="):
            body = line[len("label="):]
            name, sep, pos = body.partition(":positive=")
            if not sep or not name or not pos:
                raise ParseError("expected label=<name>:positive=<value>", lineno, line)
            label = (name, pos)
            continue
        name, sep, spec = line.partition(":")
        if not sep or not name:
            raise ParseError("expected <name>:<kind>", lineno, line)
        if spec == NUMERIC:
            attrs.append(Attribute(name, NUMERIC))
        elif spec.startswith(CATEGORICAL + "="):
            cats = tuple(spec[len(CATEGORICAL) + 1:].split("|"))
            try:
                attrs.append(Attribute(name, CATEGORICAL, cats))
            except DataError as exc:
                raise ParseError(str(exc), lineno, name) from None
        else:
            raise ParseError("unknown attribute kind", lineno, spec)
    if label is None:
        raise ParseError("missing label line")
    try:
        return Schema(tuple(attrs), label[0], label[1])
    except DataError as exc:
        raise ParseError(str(exc)) from None


def format_schema(schema: Schema) -> str:
    lines = []
    for a in schema.attributes:
        if a.is_numeric:
            lines.append(f"{a.name}:{NUMERIC}")
        else:
            lines.append(f"{a.name}:{CATEGORICAL}={'|'.join(a.categories)}")
    lines.append(f"label={schema.label_column}:positive={schema.positive_label}")
    return "\n".join(lines) + "\n"


def read_schema(path) -> Schema:
    return parse_schema(Path(path).read_text(encoding="utf-8"))


def _is_missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, float):
        return math.isnan(value)
    return isinstance(value, str) and value.strip() in MISSING_TOKENS


class Dataset:
    """An immutable labelled sample S = {(X_n, Y_n)} with Y_n in {+1, -1}."""

    def __init__(self, schema: Schema, columns: Sequence[np.ndarray], labels: np.ndarray):
        if len(columns) != len(schema.attributes):
            raise DataError("column count does not match schema")
        labels = np.array(labels, dtype=np.int8)
        if labels.ndim != 1 or not np.isin(labels, (1, -1)).all():
            raise DataError("labels must be a vector of +1/-1")
        cols = []
        for a, col in zip(schema.attributes, columns):
            col = np.array(col, dtype=np.float64 if a.is_numeric else np.int64)
            if col.shape != labels.shape:
                raise DataError(f"attribute {a.name!r}: column length mismatch")
            if a.is_numeric:
                seen = col[~np.isnan(col)]
                if seen.size and a.lower is not None and seen.min() < a.lower:
                    raise DataError(f"attribute {a.name!r}: value below schema minimum")
                if seen.size and a.upper is not None and seen.max() > a.upper:
                    raise DataError(f"attribute {a.name!r}: value above schema maximum")
            elif col.size and (col.min() < -1 or col.max() >= a.n_categories):
                raise DataError(f"attribute {a.name!r}: category code out of range")
            col.setflags(write=False)
            cols.append(col)
        labels.setflags(write=False)
        self.schema = _fill_bounds(schema, cols)
        self.columns = tuple(cols)
        self.labels = labels

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence], labels: Iterable,
                  strict: bool = True) -> "Dataset":
        """Build from raw row values; labels may be +1/-1, 1/0 or label text."""
        rows = [list(r) for r in rows]
        labels = [_encode_label(y, schema.positive_label) for y in labels]
        if len(rows) != len(labels):
            raise DataError("rows and labels differ in length")
        cols = []
        for j, a in enumerate(schema.attributes):
            raw = [r[j] for r in rows]
            cols.append(_encode_column(a, raw, strict))
        return cls(schema, cols, np.array(labels, dtype=np.int8))

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_pos(self) -> int:
        return int((self.labels == 1).sum())

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    @property
    def positive(self) -> np.ndarray:
        return self.labels == 1

    def __len__(self) -> int:
        return self.n

    def value(self, n: int, j: int):
        a = self.schema.attributes[j]
        v = self.columns[j][n]
        if a.is_numeric:
            return None if np.isnan(v) else float(v)
        return None if v < 0 else a.categories[v]

    def row(self, n: int) -> dict:
        """Row ``n`` as a mapping attribute name -> value (None when missing)."""
        return {a.name: self.value(n, j) for j, a in enumerate(self.schema.attributes)}

    def rows(self):
        for n in range(self.n):
            yield self.row(n)

    def subset(self, index) -> "Dataset":
        """Rows selected by ``index``; numeric bounds are re-derived from the subset."""
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(np.int64)
        schema = Schema(
            tuple(Attribute(a.name, a.kind, a.categories) for a in self.schema.attributes),
            self.schema.label_column, self.schema.positive_label)
        return Dataset(schema, [c[index] for c in self.columns], self.labels[index])

    def __repr__(self):
        return f"Dataset(n={self.n}, n_pos={self.n_pos}, attributes={self.schema.names})"


def _fill_bounds(schema: Schema, cols) -> Schema:
    bounds = {}
    for a, col in zip(schema.attributes, cols):
        if not a.is_numeric or (a.lower is not None and a.upper is not None):
            continue
        seen = col[~np.isnan(col)]
        if seen.size:
            lo = float(seen.min()) if a.lower is None else a.lower
            hi = float(seen.max()) if a.upper is None else a.upper
            bounds[a.name] = (lo, hi)
    return schema.with_bounds(bounds) if bounds else schema


def _encode_label(y, positive_label: str) -> int:
    if isinstance(y, (int, np.integer)) and not isinstance(y, bool):
        if y in (1, -1, 0):
            return 1 if y == 1 else -1
    if isinstance(y, bool):
        return 1 if y else -1
    text = str(y).strip()
    if not text or text in MISSING_TOKENS:
        raise DataError("missing label")
    return 1 if text == str(positive_label) else -1


def _encode_column(a: Attribute, raw, strict: bool, where=None) -> np.ndarray:
    where = where or [f"row {i}" for i in range(len(raw))]
    if a.is_numeric:
        out = np.empty(len(raw), dtype=np.float64)
        for i, v in enumerate(raw):
            if _is_missing(v):
                out[i] = np.nan
                continue
            try:
                out[i] = float(v)
            except (TypeError, ValueError):
                raise DataError(f"{where[i]}: attribute {a.name!r}: not a number: {v!r}") from None
        return out
    lookup = {c: k for k, c in enumerate(a.categories)}
    out = np.empty(len(raw), dtype=np.int64)
    for i, v in enumerate(raw):
        if _is_missing(v):
            out[i] = -1
            continue
        code = lookup.get(str(v).strip())
        if code is None:
            if strict:
                raise DataError(f"{where[i]}: attribute {a.name!r}: unknown category {v!r}")
            code = -1
        out[i] = code
    return out


def _parses_as_real(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def infer_schema(header: Sequence[str], body: Sequence[Sequence[str]],
                 label_column: str | None = None,
                 positive_label: str | None = None) -> Schema:
    """A column is numeric iff every non-missing cell parses as a real."""
    label_column = label_column or header[-1]
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not in header")
    li = header.index(label_column)
    if positive_label is None:
        seen = {r[li].strip() for r in body if r[li].strip() not in MISSING_TOKENS}
        if seen <= {"1", "-1"} or seen <= {"1", "0"}:
            positive_label = "1"
        else:
            raise DataError(f"text labels {sorted(seen)} need an explicit positive label")
    attrs = []
    for j, name in enumerate(header):
        if j == li:
            continue
        cells = [r[j].strip() for r in body if r[j].strip() not in MISSING_TOKENS]
        if all(_parses_as_real(c) for c in cells):
            attrs.append(Attribute(name, NUMERIC))
        else:
            attrs.append(Attribute(name, CATEGORICAL, tuple(sorted(set(cells)))))
    return Schema(tuple(attrs), label_column, positive_label)


def read_csv_text(text: str):
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty file: header row required") from None
    body = []
    for lineno, row in enumerate(reader, 2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DataError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        body.append((lineno, row))
    return header, body


def load_csv(path, schema: Schema | None = None, *, label_column: str | None = None,
             positive_label: str | None = None, strict: bool = True) -> Dataset:
    """Load a comma-separated file whose first row is the header.

    Without a schema the attribute types are inferred and numeric bounds
    are taken from the observed minimum and maximum. "?" and empty cells
    are missing values.
    """
    header, numbered = read_csv_text(Path(path).read_text(encoding="utf-8"))
    body = [r for _, r in numbered]
    if schema is None:
        schema = infer_schema(header, body, label_column, positive_label)
    if schema.label_column not in header:
        raise DataError(f"label column {schema.label_column!r} not in header")
    missing = [a.name for a in schema.attributes if a.name not in header]
    if missing:
        raise DataError(f"attributes missing from header: {', '.join(missing)}")
    li = header.index(schema.label_column)
    labels = [r[li].strip() for r in body]
    distinct = set(labels)
    if distinct & MISSING_TOKENS:
        bad = next(n for n, r in numbered if r[li].strip() in MISSING_TOKENS)
        raise DataError(f"line {bad}: missing label")
    if len(distinct) > 2:
        raise DataError(f"label column has {len(distinct)} distinct values; binary labels required")
    if distinct and schema.positive_label not in distinct and len(distinct) == 2:
        raise DataError(
            f"positive label {schema.positive_label!r} not among labels {sorted(distinct)}")
    where = [f"line {n}" for n, _ in numbered]
    cols = []
    for a in schema.attributes:
        j = header.index(a.name)
        cols.append(_encode_column(a, [r[j] for r in body], strict, where))
    y = np.array([1 if v == schema.positive_label else -1 for v in labels], dtype=np.int8)
    return Dataset(schema, cols, y)


# ---------------------------------------------------------------------------
# binarization


@dataclass(frozen=True, eq=False)
class BinarizedDataset:
    columns: tuple[Literal, ...]
    bits: np.ndarray
    origin: Dataset

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def attribute_of(self) -> list[str]:
        return [lit.attr for lit in self.columns]


def _cut_gaps(values: np.ndarray, bins: int, mode: str) -> list[int]:
    """Indices g of gaps (distinct[g], distinct[g+1]) chosen as cut points."""
    distinct = np.unique(values)
    if distinct.size < 2 or bins < 2:
        return []
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    if mode == "quantile":
        targets = np.quantile(values, [i / bins for i in range(1, bins)])
    elif mode == "equal-width":
        lo, hi = distinct[0], distinct[-1]
        targets = [lo + i * (hi - lo) / bins for i in range(1, bins)]
    else:
        raise ValueError(f"unknown binning mode {mode!r}")
    gaps = {int(np.argmin(np.abs(mids - t))) for t in targets}
    return sorted(gaps)


def numeric_literals(name: str, values: np.ndarray, bins: int, mode: str) -> list[NumericLiteral]:
    """Bin literals for one numeric column, bounded by observed values flanking each cut."""
    seen = values[~np.isnan(values)]
    distinct = np.unique(seen)
    gaps = _cut_gaps(seen, bins, mode)
    if not gaps:
        return []
    below = [float(distinct[g]) for g in gaps]
    above = [float(distinct[g + 1]) for g in gaps]
    lits = [NumericLiteral(name, upper=below[0])]
    for i in range(len(gaps) - 1):
        lits.append(NumericLiteral(name, lower=above[i], upper=below[i + 1]))
    lits.append(NumericLiteral(name, lower=above[-1]))
    return lits


def binarize(d: Dataset, bins_per_numeric: int = 4, mode: str = "quantile") -> BinarizedDataset:
    """One column per literal; columns covering no row or every row are dropped."""
    if d.n < 1:
        raise DataError("cannot binarize an empty dataset")
    if bins_per_numeric < 1:
        raise ValueError("bins_per_numeric must be >= 1")
    lits: list[Literal] = []
    for j, a in enumerate(d.schema.attributes):
        col = d.columns[j]
        if a.is_numeric:
            if np.isnan(col).all():
                raise DataError(f"attribute {a.name!r}: all values missing")
            lits.extend(numeric_literals(a.name, col, bins_per_numeric, mode))
        else:
            if (col < 0).all():
                raise DataError(f"attribute {a.name!r}: all values missing")
            lits.extend(CategoricalLiteral(a.name, c) for c in a.categories)
    kept, cols = [], []
    for lit in lits:
        m = lit.mask(d)
        s = int(m.sum())
        if 0 < s < d.n:
            kept.append(lit)
            cols.append(m)
    bits = np.column_stack(cols) if cols else np.zeros((d.n, 0), dtype=bool)
    bits.setflags(write=False)
    return BinarizedDataset(tuple(kept), bits, d)


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    seed: int
    k: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)

    def splits(self):
        for f in range(self.k):
            yield self.train_index(f), self.test_index(f)


def stratified_folds(d: Dataset, k: int, seed: int = 0) -> FoldAssignment:
    if k < 2:
        raise DataError("need at least 2 folds")
    if k > min(d.n_pos, d.n_neg):
        raise DataError(
            f"{k} folds exceed the smaller class size ({d.n_pos} positive, {d.n_neg} negative)")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(d.n, dtype=np.int64)
    start = 0
    for cls in (1, -1):
        idx = np.flatnonzero(d.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = (np.arange(idx.size) + start) % k
        start = (start + idx.size) % k
    fold_of.setflags(write=False)
    return FoldAssignment(fold_of, seed, k)
