"""Tabular dataset model, CSV ingestion, and bootstrap resampling.

All downstream code (encodings, rendering, judges) consumes the single
normalized representation defined here: an ordered list of attributes,
each either quantitative (float64 column) or categorical (level codes
plus an ordered level list), with no missing cells.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .rng import StreamRng

__all__ = [
    "Attribute",
    "Dataset",
    "ingest_csv",
    "serialize_csv",
    "bootstrap_resample",
]

QUANTITATIVE = "quantitative"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Attribute:
    """One named column: quantitative with an observed range, or categorical
    with an ordered, duplicate-free level list."""

    name: str
    kind: str
    observed_min: float = math.nan
    observed_max: float = math.nan
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (QUANTITATIVE, CATEGORICAL):
            raise DataError(f"unknown attribute kind {self.kind!r}")
        if self.kind == QUANTITATIVE:
            if not (math.isfinite(self.observed_min) and math.isfinite(self.observed_max)):
                raise DataError(f"attribute {self.name!r}: non-finite observed range")
            if self.observed_min > self.observed_max:
                raise DataError(f"attribute {self.name!r}: observed_min > observed_max")
        else:
            if not self.levels:
                raise DataError(f"attribute {self.name!r}: empty level list")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"attribute {self.name!r}: duplicate levels")


@dataclass(frozen=True)
class Dataset:
    """Immutable table: attributes plus columnar storage.

    Quantitative columns are float64 arrays; categorical columns store
    integer codes into the attribute's level list.  Construction checks
    the invariants (unique names, N >= 1, values inside observed ranges,
    valid codes), so a Dataset in hand is always consistent.
    """

    attributes: tuple[Attribute, ...]
    columns: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataError("duplicate attribute names")
        if set(self.columns) != set(names):
            raise DataError("columns do not match attributes")
        n = None
        for a in self.attributes:
            col = np.asarray(self.columns[a.name])
            if col.ndim != 1:
                raise DataError(f"column {a.name!r} is not 1-D")
            if n is None:
                n = col.shape[0]
            elif col.shape[0] != n:
                raise DataError("columns have differing lengths")
            if a.kind == QUANTITATIVE:
                if not np.all(np.isfinite(col)):
                    raise DataError(f"column {a.name!r} contains non-finite values")
                if col.size and (col.min() < a.observed_min or col.max() > a.observed_max):
                    raise DataError(f"column {a.name!r} outside observed range")
            else:
                if col.size and (col.min() < 0 or col.max() >= len(a.levels)):
                    raise DataError(f"column {a.name!r} has invalid level codes")
        if not n:
            raise DataError("dataset must contain at least one item")
        object.__setattr__(self, "columns", {k: np.asarray(v) for k, v in self.columns.items()})

    @property
    def n_items(self) -> int:
        return next(iter(self.columns.values())).shape[0]

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise DataError(f"no attribute named {name!r}")

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def item(self, i: int) -> dict[str, object]:
        """Row ``i`` as a name -> value mapping (levels decoded)."""
        out: dict[str, object] = {}
        for a in self.attributes:
            v = self.columns[a.name][i]
            out[a.name] = float(v) if a.kind == QUANTITATIVE else a.levels[int(v)]
        return out

    def equals(self, other: "Dataset", rel_tol: float = 0.0) -> bool:
        """Structural equality; quantitative columns compared within rel_tol."""
        if [a for a in self.attributes] != [a for a in other.attributes]:
            return False
        for a in self.attributes:
            x, y = self.columns[a.name], other.columns[a.name]
            if x.shape != y.shape:
                return False
            if a.kind == QUANTITATIVE:
                if rel_tol == 0.0:
                    if not np.array_equal(x, y):
                        return False
                else:
                    scale = np.maximum(np.abs(x), np.abs(y))
                    if not np.all(np.abs(x - y) <= rel_tol * np.maximum(scale, 1e-300)):
                        return False
            elif not np.array_equal(x, y):
                return False
        return True


def _parse_float(text: str) -> float | None:
    """float value if ``text`` parses as a real number, else None."""
    try:
        return float(text)
    except ValueError:
        return None


def _from_cells(header: list[str], rows: list[list[str]]) -> Dataset:
    """Build a Dataset from string cells using the inference rule:
    a column is quantitative iff every cell parses as a finite real."""
    ncol = len(header)
    attrs: list[Attribute] = []
    columns: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        cells = [r[j] for r in rows]
        parsed = [_parse_float(c) for c in cells]
        for i, (cell, val) in enumerate(zip(cells, parsed)):
            if val is not None and not math.isfinite(val):
                raise DataError(
                    f"non-finite numeric cell {cell!r} at row {i + 1}, column {name!r}"
                )
        if all(v is not None for v in parsed):
            col = np.array(parsed, dtype=np.float64)
            attrs.append(Attribute(name, QUANTITATIVE, float(col.min()), float(col.max())))
            columns[name] = col
        else:
            levels: list[str] = []
            index: dict[str, int] = {}
            codes = np.empty(len(cells), dtype=np.int64)
            for i, c in enumerate(cells):
                if c not in index:
                    index[c] = len(levels)
                    levels.append(c)
                codes[i] = index[c]
            attrs.append(Attribute(name, CATEGORICAL, levels=tuple(levels)))
            columns[name] = codes
    if ncol == 0:
        raise DataError("no columns")
    return Dataset(tuple(attrs), columns)


def ingest_csv(
    source,
    header: bool = True,
    delimiter: str = ",",
    missing: str = "drop_row",
) -> Dataset:
    """Parse CSV text (str, bytes, or a text/byte stream) into a Dataset.

    A column is quantitative iff every retained cell parses as a finite
    real; otherwise it is categorical with levels in first-appearance
    order.  Empty cells are missing values, handled per ``missing``:
    ``drop_row`` (default) discards the row, ``error`` raises.
    """
    if missing not in ("drop_row", "error"):
        raise DataError(f"unknown missing-value policy {missing!r}")
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    if not text.strip():
        raise DataError("empty input")

    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delimiter)
    raw_rows = [row for row in reader if row]
    if not raw_rows:
        raise DataError("empty input")

    if header:
        head, body = raw_rows[0], raw_rows[1:]
    else:
        head = [f"col{j}" for j in range(len(raw_rows[0]))]
        body = raw_rows
    ncol = len(head)

    rows: list[list[str]] = []
    for i, row in enumerate(body):
        if len(row) != ncol:
            raise DataError(f"ragged row {i + 1}: expected {ncol} cells, got {len(row)}")
        if any(c == "" for c in row):
            if missing == "error":
                j = row.index("")
                raise DataError(f"missing cell at row {i + 1}, column {head[j]!r}")
            continue
        rows.append(row)
    if not rows:
        raise DataError("all rows dropped")
    return _from_cells(head, rows)


def serialize_csv(d: Dataset, delimiter: str = ",") -> str:
    """Canonical CSV form: RFC-4180 quoting, LF line endings, quantitative
    values at 17 significant digits (exact float64 round-trip)."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow([a.name for a in d.attributes])
    for i in range(d.n_items):
        row = []
        for a in d.attributes:
            v = d.columns[a.name][i]
            row.append(format(float(v), ".17g") if a.kind == QUANTITATIVE else a.levels[int(v)])
        writer.writerow(row)
    return buf.getvalue()


def bootstrap_resample(d: Dataset, seed: int) -> Dataset:
    """Resample N items uniformly with replacement, deterministically per seed.

    Attribute observed ranges are recomputed from the resample; categorical
    level lists are kept from the source so level codes stay comparable.
    """
    n = d.n_items
    idx = StreamRng(seed).integers("bootstrap", 0, 0, n, size=n)
    attrs: list[Attribute] = []
    columns: dict[str, np.ndarray] = {}
    for a in d.attributes:
        col = d.columns[a.name][idx]
        columns[a.name] = col
        if a.kind == QUANTITATIVE:
            attrs.append(Attribute(a.name, QUANTITATIVE, float(col.min()), float(col.max())))
        else:
            attrs.append(a)
    return Dataset(tuple(attrs), columns)
