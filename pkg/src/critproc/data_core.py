"""Tabular run data: schema, CSV I/O, splitting and one-hot encoding.

A run table is a fixed-schema, column-major table. Numeric cells are
float64, categorical cells are strings, vector cells are fixed-length
float64 blocks stored in CSV as ``name_1 .. name_len``. Tables are
immutable after construction; every transformation returns a new table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadVectorLength,
    ClassTooSmall,
    ColumnAlreadyPresent,
    InvalidConfig,
    MissingColumn,
    MissingRows,
    NonFiniteValue,
    TypeMismatch,
)

KINDS = ("numeric", "categorical", "numeric_vector")
ROLES = ("input", "output", "meta")

# 17 significant digits round-trips any IEEE double exactly.
_FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    return _FLOAT_FMT % x


@dataclass(frozen=True)
class ColumnSpec:
    """One column declaration: name, kind and pipeline role."""

    name: str
    kind: str
    role: str
    length: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown column kind {self.kind!r}")
        if self.role not in ROLES:
            raise InvalidConfig(f"unknown column role {self.role!r}")
        if self.kind == "numeric_vector":
            if self.length is None or self.length < 1:
                raise InvalidConfig(
                    f"vector column {self.name!r} needs a declared length >= 1")
        elif self.length is not None:
            raise InvalidConfig(f"scalar column {self.name!r} must not declare a length")

    def csv_fields(self) -> list[str]:
        """CSV header fields this column occupies."""
        if self.kind == "numeric_vector":
            return [f"{self.name}_{i + 1}" for i in range(self.length)]
        return [self.name]


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InvalidConfig("duplicate column names in schema")
        for c in self.columns:
            if c.role == "output" and c.kind != "numeric":
                raise InvalidConfig(
                    f"output column {c.name!r} must be numeric; outputs form "
                    "the clustering feature space")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise MissingColumn(f"schema has no column {name!r}")

    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def by_role(self, role: str) -> list[ColumnSpec]:
        return [c for c in self.columns if c.role == role]

    def csv_header(self) -> list[str]:
        out: list[str] = []
        for c in self.columns:
            out.extend(c.csv_fields())
        return out

    def with_column(self, spec: ColumnSpec) -> "Schema":
        if any(c.name == spec.name for c in self.columns):
            raise ColumnAlreadyPresent(spec.name)
        return Schema(self.columns + (spec,))

    def to_json(self) -> str:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind, "role": c.role}
            if c.length is not None:
                d["len"] = c.length
            cols.append(d)
        return json.dumps({"columns": cols}, indent=2)

    @staticmethod
    def from_json(text: str) -> "Schema":
        try:
            doc = json.loads(text)
            cols = tuple(
                ColumnSpec(d["name"], d["kind"], d["role"], d.get("len"))
                for d in doc["columns"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"malformed schema document: {exc}") from exc
        return Schema(cols)


class RunTable:
    """Immutable column-major table conforming to a Schema."""

    def __init__(self, schema: Schema, data: dict[str, object], n_rows: int):
        self.schema = schema
        self.n_rows = n_rows
        self._data = data
        for c in schema.columns:
            col = data[c.name]
            if c.kind == "categorical":
                if len(col) != n_rows:
                    raise BadVectorLength(f"column {c.name!r} has wrong row count")
            else:
                arr = np.asarray(col, dtype=np.float64)
                want = (n_rows,) if c.kind == "numeric" else (n_rows, c.length)
                if arr.shape != want:
                    raise BadVectorLength(
                        f"column {c.name!r}: shape {arr.shape}, want {want}")
                if not np.all(np.isfinite(arr)):
                    bad = np.argwhere(~np.isfinite(np.atleast_2d(arr)))
                    raise NonFiniteValue(int(bad[0][0]), c.name)
                arr.setflags(write=False)
                data[c.name] = arr

    def column(self, name: str):
        self.schema.column(name)
        return self._data[name]

    def output_matrix(self) -> np.ndarray:
        """Rows x outputs matrix over the role=output columns, schema order."""
        cols = [self._data[c.name] for c in self.schema.by_role("output")]
        if not cols:
            raise MissingColumn("schema declares no output columns")
        return np.column_stack(cols)

    def take(self, indices) -> "RunTable":
        idx = np.asarray(indices, dtype=np.intp)
        data: dict[str, object] = {}
        for c in self.schema.columns:
            col = self._data[c.name]
            if c.kind == "categorical":
                data[c.name] = [col[i] for i in idx]
            else:
                data[c.name] = np.array(col)[idx]
        return RunTable(self.schema, data, len(idx))

    def with_column(self, spec: ColumnSpec, values) -> "RunTable":
        schema = self.schema.with_column(spec)
        data = dict(self._data)
        data[spec.name] = values if spec.kind == "categorical" else np.asarray(
            values, dtype=np.float64)
        return RunTable(schema, data, self.n_rows)

    # -- CSV ------------------------------------------------------------

    def to_csv(self, fileobj) -> None:
        w = csv.writer(fileobj, lineterminator="\n")
        w.writerow(self.schema.csv_header())
        cols = self.schema.columns
        for i in range(self.n_rows):
            row: list[str] = []
            for c in cols:
                v = self._data[c.name]
                if c.kind == "categorical":
                    row.append(v[i])
                elif c.kind == "numeric":
                    row.append(format_float(v[i]))
                else:
                    row.extend(format_float(x) for x in v[i])
            w.writerow(row)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _parse_cell(raw: str, row: int, col: str) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise TypeMismatch(row, col, raw) from None
    if not math.isfinite(x):
        raise NonFiniteValue(row, col)
    return x


def load_csv(fileobj, schema: Schema) -> RunTable:
    """Parse a delimited file against a schema.

    Raises MissingColumn / BadVectorLength for header defects,
    TypeMismatch / NonFiniteValue (with row and column) for cell defects,
    and MissingRows for a header-only file. Extra columns are ignored.
    Row order is preserved.
    """
    reader = csv.reader(fileobj)
    try:
        header = next(reader)
    except StopIteration:
        raise MissingRows("empty file") from None
    pos = {name: i for i, name in enumerate(header)}

    layout: list[tuple[ColumnSpec, list[int]]] = []
    for c in schema.columns:
        fields = c.csv_fields()
        present = [f for f in fields if f in pos]
        if not present:
            raise MissingColumn(c.name)
        if len(present) != len(fields):
            raise BadVectorLength(
                f"column {c.name!r}: {len(present)} of {len(fields)} "
                "vector fields present")
        layout.append((c, [pos[f] for f in fields]))

    rows = list(reader)
    if not rows:
        raise MissingRows("no data rows")

    data: dict[str, object] = {}
    for c, _ in layout:
        data[c.name] = [] if c.kind == "categorical" else None
    numeric: dict[str, list] = {c.name: [] for c, _ in layout if c.kind != "categorical"}

    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise TypeMismatch(r, "<row>", f"{len(row)} fields, header has {width}")
        for c, idxs in layout:
            if c.kind == "categorical":
                raw = row[idxs[0]]
                if raw == "":
                    raise TypeMismatch(r, c.name, raw)
                data[c.name].append(raw)
            elif c.kind == "numeric":
                numeric[c.name].append(_parse_cell(row[idxs[0]], r, c.name))
            else:
                numeric[c.name].append(
                    [_parse_cell(row[j], r, c.name) for j in idxs])

    for name, vals in numeric.items():
        data[name] = np.asarray(vals, dtype=np.float64)
    return RunTable(schema, data, len(rows))


def load_csv_path(path, schema: Schema) -> RunTable:
    with open(path, newline="") as f:
        return load_csv(f, schema)


# -- train/test split ---------------------------------------------------

def split(table: RunTable, test_ratio: float, seed: int,
          stratify_labels=None) -> tuple[RunTable, RunTable, np.ndarray, np.ndarray]:
    """Disjoint train/test split with |test| = floor(n * test_ratio).

    With ``stratify_labels`` (one label per row) the test side holds each
    class's proportional share within one row, apportioned by largest
    remainder. Returns (train, test, train_indices, test_indices); index
    arrays are ascending, so row order survives the split.
    """
    if not 0.0 <= test_ratio < 1.0:
        raise InvalidConfig(f"test_ratio {test_ratio} outside [0, 1)")
    n = table.n_rows
    n_test = int(math.floor(n * test_ratio))
    rng = np.random.default_rng(seed)

    if stratify_labels is None:
        perm = rng.permutation(n)
        test_idx = np.sort(perm[:n_test])
    else:
        labels = np.asarray(stratify_labels)
        if labels.shape != (n,):
            raise InvalidConfig("stratify labels must have one entry per row")
        classes, counts = np.unique(labels, return_counts=True)
        if counts.min() < 2:
            small = classes[counts.argmin()]
            raise ClassTooSmall(f"class {small!r} has {counts.min()} row(s)")
        ideal = counts * test_ratio
        base = np.floor(ideal).astype(int)
        short = n_test - int(base.sum())
        # Largest fractional remainder gets the leftover rows; ties go to
        # the lower class index so the apportionment is deterministic.
        order = np.lexsort((np.arange(len(classes)), -(ideal - base)))
        quota = base.copy()
        for j in order[:short]:
            quota[j] += 1
        picks = []
        for cls, q in zip(classes, quota):
            members = np.flatnonzero(labels == cls)
            perm = rng.permutation(len(members))
            picks.append(members[perm[:q]])
        test_idx = np.sort(np.concatenate(picks)) if picks else np.array([], dtype=int)

    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    train_idx = np.flatnonzero(mask)
    return table.take(train_idx), table.take(test_idx), train_idx, test_idx


# -- one-hot encoding -----------------------------------------------------

@dataclass
class EncodedMatrix:
    """Dense feature matrix plus the source column of every feature.

    ``groups`` maps each source column to the matrix columns it produced,
    which is what the Shapley module uses to toggle one-hot blocks as a
    unit. ``warnings`` lists categories seen at transform time that were
    absent at fit time (their block is all zeros).
    """

    X: np.ndarray
    feature_names: list[str]
    groups: list[tuple[str, list[int]]]
    warnings: list[str] = field(default_factory=list)


class ColumnEncoder:
    """Fits a column layout on one table, then maps tables to matrices."""

    def __init__(self):
        self.columns: list[str] = []
        self.vocab: dict[str, list[str]] = {}
        self.fitted = False

    def fit(self, table: RunTable, columns: list[str]) -> "ColumnEncoder":
        if not columns:
            raise InvalidConfig("no columns selected for encoding")
        for name in columns:
            spec = table.schema.column(name)
            if spec.kind == "numeric_vector":
                raise InvalidConfig(
                    f"cannot encode vector column {name!r}; engineer scalars first")
            if spec.kind == "categorical":
                self.vocab[name] = sorted(set(table.column(name)))
        self.columns = list(columns)
        self.fitted = True
        return self

    def transform(self, table: RunTable) -> EncodedMatrix:
        assert self.fitted, "encoder used before fit"
        n = table.n_rows
        blocks: list[np.ndarray] = []
        names: list[str] = []
        groups: list[tuple[str, list[int]]] = []
        warnings: list[str] = []
        at = 0
        for name in self.columns:
            spec = table.schema.column(name)
            if spec.kind == "numeric":
                blocks.append(np.asarray(table.column(name), dtype=np.float64)
                              .reshape(n, 1))
                names.append(name)
                groups.append((name, [at]))
                at += 1
            else:
                vocab = self.vocab[name]
                col = table.column(name)
                block = np.zeros((n, len(vocab)), dtype=np.float64)
                lut = {v: j for j, v in enumerate(vocab)}
                unseen = set()
                for i, v in enumerate(col):
                    j = lut.get(v)
                    if j is None:
                        unseen.add(v)
                    else:
                        block[i, j] = 1.0
                for v in sorted(unseen):
                    warnings.append(f"column {name!r}: unseen category {v!r}")
                blocks.append(block)
                names.extend(f"{name}={v}" for v in vocab)
                groups.append((name, list(range(at, at + len(vocab)))))
                at += len(vocab)
        X = np.hstack(blocks)
        return EncodedMatrix(X, names, groups, warnings)


def encode(table: RunTable, columns: list[str]) -> EncodedMatrix:
    """Fit-and-transform convenience over ColumnEncoder."""
    return ColumnEncoder().fit(table, columns).transform(table)
