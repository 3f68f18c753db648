"""Dataset ingestion, schema declaration, and seeded synthesis of
complementary-feature observations.

A *complementary feature* (CF) is a categorical column whose cells are
observed only as a value the feature is NOT.  Ordinary features (OFs) are
observed exactly.  Category codes are 1-based integers in vocabulary
order; instance indices are 0-based.

Schema files are flat text, one column per line::

    <name> = <kind> <role> [<v1>|<v2>|...]

where kind is one of ``quantitative``, ``binary``, ``categorical`` and
role is one of ``OF``, ``CF``, ``label``.  The trailing ``|``-joined
vocabulary is optional for non-quantitative columns; when absent it is
inferred from the data, sorted lexicographically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DataError,
    MissingColumnError,
    MissingTruthError,
    ParseError,
    UnknownCategoryError,
)

KINDS = ("quantitative", "binary", "categorical")
ROLES = ("OF", "CF", "label")

# Stream tags keep independent counter-based draws from colliding.
STREAM_OBSERVE = 0  # synthesize_cf
STREAM_GUESS = 1    # baseline hard estimates


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    role: str
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown kind {self.kind!r} for column {self.name!r}")
        if self.role not in ROLES:
            raise DataError(f"unknown role {self.role!r} for column {self.name!r}")

    @property
    def size(self) -> int:
        """Number of category codes (0 for quantitative columns)."""
        return len(self.vocabulary)

    def code(self, value: str) -> int:
        try:
            return self.vocabulary.index(value) + 1
        except ValueError:
            raise UnknownCategoryError(
                f"value {value!r} not in vocabulary of column {self.name!r}",
                column=self.name,
            ) from None


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column declarations for one dataset."""

    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        labels = [c for c in self.columns if c.role == "label"]
        if len(labels) != 1:
            raise DataError(f"schema must have exactly one label column, got {len(labels)}")
        for c in self.columns:
            if c.role == "CF" and c.kind != "categorical":
                raise DataError(f"CF column {c.name!r} must be categorical")
            if c.vocabulary and len(set(c.vocabulary)) != len(c.vocabulary):
                raise DataError(f"duplicate vocabulary entries in column {c.name!r}")
            if c.kind == "quantitative" and c.vocabulary:
                raise DataError(f"quantitative column {c.name!r} cannot have a vocabulary")

    def validate_complete(self):
        """Check invariants that need filled-in vocabularies."""
        for c in self.columns:
            if c.kind == "quantitative":
                continue
            if not c.vocabulary:
                raise DataError(f"column {c.name!r} has no vocabulary")
            if c.kind == "binary" and len(c.vocabulary) != 2:
                raise DataError(f"binary column {c.name!r} needs exactly 2 values")
            if c.role == "CF" and len(c.vocabulary) < 3:
                # With only two values, the complement pins down the exact
                # value and there is nothing to estimate.
                raise DataError(f"CF column {c.name!r} needs at least 3 values")

    @property
    def of_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.role == "OF")

    @property
    def cf_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.role == "CF")

    @property
    def label_column(self) -> Column:
        return next(c for c in self.columns if c.role == "label")

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"no column named {name!r}")

    def with_vocabulary(self, name: str, vocabulary: tuple[str, ...]) -> "FeatureSchema":
        cols = tuple(
            replace(c, vocabulary=tuple(vocabulary)) if c.name == name else c
            for c in self.columns
        )
        return FeatureSchema(cols)


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Column-typed table with optional hidden CF ground truth.

    ``of_values`` holds one array per OF column in schema order: float64
    for quantitative columns, 1-based int64 codes otherwise.
    ``cf_observed`` / ``cf_truth`` are (n, F_c) code arrays; either may
    be None.  All arrays are frozen after construction.
    """

    schema: FeatureSchema
    of_values: tuple[np.ndarray, ...]
    labels: np.ndarray
    cf_truth: np.ndarray | None = None
    cf_observed: np.ndarray | None = None

    def __post_init__(self):
        self.schema.validate_complete()
        object.__setattr__(self, "of_values", tuple(_freeze(a) for a in self.of_values))
        object.__setattr__(self, "labels", _freeze(np.asarray(self.labels, dtype=np.int64)))
        n = self.labels.shape[0]
        for arr, col in zip(self.of_values, self.schema.of_columns, strict=True):
            if arr.shape != (n,):
                raise DataError(f"column {col.name!r} has {arr.shape[0]} rows, expected {n}")
            if col.kind != "quantitative":
                _check_codes(arr, col)
        lab = self.schema.label_column
        _check_codes(self.labels, lab)
        f_c = len(self.schema.cf_columns)
        for attr in ("cf_truth", "cf_observed"):
            val = getattr(self, attr)
            if val is None:
                continue
            val = _freeze(np.asarray(val, dtype=np.int64))
            if val.shape != (n, f_c):
                raise DataError(f"{attr} has shape {val.shape}, expected {(n, f_c)}")
            for j, col in enumerate(self.schema.cf_columns):
                _check_codes(val[:, j], col)
            object.__setattr__(self, attr, val)
        if self.cf_truth is not None and self.cf_observed is not None:
            if np.any(self.cf_truth == self.cf_observed):
                raise DataError("cf_observed may never equal cf_truth")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    def of_array(self, name: str) -> np.ndarray:
        for arr, col in zip(self.of_values, self.schema.of_columns):
            if col.name == name:
                return arr
        raise DataError(f"no OF column named {name!r}")

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            schema=self.schema,
            of_values=tuple(a[idx] for a in self.of_values),
            labels=self.labels[idx],
            cf_truth=None if self.cf_truth is None else self.cf_truth[idx],
            cf_observed=None if self.cf_observed is None else self.cf_observed[idx],
        )


def _check_codes(arr: np.ndarray, col: Column):
    if arr.size and (arr.min() < 1 or arr.max() > col.size):
        raise DataError(f"codes out of range 1..{col.size} in column {col.name!r}")


# ---------------------------------------------------------------------------
# Schema file I/O


def load_schema(path) -> FeatureSchema:
    columns = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"schema line {lineno}: missing '='", row=lineno)
            name, rest = line.split("=", 1)
            parts = rest.strip().split(None, 2)
            if len(parts) < 2:
                raise ParseError(f"schema line {lineno}: need '<kind> <role>'", row=lineno)
            kind, role = parts[0], parts[1]
            vocab = tuple(parts[2].split("|")) if len(parts) == 3 else ()
            columns.append(Column(name.strip(), kind, role, vocab))
    return FeatureSchema(tuple(columns))


def save_schema(schema: FeatureSchema, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in schema.columns:
            vocab = "|".join(c.vocabulary)
            line = f"{c.name} = {c.kind} {c.role}"
            if vocab:
                line += f" {vocab}"
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# CSV I/O


def load_csv(path, schema: FeatureSchema) -> Dataset:
    """Read an RFC-4180 CSV (UTF-8, header required) against ``schema``.

    Raw values of CF columns populate ``cf_truth``; ``cf_observed`` is
    left unset until :func:`synthesize_cf`.  Columns in the file but not
    in the schema are ignored.  Missing-value tokens such as ``?`` are
    ordinary vocabulary entries.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: header row required") from None
        rows = list(reader)

    positions = {}
    for col in schema.columns:
        if col.name not in header:
            raise MissingColumnError(f"column {col.name!r} missing from CSV header")
        positions[col.name] = header.index(col.name)

    # Infer vocabularies left open by the schema (sorted for determinism).
    for col in schema.columns:
        if col.kind != "quantitative" and not col.vocabulary:
            seen = sorted({row[positions[col.name]] for row in rows})
            schema = schema.with_vocabulary(col.name, tuple(seen))
    schema.validate_complete()

    n = len(rows)
    of_values = []
    for col in schema.of_columns:
        pos = positions[col.name]
        if col.kind == "quantitative":
            out = np.empty(n, dtype=np.float64)
            for i, row in enumerate(rows):
                try:
                    out[i] = float(row[pos])
                except (ValueError, IndexError):
                    raise ParseError(
                        f"row {i}: cannot parse {row[pos]!r} as a number "
                        f"in column {col.name!r}",
                        row=i, column=col.name,
                    ) from None
                if not math.isfinite(out[i]):
                    raise ParseError(
                        f"row {i}: non-finite value in column {col.name!r}",
                        row=i, column=col.name,
                    )
        else:
            out = _encode_column(rows, pos, col)
        of_values.append(out)

    cf_cols = schema.cf_columns
    cf_truth = None
    if cf_cols:
        cf_truth = np.column_stack(
            [_encode_column(rows, positions[c.name], c) for c in cf_cols]
        )
    labels = _encode_column(rows, positions[schema.label_column.name], schema.label_column)
    return Dataset(schema=schema, of_values=tuple(of_values), labels=labels, cf_truth=cf_truth)


def _encode_column(rows, pos, col: Column) -> np.ndarray:
    out = np.empty(len(rows), dtype=np.int64)
    lookup = {v: i + 1 for i, v in enumerate(col.vocabulary)}
    for i, row in enumerate(rows):
        try:
            out[i] = lookup[row[pos]]
        except KeyError:
            raise UnknownCategoryError(
                f"row {i}: value {row[pos]!r} not in vocabulary of column {col.name!r}",
                row=i, column=col.name,
            ) from None
        except IndexError:
            raise ParseError(f"row {i}: too few cells", row=i, column=col.name) from None
    return out


def write_csv(ds: Dataset, path, observed_columns: bool = False):
    """Write the dataset back to CSV in schema column order.

    CF cells hold the ground-truth values, so ``load_csv`` on the output
    reproduces the dataset.  With ``observed_columns=True`` an extra
    ``<name>__observed`` column per CF is appended.
    """
    schema = ds.schema
    header = [c.name for c in schema.columns]
    cf_names = [c.name for c in schema.cf_columns]
    if observed_columns:
        if ds.cf_observed is None:
            raise MissingTruthError("no observed CF values to write")
        header += [f"{name}__observed" for name in cf_names]
    if any(c.role == "CF" for c in schema.columns) and ds.cf_truth is None:
        raise MissingTruthError("dataset has no CF ground truth to write")

    of_lookup = {c.name: i for i, c in enumerate(schema.of_columns)}
    cf_lookup = {name: j for j, name in enumerate(cf_names)}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = []
            for col in schema.columns:
                if col.role == "OF":
                    val = ds.of_values[of_lookup[col.name]][i]
                    row.append(repr(float(val)) if col.kind == "quantitative"
                               else col.vocabulary[int(val) - 1])
                elif col.role == "CF":
                    row.append(col.vocabulary[int(ds.cf_truth[i, cf_lookup[col.name]]) - 1])
                else:
                    row.append(col.vocabulary[int(ds.labels[i]) - 1])
            if observed_columns:
                for name in cf_names:
                    col = schema.column(name)
                    row.append(col.vocabulary[int(ds.cf_observed[i, cf_lookup[name]]) - 1])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Counter-based complement draws
#
# Draws depend only on (seed, instance, feature, stream), never on call
# order, so synthesis is reproducible and parallelizable.  The mixer is
# the SplitMix64 finalizer; modulo bias over <= 64 categories is ~2^-58.

_M = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def complement_draws(seed: int, indices: np.ndarray, j: int, u: int,
                     avoid: np.ndarray, stream: int) -> np.ndarray:
    """Uniform draws from ``{1..u} \\ {avoid[i]}``, keyed per (seed, i, j)."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _mix64(np.uint64(stream) + _GOLDEN)
        z = _mix64(z + idx * _GOLDEN)
        z = _mix64(z ^ ((np.uint64(j) + np.uint64(1)) * np.uint64(0xD1B54A32D192ED03)))
    r = (z % np.uint64(u - 1)).astype(np.int64) + 1
    return np.where(r < avoid, r, r + 1)


def synthesize_cf(ds: Dataset, seed: int) -> Dataset:
    """Draw observed CF values uniformly from the complement of the truth.

    Same seed gives bit-identical output regardless of evaluation order.
    """
    if ds.cf_truth is None:
        raise MissingTruthError("synthesize_cf needs cf_truth on every CF column")
    idx = np.arange(ds.n)
    observed = np.empty_like(ds.cf_truth)
    for j, col in enumerate(ds.schema.cf_columns):
        observed[:, j] = complement_draws(
            seed, idx, j, col.size, ds.cf_truth[:, j], STREAM_OBSERVE
        )
    return Dataset(
        schema=ds.schema,
        of_values=ds.of_values,
        labels=ds.labels,
        cf_truth=ds.cf_truth,
        cf_observed=observed,
    )


def split_train_test(ds: Dataset, fraction: float, seed: int):
    """Seeded disjoint split; the train side gets ``floor(fraction * n)``."""
    if ds.n < 2:
        raise DataError("need at least 2 instances to split")
    if not 0.0 < fraction < 1.0:
        raise DataError("fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_train = int(fraction * ds.n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])
