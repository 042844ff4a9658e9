"""Tabular dataset handling: loading, column transforms, and carving.

Numeric columns are min-max scaled to [0, 1] from training statistics,
categorical columns are ordinally encoded with a reserved code of -1 for
tokens unseen at fit time, and missing numeric cells are either filled
with a constant (in scaled units) or left as NaN for native routing by
the tree engine.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

FORMAT_VERSION = 1

NUMERIC = "numeric"
CATEGORICAL = "categorical"

RESERVED_CODE = -1.0  # encoder output for unseen or missing categorical cells
DEFAULT_MISSING_FILL = 1.0  # scaled units, i.e. the top of the training range


class DataError(ValueError):
    """Raised for malformed input data or contract violations."""


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns plus the label and optional time column."""

    columns: tuple[tuple[str, str], ...]
    label_column: str
    time_column: Optional[str] = None

    def __post_init__(self):
        if not self.columns:
            raise DataError("schema needs at least one feature column")
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate feature column names")
        for name, kind in self.columns:
            if kind not in (NUMERIC, CATEGORICAL):
                raise DataError(f"unknown column kind {kind!r} for {name!r}")
        if self.label_column in names:
            raise DataError("label column listed among feature columns")
        if self.time_column is not None and self.time_column in names:
            raise DataError("time column listed among feature columns")

    @property
    def feature_names(self) -> list[str]:
        return [name for name, _ in self.columns]

    @property
    def n_features(self) -> int:
        return len(self.columns)

    def kind_of(self, index: int) -> str:
        return self.columns[index][1]

    def numeric_indices(self) -> list[int]:
        return [i for i, (_, k) in enumerate(self.columns) if k == NUMERIC]

    def categorical_indices(self) -> list[int]:
        return [i for i, (_, k) in enumerate(self.columns) if k == CATEGORICAL]

    def csv_header(self) -> list[str]:
        header = self.feature_names + [self.label_column]
        if self.time_column is not None:
            header.append(self.time_column)
        return header

    def fingerprint(self) -> str:
        blob = json.dumps(
            {"columns": list(self.columns), "label": self.label_column},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "label_column": self.label_column,
            "time_column": self.time_column,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureSchema":
        cols = tuple((c["name"], c["kind"]) for c in obj["columns"])
        return cls(cols, obj["label_column"], obj.get("time_column"))

    def all_numeric(self) -> "FeatureSchema":
        """Schema of the same columns after encoding, every kind numeric."""
        cols = tuple((name, NUMERIC) for name, _ in self.columns)
        return FeatureSchema(cols, self.label_column, self.time_column)


def load_schema(path: str | Path) -> FeatureSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def save_schema(schema: FeatureSchema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class Dataset:
    """Column-major table: one array per feature column.

    Numeric columns are float64 with NaN for missing cells.  Categorical
    columns are object arrays of tokens with None for missing until they
    are encoded, after which they are float64 code arrays.
    """

    schema: FeatureSchema
    columns: list[np.ndarray]
    labels: np.ndarray
    time_index: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.labels)
        if len(self.columns) != self.schema.n_features:
            raise DataError("column count does not match schema")
        for col in self.columns:
            if len(col) != n:
                raise DataError("row count differs between columns and labels")
        if self.time_index is not None:
            if len(self.time_index) != n:
                raise DataError("time index length mismatch")
            if n > 1 and np.any(np.diff(self.time_index) < 0):
                raise DataError("time index must be sorted non-decreasing")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    def take(self, indices: np.ndarray | Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.schema,
            [col[idx] for col in self.columns],
            self.labels[idx],
            None if self.time_index is None else self.time_index[idx],
        )

    def feature_matrix(self) -> np.ndarray:
        """Stack columns into a float64 (n_rows, n_features) matrix.

        Categorical columns must be encoded first.
        """
        out = np.empty((self.n_rows, self.schema.n_features), dtype=np.float64)
        for j, col in enumerate(self.columns):
            if col.dtype == object:
                raise DataError(
                    f"column {self.schema.feature_names[j]!r} is not encoded yet"
                )
            out[:, j] = col
        return out

    def copy(self) -> "Dataset":
        return Dataset(
            self.schema,
            [col.copy() for col in self.columns],
            self.labels.copy(),
            None if self.time_index is None else self.time_index.copy(),
        )


def _parse_numeric(text: str, column: str, row: int) -> float:
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"numeric parse failure in column {column!r} at data row {row}: {text!r}"
        ) from None


def load_csv(path: str | Path, schema: FeatureSchema) -> Dataset:
    """Read a CSV file against a schema.

    The header row must equal the schema's feature names in order,
    followed by the label column and, if declared, the time column.
    Empty cells are missing; labels must be 0 or 1.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    expected = schema.csv_header()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file: no header row") from None
        if header != expected:
            raise DataError(
                f"header mismatch: expected {expected}, found {header}"
            )
        rows = list(reader)

    n = len(rows)
    d = schema.n_features
    has_time = schema.time_column is not None
    width = d + 1 + (1 if has_time else 0)

    raw_cols: list[list] = [[] for _ in range(d)]
    labels = np.empty(n, dtype=np.int8)
    time_vals = np.empty(n, dtype=np.int64) if has_time else None

    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"row {i} has {len(row)} cells, expected {width}")
        for j in range(d):
            cell = row[j]
            if schema.kind_of(j) == NUMERIC:
                raw_cols[j].append(_parse_numeric(cell, schema.feature_names[j], i))
            else:
                raw_cols[j].append(None if cell == "" else cell)
        label_text = row[d].strip()
        if label_text not in ("0", "1"):
            raise DataError(f"non-binary label at data row {i}: {label_text!r}")
        labels[i] = int(label_text)
        if has_time:
            try:
                time_vals[i] = int(float(row[d + 1]))
            except ValueError:
                raise DataError(f"bad time value at data row {i}: {row[d+1]!r}") from None

    columns = []
    for j in range(d):
        if schema.kind_of(j) == NUMERIC:
            columns.append(np.array(raw_cols[j], dtype=np.float64))
        else:
            columns.append(np.array(raw_cols[j], dtype=object))
    return Dataset(schema, columns, labels, time_vals)


def save_csv(data: Dataset, path: str | Path) -> None:
    """Write a dataset back to CSV; floats use repr so reloads are exact."""
    schema = data.schema
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.csv_header())
        for i in range(data.n_rows):
            row = []
            for j, col in enumerate(data.columns):
                cell = col[i]
                if col.dtype == object:
                    row.append("" if cell is None else str(cell))
                else:
                    row.append("" if math.isnan(cell) else repr(float(cell)))
            row.append(str(int(data.labels[i])))
            if data.time_index is not None:
                row.append(str(int(data.time_index[i])))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# column transforms


@dataclass
class ScalerState:
    """Per numeric column (min, max) observed on training data."""

    bounds: dict[str, tuple[float, float]]
    degenerate: set[str] = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "degenerate": sorted(self.degenerate),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ScalerState":
        return cls(
            {k: (float(v[0]), float(v[1])) for k, v in obj["bounds"].items()},
            set(obj["degenerate"]),
        )


def fit_scaler(train: Dataset) -> ScalerState:
    """Record per numeric column (min, max), ignoring missing cells.

    A column with min == max, or one that is entirely missing, is flagged
    degenerate; apply_scaler maps it to 0.
    """
    if train.n_rows == 0:
        raise DataError("cannot fit scaler on empty dataset")
    bounds: dict[str, tuple[float, float]] = {}
    degenerate: set[str] = set()
    for j in train.schema.numeric_indices():
        name = train.schema.feature_names[j]
        col = train.columns[j]
        present = col[~np.isnan(col)]
        if present.size == 0:
            bounds[name] = (0.0, 0.0)
            degenerate.add(name)
            continue
        lo, hi = float(present.min()), float(present.max())
        bounds[name] = (lo, hi)
        if lo == hi:
            degenerate.add(name)
    return ScalerState(bounds, degenerate)


def apply_scaler(state: ScalerState, data: Dataset) -> Dataset:
    """Map numeric cells to (x - min) / (max - min), clipped to [0, 1].

    Degenerate columns map to 0; missing cells stay missing.
    """
    expected = {data.schema.feature_names[j] for j in data.schema.numeric_indices()}
    if set(state.bounds) != expected:
        raise DataError("scaler state does not cover the dataset's numeric columns")
    out = data.copy()
    for j in data.schema.numeric_indices():
        name = data.schema.feature_names[j]
        col = out.columns[j]
        if name in state.degenerate:
            scaled = np.where(np.isnan(col), np.nan, 0.0)
        else:
            lo, hi = state.bounds[name]
            scaled = np.clip((col - lo) / (hi - lo), 0.0, 1.0)
        out.columns[j] = scaled
    return out


@dataclass
class EncoderState:
    """Per categorical column token -> ordinal code, unseen mapping to -1."""

    mappings: dict[str, dict[str, int]]
    reserved_code: int = -1

    def to_dict(self) -> dict:
        return {"mappings": self.mappings, "reserved_code": self.reserved_code}

    @classmethod
    def from_dict(cls, obj: dict) -> "EncoderState":
        return cls(
            {k: {t: int(c) for t, c in v.items()} for k, v in obj["mappings"].items()},
            int(obj["reserved_code"]),
        )


def fit_encoder(train: Dataset) -> EncoderState:
    """Assign codes 0..k-1 to each column's distinct tokens, sorted lexicographically."""
    if train.n_rows == 0:
        raise DataError("cannot fit encoder on empty dataset")
    mappings: dict[str, dict[str, int]] = {}
    for j in train.schema.categorical_indices():
        name = train.schema.feature_names[j]
        tokens = sorted({t for t in train.columns[j] if t is not None})
        mappings[name] = {t: c for c, t in enumerate(tokens)}
    return EncoderState(mappings)


def apply_encoder(state: EncoderState, data: Dataset) -> Dataset:
    """Replace tokens by their codes; unseen and missing tokens become -1."""
    expected = {data.schema.feature_names[j] for j in data.schema.categorical_indices()}
    if set(state.mappings) != expected:
        raise DataError("encoder state does not cover the dataset's categorical columns")
    out = data.copy()
    for j in data.schema.categorical_indices():
        name = data.schema.feature_names[j]
        mapping = state.mappings[name]
        col = data.columns[j]
        codes = np.full(len(col), float(state.reserved_code), dtype=np.float64)
        for i, token in enumerate(col):
            if token is not None:
                codes[i] = mapping.get(token, state.reserved_code)
        out.columns[j] = codes
    return out


def replace_missing(data: Dataset, fill: float = DEFAULT_MISSING_FILL) -> Dataset:
    """Fill missing numeric cells with a constant (scaled units)."""
    out = data.copy()
    for j in data.schema.numeric_indices():
        col = out.columns[j]
        col[np.isnan(col)] = fill
    return out


# ---------------------------------------------------------------------------
# fitted transform bundle

MISSING_FILL = "fill"
MISSING_NATIVE = "native"


@dataclass
class TransformState:
    """Everything fitted on a training split, applicable to any split."""

    schema: FeatureSchema
    scaler: ScalerState
    encoder: EncoderState
    missing_policy: str = MISSING_FILL
    missing_fill: float = DEFAULT_MISSING_FILL

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "treeboost-transform-state",
            "schema": self.schema.to_dict(),
            "scaler": self.scaler.to_dict(),
            "encoder": self.encoder.to_dict(),
            "missing_policy": self.missing_policy,
            "missing_fill": self.missing_fill,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TransformState":
        if obj.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported state file version: {obj.get('format_version')}")
        return cls(
            FeatureSchema.from_dict(obj["schema"]),
            ScalerState.from_dict(obj["scaler"]),
            EncoderState.from_dict(obj["encoder"]),
            obj["missing_policy"],
            float(obj["missing_fill"]),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "TransformState":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_transforms(
    train: Dataset,
    missing_policy: str = MISSING_FILL,
    missing_fill: float = DEFAULT_MISSING_FILL,
) -> TransformState:
    if missing_policy not in (MISSING_FILL, MISSING_NATIVE):
        raise DataError(f"unknown missing policy {missing_policy!r}")
    return TransformState(
        train.schema,
        fit_scaler(train),
        fit_encoder(train),
        missing_policy,
        missing_fill,
    )


def apply_transforms(state: TransformState, data: Dataset) -> Dataset:
    """Scale, encode and missing-fill; the result carries the all-numeric
    schema since every cell is a number afterwards."""
    out = apply_scaler(state.scaler, data)
    out = apply_encoder(state.encoder, out)
    if state.missing_policy == MISSING_FILL:
        out = replace_missing(out, state.missing_fill)
    return Dataset(
        state.schema.all_numeric(), out.columns, out.labels, out.time_index
    )


def prepare_fold(
    train: Dataset,
    test: Dataset,
    missing_policy: str = MISSING_FILL,
    missing_fill: float = DEFAULT_MISSING_FILL,
) -> tuple[Dataset, Dataset, TransformState]:
    """Fit transforms on the training split only and apply to both splits."""
    state = fit_transforms(train, missing_policy, missing_fill)
    return apply_transforms(state, train), apply_transforms(state, test), state


# ---------------------------------------------------------------------------
# carving


def time_split(data: Dataset, split_point: int) -> tuple[Dataset, Dataset]:
    """Rows with time index strictly before the split point go to train."""
    if data.time_index is None:
        raise DataError("time_split requires a time index")
    mask = data.time_index < split_point
    n_train = int(mask.sum())
    if n_train == 0:
        raise DataError("empty train partition")
    if n_train == data.n_rows:
        raise DataError("empty test partition")
    idx = np.arange(data.n_rows)
    return data.take(idx[mask]), data.take(idx[~mask])


def time_split_fraction(data: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """Split at the time value separating the first train_fraction of rows."""
    if data.time_index is None:
        raise DataError("time_split requires a time index")
    cut = int(round(data.n_rows * train_fraction))
    cut = min(max(cut, 1), data.n_rows - 1)
    return time_split(data, int(data.time_index[cut]))


def stratified_subset(
    data: Dataset, size: int, pos_fraction: float, seed: int
) -> Dataset:
    """Draw an exact-size subset with round(size * pos_fraction) positives.

    Rows are drawn uniformly without replacement per class; the original
    (time) order of the selected rows is preserved.
    """
    n_pos_wanted = int(round(size * pos_fraction))
    n_neg_wanted = size - n_pos_wanted
    pos_idx = np.flatnonzero(data.labels == 1)
    neg_idx = np.flatnonzero(data.labels == 0)
    if n_pos_wanted > len(pos_idx):
        raise DataError(
            f"need {n_pos_wanted} positives, dataset has {len(pos_idx)}"
        )
    if n_neg_wanted > len(neg_idx):
        raise DataError(
            f"need {n_neg_wanted} negatives, dataset has {len(neg_idx)}"
        )
    rng = np.random.default_rng(seed)
    chosen_pos = rng.choice(pos_idx, size=n_pos_wanted, replace=False)
    chosen_neg = rng.choice(neg_idx, size=n_neg_wanted, replace=False)
    chosen = np.sort(np.concatenate([chosen_pos, chosen_neg]))
    return data.take(chosen)
