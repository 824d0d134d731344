"""Tabular dataset container and the row-level operations of the protocol.

Everything here is a pure function of its inputs and an explicit seed.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
ORDINAL = "ordinal"


class DataError(ValueError):
    """Malformed input data or mismatched schemas."""


class ConfigError(ValueError):
    """Invalid configuration (missing label column, bad schema file, ...)."""


def onehot_kind(group: str) -> str:
    return f"onehot:{group}"


@dataclass(frozen=True)
class TabularDataset:
    """Encoded numeric matrix with column metadata and optional binary labels.

    ``feature_kinds`` holds ``"numeric"``, ``"ordinal"`` or ``"onehot:<source column>"``
    per column.
    """

    values: np.ndarray
    feature_names: tuple
    feature_kinds: tuple
    labels: Optional[np.ndarray] = None
    row_ids: Optional[np.ndarray] = None
    n_dropped_missing: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("values must be a 2-D matrix")
        if not np.all(np.isfinite(values)):
            raise DataError("values contain NaN or Inf")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_kinds", tuple(self.feature_kinds))
        if len(self.feature_names) != values.shape[1] or len(self.feature_kinds) != values.shape[1]:
            raise DataError("column metadata does not match the value matrix")
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(values.shape[0], dtype=np.int64))
        else:
            object.__setattr__(self, "row_ids", np.asarray(self.row_ids, dtype=np.int64))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise DataError("labels must have one entry per row")
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be 0/1")
            object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def onehot_groups(self) -> dict:
        groups: dict = {}
        for j, kind in enumerate(self.feature_kinds):
            if kind.startswith("onehot:"):
                groups.setdefault(kind[len("onehot:"):], []).append(j)
        return groups

    def take(self, idx) -> "TabularDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            values=self.values[idx],
            labels=None if self.labels is None else self.labels[idx],
            row_ids=self.row_ids[idx],
        )

    def without_labels(self) -> "TabularDataset":
        return replace(self, labels=None)

    def drop_columns(self, names: Sequence[str]) -> "TabularDataset":
        keep = [j for j, name in enumerate(self.feature_names) if name not in set(names)]
        return replace(
            self,
            values=self.values[:, keep],
            feature_names=[self.feature_names[j] for j in keep],
            feature_kinds=[self.feature_kinds[j] for j in keep],
        )

    def same_schema(self, other: "TabularDataset") -> bool:
        return self.feature_names == other.feature_names


@dataclass(frozen=True)
class SplitPlan:
    n_splits: int = 5
    n_repeats: int = 1
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.n_splits < 2:
            raise ConfigError("n_splits must be >= 2")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")


@dataclass
class Schema:
    """Optional JSON sidecar describing how to read a CSV."""

    label_column: Optional[str] = None
    positive_label: Optional[str] = None
    categorical: list = field(default_factory=list)
    ordinal: list = field(default_factory=list)
    drop: list = field(default_factory=list)

    @classmethod
    def from_json(cls, path) -> "Schema":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read schema {path}: {exc}") from exc
        unknown = set(raw) - {"label_column", "positive_label", "categorical", "ordinal", "drop"}
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**raw)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _encode_labels(raw: list, positive_label: Optional[str], column: str) -> np.ndarray:
    if positive_label is not None:
        return np.array([1 if v == str(positive_label) else 0 for v in raw], dtype=np.int64)
    distinct = sorted(set(raw))
    if set(distinct) <= {"0", "1"}:
        return np.array([int(v) for v in raw], dtype=np.int64)
    if len(distinct) != 2:
        raise DataError(f"label column {column!r} is not binary: {distinct[:5]}")
    # Without a declared positive label the larger value is class 1.
    return np.array([1 if v == distinct[1] else 0 for v in raw], dtype=np.int64)


def load_csv(path, label_column: Optional[str] = None, schema: Optional[Schema] = None) -> TabularDataset:
    """Read a header-first CSV into an encoded :class:`TabularDataset`.

    Columns listed as categorical in ``schema`` (or any column holding a non-numeric
    cell) are one-hot encoded, categories in sorted order. Rows with an empty or
    ``NA`` cell are dropped and counted in ``n_dropped_missing``.
    """
    schema = schema or Schema()
    if label_column is None:
        label_column = schema.label_column
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from exc
        header = [h.strip() for h in header]
        rows = []
        try:
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                    )
                rows.append([cell.strip() for cell in row])
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from exc

    if label_column is not None and label_column not in header:
        raise ConfigError(f"label column {label_column!r} not found in {path}")
    missing_cols = [c for c in schema.categorical + schema.ordinal + schema.drop if c not in header]
    if missing_cols:
        raise ConfigError(f"schema names columns absent from {path}: {missing_cols}")

    complete = [r for r in rows if all(c not in ("", "NA", "NaN", "?") for c in r)]
    n_dropped = len(rows) - len(complete)
    if n_dropped:
        logger.info("%s: dropped %d rows with missing values", path, n_dropped)

    columns = {h: [r[i] for r in complete] for i, h in enumerate(header)}
    names, kinds, blocks = [], [], []
    for h in header:
        if h == label_column or h in schema.drop:
            continue
        cells = columns[h]
        categorical = h in schema.categorical or not all(_is_number(c) for c in cells)
        if categorical:
            cats = sorted(set(cells))
            for cat in cats:
                names.append(f"{h}={cat}")
                kinds.append(onehot_kind(h))
                blocks.append(np.array([1.0 if c == cat else 0.0 for c in cells]))
        else:
            names.append(h)
            kinds.append(ORDINAL if h in schema.ordinal else NUMERIC)
            blocks.append(np.array([float(c) for c in cells]))

    values = np.column_stack(blocks) if blocks else np.empty((len(complete), 0))
    labels = None
    if label_column is not None:
        labels = _encode_labels(columns[label_column], schema.positive_label, label_column)
    return TabularDataset(values, names, kinds, labels, n_dropped_missing=n_dropped)


def standardize(data: TabularDataset, stats=None):
    """Z-score numeric and ordinal columns; one-hot columns pass through.

    Returns ``(standardized, (means, stds))``. Zero-variance columns get std 1
    and a warning.
    """
    X = data.values
    if stats is None:
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        onehot = np.array([k.startswith("onehot:") for k in data.feature_kinds], dtype=bool)
        means[onehot] = 0.0
        stds[onehot] = 1.0
        flat = stds < 1e-12
        if np.any(flat):
            flat_names = [data.feature_names[j] for j in np.flatnonzero(flat)]
            warnings.warn(f"zero-variance columns left unscaled: {flat_names}", RuntimeWarning, stacklevel=2)
            stds[flat] = 1.0
    else:
        means, stds = (np.asarray(s, dtype=np.float64) for s in stats)
        if means.shape != (data.n,) or stds.shape != (data.n,):
            raise DataError("standardization stats do not match the column count")
    return replace(data, values=(X - means) / stds), (means, stds)


def _stratified_fold_ids(labels, k, rng) -> np.ndarray:
    # Deal each shuffled class round-robin, continuing where the previous class stopped,
    # so fold sizes differ by at most one and per-class counts by at most one.
    fold = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        fold[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return fold


def make_folds(m: int, labels=None, plan: SplitPlan = SplitPlan()) -> list:
    """Return ``[[(train_idx, test_idx), ...] per repeat]``.

    Falls back to unstratified folds (with a warning) when a class has fewer than
    ``n_splits`` members.
    """
    k = plan.n_splits
    if m < k:
        raise DataError(f"cannot split {m} rows into {k} folds")
    stratified = plan.stratified and labels is not None
    if stratified:
        labels = np.asarray(labels)
        _, counts = np.unique(labels, return_counts=True)
        if counts.min() < k:
            warnings.warn("a class has fewer members than folds; using unstratified folds",
                          RuntimeWarning, stacklevel=2)
            stratified = False
    rng = np.random.default_rng(plan.seed)
    repeats = []
    for _ in range(plan.n_repeats):
        if stratified:
            fold = _stratified_fold_ids(labels, k, rng)
        else:
            fold = np.empty(m, dtype=np.int64)
            fold[rng.permutation(m)] = np.arange(m) % k
        repeats.append([(np.flatnonzero(fold != f), np.flatnonzero(fold == f)) for f in range(k)])
    return repeats


def derive_seed(*parts) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def inject_bias(data: TabularDataset, positive_retention: float, seed) -> TabularDataset:
    """Keep every negative row and ``round_half_up(retention * #pos)`` (at least one) positives."""
    if data.labels is None:
        raise DataError("inject_bias needs labels")
    if not 0.0 < positive_retention <= 1.0:
        raise ConfigError("positive_retention must be in (0, 1]")
    pos = np.flatnonzero(data.labels == 1)
    if len(pos) == 0:
        raise DataError("no positive rows to undersample")
    keep_pos = max(1, round_half_up(positive_retention * len(pos)))
    rng = np.random.default_rng(seed)
    kept = rng.choice(pos, size=keep_pos, replace=False)
    keep = np.sort(np.concatenate([np.flatnonzero(data.labels == 0), kept]))
    return data.take(keep)


def subsample(data: TabularDataset, cap: int, seed) -> TabularDataset:
    if cap < 1:
        raise ConfigError("cap must be >= 1")
    if data.m <= cap:
        return data
    rng = np.random.default_rng(seed)
    return data.take(np.sort(rng.choice(data.m, size=cap, replace=False)))


def concat(a: TabularDataset, b: TabularDataset) -> TabularDataset:
    if not a.same_schema(b):
        raise DataError("cannot concatenate datasets with different columns")
    labels = None
    if a.labels is not None and b.labels is not None:
        labels = np.concatenate([a.labels, b.labels])
    return replace(
        a,
        values=np.vstack([a.values, b.values]),
        labels=labels,
        row_ids=np.concatenate([a.row_ids, b.row_ids]),
    )


def align_schema(reference: TabularDataset, other: TabularDataset) -> TabularDataset:
    """Reorder ``other``'s columns to ``reference``; one-hot categories absent from
    ``other`` become zero columns. Any other missing column is a :class:`DataError`."""
    pos = {name: j for j, name in enumerate(other.feature_names)}
    ref_names = set(reference.feature_names)
    cols = []
    for name, kind in zip(reference.feature_names, reference.feature_kinds):
        if name in pos:
            cols.append(other.values[:, pos[name]])
        elif kind.startswith("onehot:") and kind[len("onehot:"):] in {
            k[len("onehot:"):] for k in other.feature_kinds if k.startswith("onehot:")
        }:
            cols.append(np.zeros(other.m))
        else:
            cats = [n.split("=", 1)[1] for n, k in zip(other.feature_names, other.feature_kinds)
                    if k == onehot_kind(name)]
            if cats and not kind.startswith("onehot:"):
                non_numeric = [c for c in cats if not _is_number(c)]
                raise DataError(f"column {name!r} is numeric in the first dataset but not in the second "
                                f"(value {(non_numeric or cats)[0]!r})")
            raise DataError(f"column {name!r} missing from the second dataset")
    extra = [name for name in other.feature_names if name not in ref_names]
    if extra:
        raise DataError(f"column {extra[0]!r} is not present in the first dataset")
    values = np.column_stack(cols) if cols else np.empty((other.m, 0))
    return replace(other, values=values, feature_names=reference.feature_names,
                   feature_kinds=reference.feature_kinds)
