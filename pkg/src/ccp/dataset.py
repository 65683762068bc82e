"""Tabular data ingestion, standardization, subsampling and fold plans."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class DataMatrix:
    """M samples by I features, dense and finite.

    Columns are feature vectors (what clustering works on), rows are
    samples (what projection works on).
    """

    values: np.ndarray
    feature_names: Optional[list[str]] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"expected a non-empty 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("matrix contains NaN or Inf")
        if self.feature_names is not None and len(self.feature_names) != values.shape[1]:
            raise DataError("feature_names length does not match column count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def feature(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def sample(self, m: int) -> np.ndarray:
        return self.values[m]


@dataclass(frozen=True)
class LabelVector:
    """Integer class ids in ``0..L-1`` plus the original class names."""

    labels: np.ndarray
    classes: list = field(default_factory=list)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise DataError("labels must be a non-empty 1-D array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise DataError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise DataError("labels must be non-negative")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if not self.classes:
            object.__setattr__(self, "classes", list(range(int(labels.max()) + 1)))

    @property
    def L(self) -> int:
        return len(self.classes)

    def __len__(self) -> int:
        return self.labels.size


def as_array(data) -> np.ndarray:
    """Return the float matrix behind a DataMatrix or array-like."""
    if isinstance(data, DataMatrix):
        return data.values
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def as_labels(labels) -> np.ndarray:
    if isinstance(labels, LabelVector):
        return labels.labels
    return np.asarray(labels, dtype=np.int64)


def encode_labels(raw: Sequence[str]) -> LabelVector:
    """Map label strings to ids.

    Integer-valued labels keep their numeric order; anything else is
    numbered by first appearance.
    """
    try:
        as_int = [int(v) for v in raw]
    except ValueError:
        as_int = None
    if as_int is not None:
        classes = sorted(set(as_int))
    else:
        classes = list(dict.fromkeys(raw))
        as_int = list(raw)
    index = {c: i for i, c in enumerate(classes)}
    return LabelVector(np.array([index[v] for v in as_int], dtype=np.int64), classes)


def standardize(values: np.ndarray) -> np.ndarray:
    """Center columns and scale by the population standard deviation.

    Constant columns are left at zero after centering.
    """
    values = np.asarray(values, dtype=float)
    mean, scale = column_stats(values)
    return (values - mean) / scale


_zscore = standardize


def column_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and the divisor used by :func:`standardize`."""
    mean = values.mean(axis=0)
    sd = values.std(axis=0)
    constant = np.ptp(values, axis=0) == 0
    # Rounding can leave a tiny nonzero sd on constant columns.
    sd = np.where(constant | (sd == 0), 1.0, sd)
    centered_mean = np.where(constant, values[0] if len(values) else 0.0, mean)
    return centered_mean, sd


def load_csv(path, label_column: Optional[str] = None, standardize: bool = False):
    """Read a headed CSV into a DataMatrix (and a LabelVector if requested)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    width = len(header)
    for lineno, row in enumerate(body, start=2):
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")

    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not found in {path}")
        label_idx = header.index(label_column)
    keep = [j for j in range(width) if j != label_idx]
    if not keep:
        raise DataError(f"{path} has no feature columns")

    values = np.empty((len(body), len(keep)))
    for i, row in enumerate(body):
        for k, j in enumerate(keep):
            try:
                values[i, k] = float(row[j])
            except ValueError:
                raise DataError(f"{path}:{i + 2}: non-numeric cell {row[j]!r}") from None
    if standardize:
        values = _zscore(values)
    data = DataMatrix(values, [header[j] for j in keep])
    labels = None
    if label_idx is not None:
        labels = encode_labels([row[label_idx].strip() for row in body])
    return data, labels


def write_csv(path, data, labels: Optional[LabelVector] = None, label_column: str = "y"):
    """Write a DataMatrix with 17 significant digits so it reloads exactly."""
    values = as_array(data)
    names = data.feature_names if isinstance(data, DataMatrix) and data.feature_names else None
    names = names or [f"f{j}" for j in range(values.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + ([label_column] if labels is not None else []))
        for i, row in enumerate(values):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(labels.classes[labels.labels[i]]))
            writer.writerow(cells)


def subsample(data, labels=None, fraction: float = 1.0, seed: int = 0):
    """Draw ``ceil(fraction * M)`` rows without replacement.

    Returns the subsampled matrix, labels (or None) and the chosen row
    indices into the original data, in ascending order.
    """
    if not 0 < fraction <= 1:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    values = as_array(data)
    M = values.shape[0]
    count = max(1, math.ceil(fraction * M - 1e-9))
    if count >= M:
        idx = np.arange(M)
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(M, size=count, replace=False))
    sub = DataMatrix(values[idx], data.feature_names if isinstance(data, DataMatrix) else None)
    sub_labels = None
    if labels is not None:
        if isinstance(labels, LabelVector):
            sub_labels = LabelVector(labels.labels[idx], labels.classes)
        else:
            sub_labels = LabelVector(np.asarray(labels)[idx])
    return sub, sub_labels, idx


@dataclass(frozen=True)
class SplitPlan:
    folds: list
    seed: int
    k: int

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "k": self.k,
            "folds": [{"train": tr.tolist(), "test": te.tolist()} for tr, te in self.folds],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        doc = json.loads(text)
        folds = [
            (np.array(f["train"], dtype=np.int64), np.array(f["test"], dtype=np.int64))
            for f in doc["folds"]
        ]
        return cls(folds, int(doc["seed"]), int(doc["k"]))


def make_folds(M: int, k: int, seed: int = 0) -> SplitPlan:
    """Shuffled, non-stratified k-fold plan with near-equal test blocks."""
    if not 2 <= k <= M:
        raise DataError(f"fold count must satisfy 2 <= k <= M, got k={k}, M={M}")
    perm = np.random.default_rng(seed).permutation(M)
    folds = []
    for block in np.array_split(perm, k):
        test = np.sort(block)
        mask = np.ones(M, dtype=bool)
        mask[test] = False
        folds.append((np.flatnonzero(mask), test))
    return SplitPlan(folds, seed, k)
