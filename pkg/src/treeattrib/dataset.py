"""Dataset ingestion: delimited text files with a header row and a binary target.

The on-disk layout follows the usual benchmark-collection convention: one
header line naming every column, one row per instance, tab or comma
separated (auto-detected from the header), all cells numeric, and a target
column (``target`` by default) holding exactly one or two distinct values.
Two distinct target values are mapped to {0, 1} by sorted order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError


@dataclass(frozen=True)
class Dataset:
    """A dense feature matrix with named columns and a binary target."""

    name: str
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError("X must be a 2-d matrix")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DatasetError(
                f"target length {y.shape[0] if y.ndim == 1 else '?'} does not "
                f"match {X.shape[0]} rows"
            )
        if X.shape[1] != len(self.feature_names):
            raise DatasetError(
                f"{len(self.feature_names)} feature names for {X.shape[1]} columns"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DatasetError("feature names are not unique")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DatasetError("target values must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def subset_columns(self, indices) -> "Dataset":
        """New dataset keeping only the given feature columns (ascending)."""
        idx = sorted(int(i) for i in indices)
        names = tuple(self.feature_names[i] for i in idx)
        return Dataset(name=self.name, feature_names=names,
                       X=self.X[:, idx], y=self.y)

    def take_rows(self, rows, name: str | None = None) -> "Dataset":
        return Dataset(name=self.name if name is None else name,
                       feature_names=self.feature_names,
                       X=self.X[rows], y=self.y[rows])


def load_dataset(path, target_column: str = "target") -> Dataset:
    """Parse a delimited text file into a Dataset.

    Raises DatasetError for an empty file, a missing target column, ragged
    rows, non-numeric cells, or a target with more than two distinct values.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise DatasetError(f"{path}: empty file")
    sep = "\t" if "\t" in lines[0] else ","
    header = [c.strip() for c in lines[0].split(sep)]
    if target_column not in header:
        raise DatasetError(f"{path}: missing target column {target_column!r}")
    t_pos = header.index(target_column)
    feature_names = tuple(c for i, c in enumerate(header) if i != t_pos)

    rows = []
    targets = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in ln.split(sep)]
        if len(cells) != len(header):
            raise DatasetError(
                f"{path}:{lineno}: expected {len(header)} columns, found {len(cells)}"
            )
        parsed = []
        for name, cell in zip(header, cells):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DatasetError(
                    f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}"
                ) from None
        targets.append(parsed.pop(t_pos))
        rows.append(parsed)

    if not rows:
        raise DatasetError(f"{path}: no data rows")
    levels = sorted(set(targets))
    if len(levels) > 2:
        raise DatasetError(f"{path}: target not binary ({len(levels)} distinct values)")
    mapping = {lv: i for i, lv in enumerate(levels)}
    y = np.array([mapping[t] for t in targets], dtype=np.int64)
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(name=name, feature_names=feature_names,
                   X=np.array(rows, dtype=np.float64), y=y)
