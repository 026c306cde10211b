"""Immutable datasets and CSV ingestion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix ``X`` (n x p) with named columns plus a target vector.

    Arrays are copied and marked read-only on construction.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    target: str = "Y"
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(y.size, 0)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"row mismatch: X has {X.shape[0]}, y has {y.shape[0]}")
        names = tuple(self.names)
        if len(names) != X.shape[1]:
            raise DataError(f"{X.shape[1]} columns but {len(names)} names")
        if len(set(names)) != len(names) or self.target in names:
            raise DataError("column names must be unique")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        if name == self.target:
            return self.y
        try:
            return self.X[:, self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def indices(self, names: Sequence[str]) -> tuple[int, ...]:
        missing = [c for c in names if c not in self.names]
        if missing:
            raise KeyError(", ".join(missing))
        return tuple(self.names.index(c) for c in names)

    def columns(self) -> dict[str, np.ndarray]:
        out = {name: self.X[:, j] for j, name in enumerate(self.names)}
        out[self.target] = self.y
        return out

    @classmethod
    def from_columns(cls, columns: Mapping[str, np.ndarray], target: str, meta=None) -> "Dataset":
        if target not in columns:
            raise DataError(f"target column {target!r} not found")
        names = tuple(k for k in columns if k != target)
        n = len(columns[target])
        X = np.column_stack([columns[k] for k in names]) if names else np.empty((n, 0))
        return cls(X=X, y=columns[target], names=names, target=target, meta=meta or {})


def _format(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` as comma-separated values, covariates first, target last."""
    header = list(data.names) + [data.target]
    table = np.column_stack([data.X, data.y]) if data.p else data.y.reshape(-1, 1)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in table:
        writer.writerow([_format(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path, target: str) -> Dataset:
    """Read a header-first numeric CSV; every non-target column is a covariate."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError("empty CSV")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise DataError(f"target column {target!r} not in header")
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    body = [r for r in rows[1:] if r]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"line {i}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"line {i}, column {header[j]!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"line {i}, column {header[j]!r}: non-finite value")
            values[i - 2, j] = v
    cols = {h: values[:, j] for j, h in enumerate(header)}
    return Dataset.from_columns(cols, target=target, meta={"source": str(path)})
