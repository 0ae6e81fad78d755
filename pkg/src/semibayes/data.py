"""Datasets and CSV ingestion."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, InsufficientDataError

DOMAINS = ("real", "positive", "unit")


@dataclass
class Dataset:
    """Covariates ``X`` (n x d, no intercept column) and responses ``y``."""

    X: np.ndarray
    y: np.ndarray
    domain: str = "real"
    covariate_names: Sequence[str] = field(default_factory=tuple)
    response_name: str = "y"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.size == 0:
            X = X.reshape(self.y.size, 0)
        self.X = X
        if self.X.shape[0] != self.y.size:
            raise InputError(f"X has {self.X.shape[0]} rows but y has {self.y.size}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise InputError("data must be finite")
        if self.domain not in DOMAINS:
            raise InputError(f"unknown response domain {self.domain!r}")
        if not self.covariate_names:
            self.covariate_names = tuple(f"x{j + 1}" for j in range(self.d))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.domain, self.covariate_names, self.response_name)


def ingest_csv(
    path,
    response_column: str,
    covariate_columns: Optional[Sequence[str]] = None,
    domain: str = "real",
) -> Dataset:
    """Read a header-first, comma-separated UTF-8 file into a :class:`Dataset`.

    Rows are numbered from 1 for the first data row. Any missing or
    non-numeric cell raises :class:`InputError` naming the row and column;
    all offending cells are listed.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    rows = [r for r in rows if r]
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise InsufficientDataError(f"{path} has a header but no data rows")
    if response_column not in header:
        raise InputError(f"response column {response_column!r} not in header {header}")
    if covariate_columns is None:
        covariate_columns = [h for h in header if h != response_column]
    missing = [c for c in covariate_columns if c not in header]
    if missing:
        raise InputError(f"covariate columns {missing} not in header {header}")
    cols = [header.index(c) for c in covariate_columns]
    ycol = header.index(response_column)
    problems = []
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            problems.append(f"row {r}: expected {len(header)} fields, found {len(row)}")
            continue
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                problems.append(f"row {r}, column {header[c]!r}: invalid value {cell.strip()!r}")
            values[r - 1, c] = v
    if problems:
        raise InputError("; ".join(problems))
    return Dataset(
        values[:, cols], values[:, ycol], domain, tuple(covariate_columns), response_column
    )
