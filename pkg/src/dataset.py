#!/usr/bin/env python3
"""
Dataset representation, CSV ingestion and column standardization.

Samples are rows and covariates are columns everywhere in the package.
"""
import os
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DataError

logger = logging.getLogger(__name__)


class ResponseKind(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"

    @classmethod
    def parse(cls, value) -> "ResponseKind":
        if isinstance(value, ResponseKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DataError(f"unknown response kind {value!r} (expected 'binary' or 'continuous')")


def _frozen(values: np.ndarray, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ResponseVariable:
    """The variable of interest Y. Binary responses are stored as 0.0 / 1.0."""

    kind: ResponseKind
    values: np.ndarray
    name: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "kind", ResponseKind.parse(self.kind))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1:
            raise DataError("response must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise DataError("response contains missing or infinite values")
        if np.ptp(self.values) == 0:
            raise DataError(f"constant response '{self.name}'")
        if self.kind is ResponseKind.BINARY and not np.all(np.isin(self.values, (0.0, 1.0))):
            raise DataError(f"non-binary response '{self.name}': values must be coded 0/1")

    @property
    def is_binary(self) -> bool:
        return self.kind is ResponseKind.BINARY

    def __len__(self) -> int:
        return self.values.shape[0]

    def labels(self) -> np.ndarray:
        """Binary responses as an int array (0/1)."""
        return self.values.astype(int)

    def take(self, rows: Sequence[int]) -> "ResponseVariable":
        return ResponseVariable(self.kind, self.values[np.asarray(rows)], self.name)


@dataclass(frozen=True)
class Dataset:
    """n x p covariate matrix with names, sample ids and the response."""

    matrix: np.ndarray
    covariate_names: Tuple[str, ...]
    response: ResponseVariable
    sample_ids: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        if matrix.ndim != 2:
            raise DataError("covariate matrix must be two-dimensional")
        n, p = matrix.shape
        names = tuple(str(c) for c in self.covariate_names)
        ids = tuple(str(s) for s in self.sample_ids) or tuple(f"s{i + 1}" for i in range(n))
        if len(names) != p:
            raise DataError(f"{len(names)} covariate names for {p} columns")
        if len(set(names)) != p:
            dupes = sorted({c for c in names if names.count(c) > 1})
            raise DataError(f"duplicated covariate names: {', '.join(dupes)}")
        if len(ids) != n:
            raise DataError(f"{len(ids)} sample ids for {n} rows")
        if len(self.response) != n:
            raise DataError(f"response has {len(self.response)} values for {n} samples")
        if not np.all(np.isfinite(matrix)):
            rows, cols = np.nonzero(~np.isfinite(matrix))
            raise DataError(f"non-numeric cell at ({rows[0] + 1}, {names[cols[0]]})")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    def validate_for_analysis(self) -> None:
        """Check the sample-size requirements of the selection pipeline."""
        if self.n < 4:
            raise DataError(f"at least 4 samples are required, got {self.n}")
        if self.p < 2:
            raise DataError(f"at least 2 covariates are required, got {self.p}")
        y = self.response.values
        if self.response.is_binary:
            counts = np.bincount(y.astype(int), minlength=2)
            if counts.min() < 2:
                raise DataError(f"each class needs at least 2 samples, got {counts[0]} and {counts[1]}")
        elif np.unique(y).size < 3:
            raise DataError("continuous response needs at least 3 distinct values")

    def subset(self, columns: Sequence[int]) -> "Dataset":
        cols = np.asarray(columns, dtype=int)
        return Dataset(self.matrix[:, cols], tuple(self.covariate_names[c] for c in cols),
                       self.response, self.sample_ids)

    def take_rows(self, rows: Sequence[int]) -> "Dataset":
        idx = np.asarray(rows, dtype=int)
        return Dataset(self.matrix[idx], self.covariate_names, self.response.take(idx),
                       tuple(self.sample_ids[i] for i in idx))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(np.asarray(self.matrix), columns=list(self.covariate_names))
        frame.insert(0, "sample_id", list(self.sample_ids))
        frame[self.response.name] = np.asarray(self.response.values)
        return frame


@dataclass(frozen=True)
class StandardizedMatrix:
    """Column-standardized covariates (mean 0, sd 1 with the n-1 denominator)."""

    values: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "column_means", _frozen(self.column_means))
        object.__setattr__(self, "column_sds", _frozen(self.column_sds))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def invert(self) -> np.ndarray:
        """Undo the affine transform."""
        return self.values * self.column_sds + self.column_means


def _detect_separator(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline()
    return "\t" if "\t" in header else ","


def _cell_to_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return np.nan


def _parse_cells(cells: np.ndarray) -> np.ndarray:
    """Correctly rounded parse of text cells (Python ``float``); unparseable cells become NaN."""
    if cells.size == 0:
        return np.zeros(cells.shape)
    return np.vectorize(_cell_to_float, otypes=[float])(cells)


def load_csv(path: str, response_column: str, response_kind, has_sample_ids: bool = True) -> Dataset:
    """
    Load a dataset from a CSV/TSV file.

    Args:
        path: file with a header row; separator ',' or tab is detected from the header
        response_column: name of the response column, removed from the covariates
        response_kind: "binary" (coded 0/1) or "continuous"
        has_sample_ids: whether the first column holds sample ids

    Returns:
        Dataset with row order preserved

    Raises:
        DataError: missing file, missing response column, non-numeric cell,
            non-binary or constant response
    """
    kind = ResponseKind.parse(response_kind)
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")

    sep = _detect_separator(path)
    try:
        raw = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False, header=None, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path}: {e}")
    if raw.shape[0] < 2:
        raise DataError(f"{path} has no data rows")

    header = [str(h).strip() for h in raw.iloc[0].tolist()]
    body = raw.iloc[1:].reset_index(drop=True)
    body.columns = range(body.shape[1])

    if has_sample_ids:
        ids = tuple(body[0].str.strip().tolist())
        columns = list(range(1, len(header)))
    else:
        ids = ()
        columns = list(range(len(header)))
    names = [header[c] for c in columns]
    if response_column not in names:
        raise DataError(f"missing response column '{response_column}'")

    cells = body[columns].apply(lambda s: s.str.strip())
    numeric = _parse_cells(cells.to_numpy(dtype=str))
    bad = ~np.isfinite(numeric)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"non-numeric cell at ({r + 1}, {names[c]})")

    y_col = names.index(response_column)
    y_values = numeric[:, y_col]
    if kind is ResponseKind.BINARY and not np.all(np.isin(y_values, (0.0, 1.0))):
        raise DataError(f"non-binary response '{response_column}'")
    if np.ptp(y_values) == 0:
        raise DataError(f"constant response '{response_column}'")

    keep = [i for i in range(len(names)) if i != y_col]
    if len(keep) < 2:
        raise DataError(f"at least 2 covariates are required, got {len(keep)}")
    dataset = Dataset(
        matrix=numeric[:, keep],
        covariate_names=tuple(names[i] for i in keep),
        response=ResponseVariable(kind, y_values, response_column),
        sample_ids=ids,
    )
    logger.info(f"📄 Loaded {path}: n={dataset.n}, p={dataset.p}, response={response_column} ({kind.value})")
    return dataset


def write_csv(dataset: Dataset, path: str, sep: str = ",") -> str:
    """Write a dataset in the layout ``load_csv`` reads (sample id first, response last)."""
    frame = dataset.to_frame()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    # float64 values are written with their shortest round-trip repr
    frame.to_csv(path, sep=sep, index=False, encoding="utf-8", lineterminator="\n")
    return path


def standardize_array(x: np.ndarray, names: Sequence[str] = ()) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standardize the columns of ``x``; returns (values, means, sds)."""
    x = np.asarray(x, dtype=float)
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    constant = np.flatnonzero((np.ptp(x, axis=0) == 0) | ~(sds > 0))
    if constant.size:
        j = int(constant[0])
        label = names[j] if len(names) > j else f"column {j}"
        raise DataError(f"constant covariate '{label}' cannot be standardized")
    return (x - means) / sds, means, sds


def standardize(d: Dataset) -> StandardizedMatrix:
    """Column-standardize the covariates of ``d``."""
    values, means, sds = standardize_array(d.matrix, d.covariate_names)
    return StandardizedMatrix(values, means, sds, d.covariate_names)


def covariate_index(names: Sequence[str]) -> dict:
    return {name: i for i, name in enumerate(names)}
