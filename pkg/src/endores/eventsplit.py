"""Before/after splitting of one ordered dataset and the comparative fit on it."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from os import PathLike

import numpy as np

from endores.errors import IndexOutOfRange, ParseError, ShapeMismatch, WindowTooLarge
from endores.estimate import DiffResult, FitResult, diff_estimator, ols_fit


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    x: np.ndarray
    y: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.shape[0] != y.shape[0]:
            raise ShapeMismatch(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != x.shape[1]:
                raise ShapeMismatch(f"{len(self.labels)} labels for {x.shape[1]} columns")
        if self.t < 2 * (self.p + 1):
            raise ShapeMismatch(f"need at least {2 * (self.p + 1)} rows, got {self.t}")

    @property
    def t(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """``event_index`` is the first row of the after period; rows within
    ``exclusion_window`` of it on either side are dropped."""

    event_index: int
    exclusion_window: int = 0


@dataclass(frozen=True, eq=False)
class Segment:
    x: np.ndarray
    y: np.ndarray
    start: int
    stop: int

    @property
    def n(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True, eq=False)
class ComparativeResult:
    diff: DiffResult
    fit_b: FitResult
    fit_a: FitResult
    n_b: int
    n_a: int
    dropped: int
    gram_discrepancy: float
    labels: tuple[str, ...] | None = None


def split_at_event(data: TimeSeriesDataset, spec: SplitSpec) -> tuple[Segment, Segment]:
    """Rows ``[0, e - g)`` form the before segment and ``[e + g, T)`` the after one."""
    e, g = spec.event_index, spec.exclusion_window
    if not 1 <= e <= data.t - 1:
        raise IndexOutOfRange(f"event_index must lie in [1, {data.t - 1}], got {e}")
    if g < 0:
        raise IndexOutOfRange(f"exclusion_window must be non-negative, got {g}")
    stop_b = max(e - g, 0)
    start_a = min(e + g, data.t)
    need = data.p + 1
    if stop_b < need or data.t - start_a < need:
        raise WindowTooLarge(
            f"segments of {stop_b} and {data.t - start_a} rows; each needs at least {need}"
        )
    before = Segment(data.x[:stop_b], data.y[:stop_b], 0, stop_b)
    after = Segment(data.x[start_a:], data.y[start_a:], start_a, data.t)
    return before, after


def _scaled_inv_gram(x: np.ndarray) -> np.ndarray:
    return np.linalg.inv(x.T @ x / x.shape[0])


def comparative_study(data: TimeSeriesDataset, spec: SplitSpec) -> ComparativeResult:
    """OLS on each side of the event and the difference of the coefficients.

    ``gram_discrepancy`` is the max-abs difference between the two segments'
    inverse Gram matrices scaled by their row counts. Only this design factor
    of the bias term is observable: residuals are orthogonal to x by
    construction, so the regressor/error covariance cannot be estimated here.
    """
    before, after = split_at_event(data, spec)
    fit_b = ols_fit(before.x, before.y)
    fit_a = ols_fit(after.x, after.y)
    disc = float(np.max(np.abs(_scaled_inv_gram(before.x) - _scaled_inv_gram(after.x))))
    return ComparativeResult(
        diff=diff_estimator(fit_b, fit_a),
        fit_b=fit_b,
        fit_a=fit_a,
        n_b=before.n,
        n_a=after.n,
        dropped=data.t - before.n - after.n,
        gram_discrepancy=disc,
        labels=data.labels,
    )


def read_csv_dataset(
    source: str | PathLike | io.TextIOBase, response: str, *, intercept: bool = False
) -> TimeSeriesDataset:
    """Load a headed CSV; ``response`` names y and every other column is a regressor.

    Cells must parse as floats with '.' decimals. Errors cite the 1-based file line.
    """
    if isinstance(source, io.TextIOBase):
        return _parse_csv(source, response, intercept)
    with open(source, newline="", encoding="utf-8") as fh:
        return _parse_csv(fh, response, intercept)


def _parse_csv(fh, response: str, intercept: bool) -> TimeSeriesDataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("line 1: empty file") from None
    if response not in header:
        raise ParseError(f"line 1: response column {response!r} not in header {header}")
    if len(set(header)) != len(header):
        raise ParseError("line 1: duplicate column names")
    y_col = header.index(response)
    x_cols = [j for j in range(len(header)) if j != y_col]
    if not x_cols and not intercept:
        raise ParseError("line 1: no regressor columns")

    rows: list[list[float]] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} cells, got {len(row)}")
        bad = next((c for c in row if not _is_float(c)), None)
        if bad is not None:
            raise ParseError(f"line {line}: non-numeric cell {bad!r}")
        rows.append([float(c) for c in row])
    if not rows:
        raise ParseError("no data rows")

    arr = np.array(rows)
    x = arr[:, x_cols]
    labels = [header[j] for j in x_cols]
    if intercept:
        x = np.column_stack((np.ones(len(arr)), x))
        labels = ["const", *labels]
    return TimeSeriesDataset(x, arr[:, y_col], tuple(labels))


def _is_float(cell: str) -> bool:
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False
