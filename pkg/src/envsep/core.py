"""Shared containers, seeding helpers and CSV matrix I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class EnvsepError(Exception):
    """Base class for errors raised by this package."""


class FormatError(EnvsepError, ValueError):
    """Malformed matrix file (ragged rows, empty file)."""


class ParseError(EnvsepError, ValueError):
    """Non-numeric cell in the body of a matrix file."""


class DimensionError(EnvsepError, ValueError):
    pass


class SingularityError(EnvsepError, np.linalg.LinAlgError):
    pass


class NumericError(EnvsepError, ArithmeticError):
    pass


@dataclass(frozen=True)
class TimeSeriesMatrix:
    """T x N real matrix, rows are time points and columns are series.

    The array is copied on construction and flagged read-only so instances
    can be shared freely.
    """

    data: np.ndarray
    sample_rate_hz: Optional[float] = None
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("matrix contains NaN or Inf entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.sample_rate_hz is not None and not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != arr.shape[1]:
                raise DimensionError(
                    f"{len(labels)} labels given for {arr.shape[1]} columns")
            object.__setattr__(self, "labels", labels)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def replace(self, data: np.ndarray, keep_labels: bool = True) -> "TimeSeriesMatrix":
        labels = self.labels if keep_labels and np.shape(data)[-1] == self.N else None
        return TimeSeriesMatrix(data, self.sample_rate_hz, labels)


def as_array(x) -> np.ndarray:
    """Return the underlying 2-D float array of a TimeSeriesMatrix or array-like."""
    if isinstance(x, TimeSeriesMatrix):
        return x.data
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def make_rng(seed) -> np.random.Generator:
    """Generator for a 64-bit seed (or a SeedSequence / existing Generator)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master: int, index: int) -> int:
    """Per-replication seed scrambled from (master, index).

    Uses numpy's SeedSequence hashing, which is platform independent, so the
    derived stream is bit-stable across machines.
    """
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_matrix_csv(path) -> TimeSeriesMatrix:
    """Read a rectangular numeric CSV file.

    The first row is treated as a header of column labels when any of its
    cells fails to parse as a number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise FormatError(f"{path}: empty file")

    labels = None
    start = 0
    if not all(_is_number(c) for c in rows[0]):
        labels = [c.strip() for c in rows[0]]
        start = 1
    if len(rows) <= start:
        raise FormatError(f"{path}: no data rows")

    width = len(rows[start]) if labels is None else len(labels)
    values = []
    for r, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise FormatError(
                f"{path}: ragged row {r}: expected {width} fields, got {len(row)}")
        parsed = []
        for c, cell in enumerate(row, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at row {r}, column {c}") from None
        values.append(parsed)
    return TimeSeriesMatrix(np.array(values), labels=labels)


def write_matrix_csv(m, path, labels: Optional[Sequence[str]] = None) -> None:
    """Write a matrix as CSV with 17 significant digits (exact round trip)."""
    path = Path(path)
    arr = as_array(m)
    if labels is None and isinstance(m, TimeSeriesMatrix):
        labels = m.labels
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            if labels is not None:
                fh.write(",".join(labels) + "\n")
            for row in arr:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def center_columns(m):
    """Subtract column means. Returns the same container type it was given."""
    arr = as_array(m)
    out = arr - arr.mean(axis=0, keepdims=True)
    # second pass removes the rounding residue left by large offsets
    out -= out.mean(axis=0, keepdims=True)
    if isinstance(m, TimeSeriesMatrix):
        return m.replace(out)
    return out
