"""Labeled probability datasets and their CSV file format.

A dataset file is a CSV with header ``p0,p1,...,p{c-1},label``, one row
per sample, zero-based integer labels, and optional comment lines
starting with ``#``. Probabilities are serialized with 17 significant
digits so that doubles round-trip exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyDataset,
    InvalidArgument,
    InvalidProbability,
)
from .geometry import NEGATIVE_TOLERANCE, SUM_TOLERANCE


@dataclass(frozen=True)
class LabeledDataset:
    """Rows of (probability vector, integer class label).

    Attributes:
        probs: float64 array ``(n, c)`` of raw (unclipped) probabilities.
        labels: int64 array ``(n,)`` with values in ``[0, n_classes)``.
        n_classes: class count ``c >= 2``.
    """

    probs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)
        if probs.ndim != 2 or labels.ndim != 1:
            raise InvalidArgument("probs must be (n, c) and labels (n,)")
        if len(probs) == 0:
            raise EmptyDataset("dataset needs at least one row")
        if len(probs) != len(labels):
            raise InvalidArgument(f"{len(probs)} rows but {len(labels)} labels")
        if self.n_classes < 2 or probs.shape[1] != self.n_classes:
            raise DimensionMismatch(
                f"rows have {probs.shape[1]} columns, expected n_classes={self.n_classes} >= 2"
            )
        if not np.isfinite(probs).all():
            raise InvalidProbability("non-finite probability entry")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise InvalidArgument(
                f"labels must lie in [0, {self.n_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "LabeledDataset":
        """Dataset restricted to ``indices`` (order preserved)."""
        idx = np.asarray(indices)
        return LabeledDataset(self.probs[idx], self.labels[idx], self.n_classes)

    def onehot(self) -> np.ndarray:
        """One-hot label matrix ``(n, c)``."""
        out = np.zeros((len(self), self.n_classes))
        out[np.arange(len(self)), self.labels] = 1.0
        return out


def _validate_row(values: np.ndarray, line_no: int) -> None:
    if not np.isfinite(values).all():
        raise InvalidProbability(f"line {line_no}: non-finite probability entry")
    if (values < -NEGATIVE_TOLERANCE).any():
        raise InvalidProbability(f"line {line_no}: negative probability entry")
    total = values.sum()
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise InvalidProbability(
            f"line {line_no}: probabilities sum to {total:.6g}, expected 1 within {SUM_TOLERANCE}"
        )


def read_probability_rows(path) -> tuple[np.ndarray, np.ndarray | None, int]:
    """Parse a probability CSV; the label column is optional.

    Returns:
        ``(probs, labels or None, n_classes)``. Errors carry the
        1-based line number of the offending row.
    """
    probs: list[list[float]] = []
    labels: list[int] = []
    header: list[str] | None = None
    has_labels = False
    n_classes = 0
    with open(path, "r", newline="") as fh:
        for line_no, record in enumerate(csv.reader(fh), start=1):
            if not record or record[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in record]
                has_labels = header[-1] == "label"
                n_classes = len(header) - 1 if has_labels else len(header)
                expected = [f"p{i}" for i in range(n_classes)] + (["label"] if has_labels else [])
                if header != expected or n_classes < 2:
                    raise InvalidArgument(
                        f"line {line_no}: header must be p0,...,p{{c-1}}[,label] with c >= 2, "
                        f"got {','.join(header)}"
                    )
                continue
            if len(record) != len(header):
                raise InvalidArgument(
                    f"line {line_no}: expected {len(header)} fields, got {len(record)}"
                )
            try:
                row = np.array([float(v) for v in record[:n_classes]])
                label = int(record[n_classes]) if has_labels else -1
            except ValueError as exc:
                raise InvalidArgument(f"line {line_no}: unparseable field ({exc})") from None
            _validate_row(row, line_no)
            if has_labels and not 0 <= label < n_classes:
                raise InvalidArgument(
                    f"line {line_no}: label {label} outside [0, {n_classes})"
                )
            probs.append(row.tolist())
            labels.append(label)
    if header is None:
        raise InvalidArgument(f"{path}: missing header line")
    if not probs:
        raise EmptyDataset(f"{path}: no data rows")
    return (
        np.array(probs),
        np.array(labels, dtype=np.int64) if has_labels else None,
        n_classes,
    )


def read_dataset_csv(path, expect_classes: int | None = None) -> LabeledDataset:
    """Read a labeled dataset file (header ``p0,...,p{c-1},label``).

    Args:
        path: CSV file; comment lines start with ``#``.
        expect_classes: if given, the file's class count must match.
    """
    probs, labels, n_classes = read_probability_rows(path)
    if labels is None:
        raise InvalidArgument(f"{path}: missing label column")
    if expect_classes is not None and n_classes != expect_classes:
        raise DimensionMismatch(
            f"{path}: file has {n_classes} classes, expected {expect_classes}"
        )
    return LabeledDataset(probs, labels, n_classes)


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (exact double round-trip)."""
    return f"{x:.17g}"


def write_dataset_csv(path, dataset: LabeledDataset, comments: list[str] | None = None) -> None:
    """Write a dataset file, with optional leading ``#`` comment lines."""
    with open(path, "w", newline="") as fh:
        for comment in comments or []:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"p{i}" for i in range(dataset.n_classes)] + ["label"])
        for row, label in zip(dataset.probs, dataset.labels):
            writer.writerow([format_float(v) for v in row] + [int(label)])
