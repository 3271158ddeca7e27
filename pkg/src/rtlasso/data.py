"""Dataset containers, coefficient vectors and column standardization."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DimensionMismatch, EmptyDataset, IngestionError,
                     ValidationError, ZeroVarianceColumn)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """A design matrix with its response vector.

    ``kind`` is ``"target"`` for the (possibly corrupted) dataset of interest
    and ``"source"`` for the auxiliary clean ones.
    """

    design: np.ndarray
    response: np.ndarray
    id: str = "data"
    kind: str = "target"

    def __post_init__(self):
        X = _frozen(self.design)
        y = _frozen(self.response).ravel()
        if X.ndim != 2:
            raise ValidationError(f"{self.id}: design must be 2-D, got {X.ndim}-D")
        if X.shape[0] != y.shape[0]:
            raise ValidationError(
                f"{self.id}: design has {X.shape[0]} rows but response has "
                f"{y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError(f"{self.id}: non-finite entries")
        if self.kind not in ("target", "source"):
            raise ValidationError(f"{self.id}: kind must be target or source")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    def rows(self, idx, id=None):
        idx = np.asarray(idx)
        return LabeledDataset(self.design[idx], self.response[idx],
                              id=id or self.id, kind=self.kind)

    def with_design(self, design, response=None):
        return LabeledDataset(design,
                              self.response if response is None else response,
                              id=self.id, kind=self.kind)


def stack(first, second, id=None):
    """Row-stack two datasets (``first`` on top)."""
    return LabeledDataset(np.vstack([first.design, second.design]),
                          np.concatenate([first.response, second.response]),
                          id=id or f"{first.id}+{second.id}", kind="target")


class _SupportVector:
    __slots__ = ("values",)

    def __init__(self, values):
        self.values = _frozen(values).ravel()

    @property
    def support(self):
        return np.flatnonzero(self.values)

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        return (type(self) is type(other)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return (f"{type(self).__name__}(len={len(self)}, "
                f"nnz={self.support.size})")

    def sparse_pairs(self):
        s = self.support
        return [[int(i), float(self.values[i])] for i in s]


class SparseCoefficients(_SupportVector):
    """Length-p coefficient vector; ``support`` lists its nonzero positions."""

    def l1(self):
        return float(np.abs(self.values).sum())


class CorruptionVector(_SupportVector):
    """Length-n per-observation corruption estimate."""


@dataclass(frozen=True, eq=False)
class StandardizationRecord:
    """Column statistics needed to map between raw and working coordinates.

    Working design is ``(X - column_means) / column_scales``; a coefficient
    ``b`` in working coordinates corresponds to ``b / column_scales`` on the
    original scale.
    """

    column_means: np.ndarray
    column_scales: np.ndarray

    def __post_init__(self):
        m = _frozen(self.column_means)
        s = _frozen(self.column_scales)
        if m.shape != s.shape:
            raise ValidationError("means and scales differ in length")
        if np.any(s <= 0):
            raise ValidationError("column scales must be positive")
        object.__setattr__(self, "column_means", m)
        object.__setattr__(self, "column_scales", s)

    @classmethod
    def identity(cls, p):
        return cls(np.zeros(p), np.ones(p))

    def apply(self, design):
        return (np.asarray(design, dtype=float) - self.column_means) / self.column_scales

    def invert(self, design):
        return np.asarray(design, dtype=float) * self.column_scales + self.column_means

    def to_original(self, beta):
        return np.asarray(beta, dtype=float) / self.column_scales

    def to_working(self, beta):
        return np.asarray(beta, dtype=float) * self.column_scales

    def to_dict(self):
        return {"column_means": self.column_means.tolist(),
                "column_scales": self.column_scales.tolist()}


def standardize(data, center=True, scale=True):
    """Center columns and rescale them to Euclidean norm sqrt(n).

    Returns the transformed dataset and the record that undoes it.  The
    response is left untouched.
    """
    X = data.design
    n = X.shape[0]
    if n < 2:
        raise ValidationError(f"{data.id}: need at least 2 rows to standardize")
    means = X.mean(axis=0) if center else np.zeros(X.shape[1])
    Xc = X - means
    if scale:
        scales = np.sqrt((Xc ** 2).sum(axis=0) / n)
        if center:
            ptp = np.ptp(X, axis=0)
            bad = np.flatnonzero((ptp == 0) | (scales == 0))
        else:
            bad = np.flatnonzero(scales == 0)
        if bad.size:
            raise ZeroVarianceColumn(int(bad[0]))
    else:
        scales = np.ones(X.shape[1])
    rec = StandardizationRecord(means, scales)
    return data.with_design(rec.apply(X)), rec


def panel_scale(datasets):
    """A single-factor scaling shared by every dataset in a panel.

    All columns are divided by the same number, the root mean column
    second moment over the pooled rows, so that pooled columns have average
    squared norm equal to their row count.  One common factor keeps the
    coefficient vectors of all datasets comparable and commutes with hard
    thresholding.
    """
    datasets = [d for d in datasets if d is not None]
    if not datasets:
        raise EmptyDataset("panel_scale needs at least one dataset")
    p = datasets[0].p
    total = sum(float((d.design ** 2).sum()) for d in datasets)
    rows = sum(d.n for d in datasets)
    c = np.sqrt(total / (rows * p))
    if c == 0:
        raise ZeroVarianceColumn(0)
    return StandardizationRecord(np.zeros(p), np.full(p, c))


@dataclass(frozen=True)
class PanelSummary:
    p: int
    n_target: int
    n_sources: tuple = field(default_factory=tuple)

    @property
    def L(self):
        return len(self.n_sources)


def validate_panel(target, sources):
    """Check that every dataset shares the target's column count."""
    p = target.p
    for s in sources:
        if s.p != p:
            raise DimensionMismatch(s.id, p, s.p)
    return PanelSummary(p=p, n_target=target.n,
                        n_sources=tuple(s.n for s in sources))


def _read_matrix(path):
    path = Path(path)
    rows, header = [], None
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                if lineno == 1 and header is None and not rows:
                    header = [c.strip() for c in rec]
                    width = len(header)
                    continue
                raise IngestionError(path, lineno, "non-numeric value") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise IngestionError(
                    path, lineno, f"expected {width} fields, got {len(vals)}")
            if not all(np.isfinite(vals)):
                raise IngestionError(path, lineno, "non-finite value")
            rows.append(vals)
    if not rows:
        raise IngestionError(path, 0, "no data rows")
    return np.array(rows), header


def read_csv(path, response=None, id=None, kind="target"):
    """Load a dataset from CSV (one observation per row).

    ``response`` is either ``None`` (last column holds the response) or the
    path of a one-column CSV with the response.
    """
    M, _ = _read_matrix(path)
    if response is None:
        X, y = M[:, :-1], M[:, -1]
    else:
        X = M
        y, _ = _read_matrix(response)
        if y.shape[1] != 1:
            raise IngestionError(response, 1, "response file must have one column")
        y = y[:, 0]
        if y.shape[0] != X.shape[0]:
            raise IngestionError(response, y.shape[0],
                                 f"{y.shape[0]} responses for {X.shape[0]} rows")
    return LabeledDataset(X, y, id=id or Path(path).stem, kind=kind)


def write_csv(path, data, header=True):
    X = data.design
    cols = [f"x{j}" for j in range(X.shape[1])] + ["y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(cols)
        for row, yi in zip(X, data.response):
            w.writerow([f"{v:.17g}" for v in row] + [f"{yi:.17g}"])
