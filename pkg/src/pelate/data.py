"""Dataset container, CSV ingestion, group partitioning and seed streams.

The on-disk format is a plain CSV with header ``t,y,x1,...,xd``: a binary
treatment flag, the observed outcome, and ``d >= 1`` numeric covariates.
All other modules consume data exclusively through :class:`Dataset` and
:class:`GroupView`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesignError, ParseError

__all__ = [
    "Dataset",
    "GroupView",
    "SeedSpec",
    "load_csv",
    "write_csv",
    "split_groups",
    "derive_seed",
    "positivity_violations",
]


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of (covariates, treatment flag, observed outcome).

    Parameters
    ----------
    x : ndarray, shape (n, d)
        Covariate matrix.
    t : ndarray, shape (n,)
        Treatment indicators, each 0 or 1.
    y : ndarray, shape (n,)
        Observed outcomes.
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        t = np.asarray(self.t)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DegenerateDesignError("covariate matrix must be n x d with d >= 1")
        n = x.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise DegenerateDesignError("x, t, y must agree on the number of rows")
        if n < 1:
            raise DegenerateDesignError("dataset must contain at least one row")
        tf = np.asarray(t, dtype=float)
        if not np.all((tf == 0.0) | (tf == 1.0)):
            raise DegenerateDesignError("treatment flags must all be 0 or 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DegenerateDesignError("non-finite value in covariates or outcomes")
        t = tf.astype(np.int64)
        for arr in (x, t, y):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n1(self) -> int:
        return int(self.t.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1


@dataclass(frozen=True)
class GroupView:
    """Row indices of one treatment arm, in increasing order.

    ``arm`` is 1 for the treated sub-sample and 0 for the control one.
    """

    indices: np.ndarray
    arm: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class SeedSpec:
    """A (master seed, stream index) pair identifying one child RNG stream."""

    master: int
    stream: int

    def child_seed(self) -> int:
        return derive_seed(self.master, self.stream)


_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(master: int, stream: int) -> int:
    """Derive a 64-bit child seed from a master seed and a stream index.

    Uses a SplitMix64-style finalizer on ``master + stream * golden``.
    Both maps are bijections modulo 2**64, so distinct streams under one
    master (and distinct masters for a fixed stream) give distinct seeds.
    """
    z = (master + stream * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def split_groups(d: Dataset) -> tuple[GroupView, GroupView]:
    """Partition a dataset into its treated and control arms.

    Raises
    ------
    DegenerateDesignError
        If either arm is empty.
    """
    treated = np.flatnonzero(d.t == 1)
    control = np.flatnonzero(d.t == 0)
    if treated.size == 0 or control.size == 0:
        raise DegenerateDesignError("degenerate design: one arm empty")
    return GroupView(treated, 1), GroupView(control, 0)


def load_csv(path) -> Dataset:
    """Load a dataset from a ``t,y,x1,...,xd`` CSV file.

    Raises
    ------
    ParseError
        On a malformed header, a non-numeric cell, a treatment flag other
        than 0/1, or a non-finite value; messages carry the row number.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    d = len(header) - 2
    expected = ["t", "y"] + [f"x{k}" for k in range(1, d + 1)]
    if d < 1 or header != expected:
        raise ParseError(
            f"{path}: malformed header {header!r}; expected t,y,x1,...,xd with d >= 1"
        )
    n = len(lines) - 1
    if n < 1:
        raise ParseError(f"{path}: no data rows")
    t = np.empty(n, dtype=np.int64)
    y = np.empty(n, dtype=float)
    x = np.empty((n, d), dtype=float)
    for i, line in enumerate(lines[1:]):
        row = i + 2  # 1-based line number in the file
        cells = line.split(",")
        if len(cells) != d + 2:
            raise ParseError(f"{path}: wrong number of cells at row {row}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise ParseError(f"{path}: non-numeric cell at row {row}") from None
        if vals[0] not in (0.0, 1.0):
            raise ParseError(f"{path}: treatment must be 0 or 1 at row {row}")
        if not all(np.isfinite(v) for v in vals):
            raise ParseError(f"{path}: non-finite value at row {row}")
        t[i] = int(vals[0])
        y[i] = vals[1]
        x[i] = vals[2:]
    return Dataset(x=x, t=t, y=y)


def write_csv(d: Dataset, path) -> None:
    """Write a dataset in the load_csv format, round-tripping bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"x{k}" for k in range(1, d.d + 1))
        fh.write(f"t,y,{cols}\n")
        for j in range(d.n):
            xs = ",".join(repr(float(v)) for v in d.x[j])
            fh.write(f"{int(d.t[j])},{repr(float(d.y[j]))},{xs}\n")


def positivity_violations(tau_hat, eps_tau: float = 0.01) -> int:
    """Count fitted propensities outside [eps_tau, 1 - eps_tau].

    A diagnostic surrogate for the overlap assumption; violations are
    reported as warnings, never as errors.
    """
    tau = np.asarray(tau_hat, dtype=float)
    return int(np.count_nonzero((tau < eps_tau) | (tau > 1.0 - eps_tau)))
