"""Binary data ingestion, contingency tables, Dirichlet posteriors and BDeu scores.

Stratum tables are numpy arrays indexed ``[y, x, w]``; a ``ContingencyTable``
stacks one such table per assignment of the conditioning set ``Z`` (strata
enumerated in binary order of the ``z_cols`` values, first column most
significant).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .errors import DataError

DEFAULT_ESS = 10.0


@dataclass
class BinaryDataset:
    columns: list[str]
    data: np.ndarray  # (N, n_cols) uint8

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise DataError("data shape does not match column names")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate column names")
        if self.data.size and not np.isin(self.data, (0, 1)).all():
            bad = np.argwhere(~np.isin(self.data, (0, 1)))[0]
            raise DataError(f"non-binary value at row {bad[0] + 1}, column {self.columns[bad[1]]!r}")
        self.data = self.data.astype(np.uint8)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    @classmethod
    def from_csv(cls, path, delimiter: str = ",") -> "BinaryDataset":
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
                vals = []
                for col, cell in zip(header, row):
                    cell = cell.strip()
                    if cell not in ("0", "1"):
                        raise DataError(f"{path}:{lineno}: column {col!r} has non-binary value {cell!r}")
                    vals.append(int(cell))
                rows.append(vals)
        data = np.array(rows, dtype=np.uint8).reshape(len(rows), len(header))
        return cls(header, data)

    def to_csv(self, path, delimiter: str = ",") -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter)
            w.writerow(self.columns)
            w.writerows(self.data.tolist())


@dataclass
class ContingencyTable:
    """Per-stratum 2x2x2 tables over (Y, X, W).

    ``values`` has shape ``(n_strata, 2, 2, 2)`` (or a leading sample axis for
    posterior draws).  In count form ``weights`` is None; in probability form
    each stratum sums to one and ``weights`` holds ``P(Z = z)``.
    """

    values: np.ndarray
    z_cols: tuple[str, ...] = ()
    weights: np.ndarray | None = None
    names: tuple[str, str, str] = ("Y", "X", "W")

    @property
    def n_strata(self) -> int:
        return self.values.shape[-4]

    @property
    def is_probability(self) -> bool:
        return self.weights is not None

    def stratum_totals(self) -> np.ndarray:
        return self.values.sum(axis=(-3, -2, -1))

    def pw(self) -> np.ndarray:
        """``P(W = w | z)``, shape ``(..., n_strata, 2)``."""
        return self.values.sum(axis=(-3, -2))

    def conditional(self) -> np.ndarray:
        """``zeta_{yx.w} = P(Y=y, X=x | W=w, z)``; NaN where ``P(W=w | z) = 0``."""
        pw = self.pw()[..., None, None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(pw > 0, self.values / np.where(pw > 0, pw, 1.0), np.nan)

    def strata(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=len(self.z_cols)))


@dataclass(frozen=True)
class DirichletSpec:
    """Dirichlet concentrations for the stratum cells and for ``P(Z)``."""

    cell: float
    stratum: float = field(default=1.0)

    def __post_init__(self):
        if not (self.cell > 0 and self.stratum > 0):
            raise ValueError("Dirichlet concentrations must be positive")

    @classmethod
    def bdeu(cls, ess: float = DEFAULT_ESS, n_strata: int = 1) -> "DirichletSpec":
        """Spread ``ess`` uniformly over the joint (Z, Y, X, W) table."""
        return cls(cell=ess / (8 * n_strata), stratum=ess / n_strata)


def stratum_index(data: np.ndarray) -> np.ndarray:
    """Binary-order stratum index for rows of a 0/1 matrix."""
    if data.shape[1] == 0:
        return np.zeros(data.shape[0], dtype=np.int64)
    weights = 1 << np.arange(data.shape[1] - 1, -1, -1)
    return data.astype(np.int64) @ weights


def empirical_counts(dataset: BinaryDataset, y_col: str, x_col: str, w_col: str,
                     z_cols=()) -> ContingencyTable:
    z_cols = tuple(z_cols)
    roles = [y_col, x_col, w_col, *z_cols]
    if len(set(roles)) != len(roles):
        raise DataError("Y, X, W and Z columns must be distinct")
    y, x, w = (dataset.column(c).astype(np.int64) for c in (y_col, x_col, w_col))
    zdata = np.stack([dataset.column(c) for c in z_cols], axis=1) if z_cols else np.zeros((dataset.n, 0))
    s = stratum_index(zdata)
    n_strata = 2 ** len(z_cols)
    flat = ((s * 2 + y) * 2 + x) * 2 + w
    counts = np.bincount(flat, minlength=n_strata * 8).reshape(n_strata, 2, 2, 2).astype(float)
    return ContingencyTable(counts, z_cols, None, (y_col, x_col, w_col))


def dirichlet_sample(counts: ContingencyTable, prior: DirichletSpec, rng: np.random.Generator,
                     size: int | None = None) -> ContingencyTable:
    """Draw from the unconstrained Dirichlet posterior, one table per stratum plus ``P(Z)``.

    With ``size`` given, the result carries a leading sample axis.
    """
    c = counts.values
    shape = (() if size is None else (size,)) + c.shape
    g = rng.standard_gamma(c + prior.cell, size=shape)
    tot = g.sum(axis=(-3, -2, -1), keepdims=True)
    tables = g / np.where(tot > 0, tot, 1.0)
    n_z = counts.stratum_totals()
    wshape = (() if size is None else (size,)) + n_z.shape
    gz = rng.standard_gamma(n_z + prior.stratum, size=wshape)
    weights = gz / gz.sum(axis=-1, keepdims=True)
    return ContingencyTable(tables, counts.z_cols, weights, counts.names)


def posterior_mean_table(counts: ContingencyTable, prior: DirichletSpec) -> ContingencyTable:
    c = counts.values + prior.cell
    tables = c / c.sum(axis=(-3, -2, -1), keepdims=True)
    nz = counts.stratum_totals() + prior.stratum
    return ContingencyTable(tables, counts.z_cols, nz / nz.sum(), counts.names)


def bdeu_log_marginal(child_counts, ess: float = DEFAULT_ESS) -> float:
    """BDeu log marginal likelihood of a child's counts.

    ``child_counts`` has shape ``(q, r)``: one row per parent configuration,
    one column per child state.  The prior puts ``ess / (q r)`` on each cell.
    """
    if ess <= 0:
        raise ValueError("ess must be positive")
    n = np.atleast_2d(np.asarray(child_counts, dtype=float))
    if (n < 0).any():
        raise ValueError("counts must be non-negative")
    q, r = n.shape
    a_jk = ess / (q * r)
    a_j = ess / q
    nj = n.sum(axis=1)
    return float(np.sum(gammaln(a_j) - gammaln(a_j + nj)) + np.sum(gammaln(a_jk + n) - gammaln(a_jk)))


def family_counts(dataset: BinaryDataset, child: str, parents) -> np.ndarray:
    """Counts of ``child`` per parent configuration, shape ``(2**len(parents), 2)``."""
    parents = list(parents)
    pdata = np.stack([dataset.column(p) for p in parents], axis=1) if parents else np.zeros((dataset.n, 0))
    j = stratum_index(pdata)
    k = dataset.column(child).astype(np.int64)
    return np.bincount(j * 2 + k, minlength=2 ** (len(parents) + 1)).reshape(-1, 2).astype(float)
