"""Value types for sparse nonnegative matrices, marginals and KL divergences.

Matrices keep an explicit support pattern: the bipartite graph whose edges are
the stored (strictly positive) entries.  Every operation here is pure and
returns a new value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

TOTALS_RTOL = 1e-9


class DimensionError(ValueError):
    """Raised when vector or matrix shapes do not agree."""


class MarginalError(ValueError):
    """Raised when a matrix violates the marginal constraint it is declared to satisfy."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NonnegMatrix:
    """An ``n_rows x n_cols`` nonnegative matrix stored by its support.

    ``rows``, ``cols`` and ``values`` are parallel arrays sorted row-major.
    Absent positions are exact zeros.  Zero rows and zero columns are
    rejected at construction.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.n_rows < 1 or self.n_cols < 1:
            raise DimensionError("matrix dimensions must be positive")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == values.shape):
            raise DimensionError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.n_rows
                          or cols.min() < 0 or cols.max() >= self.n_cols):
            raise DimensionError("support index out of range")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("stored entries must be strictly positive and finite")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                raise ValueError("duplicate support entry")
        if np.unique(rows).size != self.n_rows:
            raise ValueError("matrix has a zero row")
        if np.unique(cols).size != self.n_cols:
            raise ValueError("matrix has a zero column")
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "cols", _frozen(cols))
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_dense(cls, dense: Sequence[Sequence[float]] | np.ndarray) -> NonnegMatrix:
        a = np.asarray(dense, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionError("dense input must be two-dimensional")
        if np.any(a < 0):
            raise ValueError("entries must be nonnegative")
        rows, cols = np.nonzero(a)
        return cls(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @classmethod
    def from_entries(cls, n_rows: int, n_cols: int,
                     entries: Mapping[tuple[int, int], float]) -> NonnegMatrix:
        keys = list(entries)
        rows = [i for i, _ in keys]
        cols = [j for _, j in keys]
        return cls(n_rows, n_cols, np.array(rows, dtype=np.int64),
                   np.array(cols, dtype=np.int64),
                   np.array([entries[k] for k in keys], dtype=np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def entries(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(v)
                for i, j, v in zip(self.rows, self.cols, self.values)}

    def support(self) -> frozenset[tuple[int, int]]:
        return frozenset(zip(self.rows.tolist(), self.cols.tolist()))

    def with_values(self, values: np.ndarray) -> NonnegMatrix:
        """Same support, new values (listed in this matrix's entry order)."""
        return NonnegMatrix(self.n_rows, self.n_cols, self.rows, self.cols, values)

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n_rows, self.n_cols))
        a[self.rows, self.cols] = self.values
        return a

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.values, minlength=self.n_rows)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.values, minlength=self.n_cols)

    def transpose(self) -> NonnegMatrix:
        return NonnegMatrix(self.n_cols, self.n_rows, self.cols, self.rows, self.values)

    def submatrix(self, rows: Sequence[int], cols: Sequence[int]) -> NonnegMatrix:
        """Restriction to ``rows x cols``, reindexed in the given order."""
        rpos = {int(i): k for k, i in enumerate(rows)}
        cpos = {int(j): k for k, j in enumerate(cols)}
        keep = [e for e in range(self.nnz)
                if int(self.rows[e]) in rpos and int(self.cols[e]) in cpos]
        return NonnegMatrix(len(rows), len(cols),
                            np.array([rpos[int(self.rows[e])] for e in keep], dtype=np.int64),
                            np.array([cpos[int(self.cols[e])] for e in keep], dtype=np.int64),
                            self.values[keep])

    def neighbors(self, X: Iterable[int]) -> frozenset[int]:
        """Columns adjacent to some row of ``X`` (the set Gamma(X))."""
        mask = np.zeros(self.n_rows, dtype=bool)
        mask[list(X)] = True
        return frozenset(np.unique(self.cols[mask[self.rows]]).tolist())

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_rows)]
        for i, j in zip(self.rows.tolist(), self.cols.tolist()):
            adj[i].append(j)
        return adj

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NonnegMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.values, other.values))

    def __hash__(self) -> int:
        return hash((self.shape, self.rows.tobytes(), self.cols.tobytes(),
                     self.values.tobytes()))


def _as_fraction(x: object) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(float(x))


@dataclass(frozen=True)
class MarginalPair:
    """Target row marginals ``r`` and column marginals ``c``.

    Components are held as exact fractions so that the combinatorial side
    (slopes, critical parameters) is exact.  Floats are converted exactly;
    pass strings such as ``"0.1"`` to get the decimal value.
    """

    r: tuple[Fraction, ...]
    c: tuple[Fraction, ...]
    R: Fraction = field(init=False)
    C: Fraction = field(init=False)

    def __post_init__(self) -> None:
        r = tuple(_as_fraction(x) for x in self.r)
        c = tuple(_as_fraction(x) for x in self.c)
        if not r or not c:
            raise DimensionError("marginals must be nonempty")
        if any(x <= 0 for x in r) or any(x <= 0 for x in c):
            raise ValueError("marginals must be strictly positive")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "R", sum(r, Fraction(0)))
        object.__setattr__(self, "C", sum(c, Fraction(0)))

    @classmethod
    def uniform(cls, n: int, m: int) -> MarginalPair:
        return cls((1,) * n, (1,) * m)

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def m(self) -> int:
        return len(self.c)

    @property
    def r_float(self) -> np.ndarray:
        return np.array([float(x) for x in self.r])

    @property
    def c_float(self) -> np.ndarray:
        return np.array([float(x) for x in self.c])

    def check_dims(self, A: NonnegMatrix) -> None:
        if (self.n, self.m) != A.shape:
            raise DimensionError(
                f"marginals have lengths ({self.n}, {self.m}) but matrix is {A.n_rows}x{A.n_cols}")


@dataclass(frozen=True)
class StableSet:
    """Row set ``X`` and column set ``Y`` spanning no support entry."""

    X: frozenset[int]
    Y: frozenset[int]

    @classmethod
    def of(cls, A: NonnegMatrix, X: Iterable[int], Y: Iterable[int]) -> StableSet:
        s = cls(frozenset(int(i) for i in X), frozenset(int(j) for j in Y))
        if not is_stable(A, s.X, s.Y):
            raise ValueError("X and Y span a support entry")
        return s

    @classmethod
    def maximal(cls, A: NonnegMatrix, X: Iterable[int]) -> StableSet:
        """``X`` together with every column outside Gamma(X)."""
        X = frozenset(int(i) for i in X)
        return cls(X, frozenset(range(A.n_cols)) - A.neighbors(X))


def is_stable(A: NonnegMatrix, X: Iterable[int], Y: Iterable[int]) -> bool:
    X, Y = set(X), set(Y)
    return not any(int(i) in X and int(j) in Y for i, j in zip(A.rows, A.cols))


def _vector(v: Sequence[float] | np.ndarray, n: int, name: str) -> np.ndarray:
    a = np.asarray([float(x) for x in v], dtype=np.float64)
    if a.shape != (n,):
        raise DimensionError(f"{name} has length {a.size}, expected {n}")
    return a


def row_normalize(A: NonnegMatrix, r: Sequence[float] | np.ndarray) -> NonnegMatrix:
    """Scale each row ``i`` by ``r_i / (A 1)_i``."""
    r = _vector(r, A.n_rows, "r")
    if np.any(r <= 0):
        raise ValueError("r must be strictly positive")
    factor = r / A.row_sums()
    return A.with_values(A.values * factor[A.rows])


def col_normalize(A: NonnegMatrix, c: Sequence[float] | np.ndarray) -> NonnegMatrix:
    """Scale each column ``j`` by ``c_j / (A^T 1)_j``."""
    c = _vector(c, A.n_cols, "c")
    if np.any(c <= 0):
        raise ValueError("c must be strictly positive")
    factor = c / A.col_sums()
    return A.with_values(A.values * factor[A.cols])


def _kl_terms(p: Iterable[float], q: Iterable[float]) -> float:
    terms = []
    for pi, qi in zip(p, q):
        if pi == 0:
            continue
        if qi == 0:
            return math.inf
        terms.append(pi * math.log(pi / qi))
    return math.fsum(terms)


def kl_vec(p: Sequence[float] | np.ndarray, q: Sequence[float] | np.ndarray) -> float:
    """``sum_i p_i log(p_i/q_i)`` with ``0 log 0/x = 0`` and ``x log x/0 = inf``."""
    p = [float(x) for x in p]
    q = [float(x) for x in q]
    if len(p) != len(q):
        raise DimensionError("kl_vec needs vectors of equal length")
    return _kl_terms(p, q)


def kl_matrix(M: NonnegMatrix, N: NonnegMatrix) -> float:
    """Entrywise KL divergence ``D(M || N)``; ``inf`` unless supp M is in supp N."""
    if M.shape != N.shape:
        raise DimensionError("kl_matrix needs matrices of equal shape")
    n_entries = N.entries
    p = M.values.tolist()
    q = [n_entries.get(k, 0.0) for k in zip(M.rows.tolist(), M.cols.tolist())]
    return _kl_terms(p, q)


def pinsker_gap(p: Sequence[float] | np.ndarray, q: Sequence[float] | np.ndarray) -> float:
    """``D(p||q) - ||p - q||_1^2 / (2 p_total)``, nonnegative by Pinsker's inequality."""
    p = [float(x) for x in p]
    q = [float(x) for x in q]
    if len(p) != len(q):
        raise DimensionError("pinsker_gap needs vectors of equal length")
    tp, tq = math.fsum(p), math.fsum(q)
    if not math.isclose(tp, tq, rel_tol=TOTALS_RTOL, abs_tol=0.0):
        raise ValueError(f"totals differ: {tp} vs {tq}")
    l1 = math.fsum(abs(a - b) for a, b in zip(p, q))
    return kl_vec(p, q) - l1 * l1 / (2.0 * tp)
