"""Sinkhorn iteration as alternating KL minimization.

The sequence is ``N_0 = C(A)``, ``M_k = R(N_k)``, ``N_{k+1} = C(M_k)``.  A
state stores the base matrix and log scaling factors ``xi``, ``eta``: the
represented matrix is ``exp(log A_ij + xi_i + eta_j)`` on the support of
``A``.  The entries themselves are carried alongside, updated
multiplicatively, because reconstructing them from the log factors loses
``|xi| * eps`` of relative precision once nonscalable inputs push the
factors of different blocks far apart.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from . import kernel
from .matrix import (
    TOTALS_RTOL,
    DimensionError,
    MarginalError,
    MarginalPair,
    NonnegMatrix,
    kl_vec,
)

GAUGE_LIMIT = 700.0
TINY = math.ulp(0.0)
LOG_EXACT = 1e-300  # below this, entries are read from the log factors
STOP_RULES = ("none", "linf", "perm")


class Phase(enum.Enum):
    AFTER_COL = "after_col"
    AFTER_ROW = "after_row"


@dataclass(frozen=True, eq=False)
class SinkhornState:
    base: NonnegMatrix
    marginals: MarginalPair
    log_row: np.ndarray
    log_col: np.ndarray
    entries: np.ndarray
    k: int = 0
    phase: Phase = Phase.AFTER_COL

    @property
    def r(self) -> np.ndarray:
        return self.marginals.r_float

    @property
    def c(self) -> np.ndarray:
        return self.marginals.c_float

    def values(self) -> np.ndarray:
        """Entries in the base matrix's support order; may underflow to 0.0."""
        return self.entries

    def log_values(self) -> np.ndarray:
        A = self.base
        return np.log(A.values) + self.log_row[A.rows] + self.log_col[A.cols]

    def matrix(self) -> NonnegMatrix:
        """The represented matrix (``N_k`` after a column phase, ``M_k`` after a row phase).

        Entries whose true value is below the float range are reported as the
        smallest positive subnormal so the support stays that of ``A``.
        """
        return self.base.with_values(np.maximum(self.entries, TINY))

    def row_marginal(self) -> np.ndarray:
        return np.bincount(self.base.rows, weights=self.values(), minlength=self.base.n_rows)

    def col_marginal(self) -> np.ndarray:
        return np.bincount(self.base.cols, weights=self.values(), minlength=self.base.n_cols)


def _gauge(xi: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # shifting xi by -t and eta by +t leaves every entry unchanged
    if np.max(np.abs(xi)) > GAUGE_LIMIT:
        t = 0.5 * (xi.max() + xi.min())
        xi = xi - t
        eta = eta + t
    return xi, eta


def _frozen_state(base, mp, xi, eta, entries, k, phase) -> SinkhornState:
    xi, eta = _gauge(np.array(xi, dtype=np.float64), np.array(eta, dtype=np.float64))
    entries = np.array(entries, dtype=np.float64)
    for a in (xi, eta, entries):
        a.setflags(write=False)
    return SinkhornState(base, mp, xi, eta, entries, k, phase)


def init(A: NonnegMatrix, mp: MarginalPair) -> SinkhornState:
    """State representing ``N_0 = C(A)``."""
    mp.check_dims(A)
    factor = mp.c_float / A.col_sums()
    return _frozen_state(A, mp, np.zeros(A.n_rows), np.log(factor),
                         A.values * factor[A.cols], 0, Phase.AFTER_COL)


def row_phase(s: SinkhornState) -> SinkhornState:
    """``M_k = R(N_k)`` as a state in phase ``AFTER_ROW``."""
    if s.phase is not Phase.AFTER_COL:
        raise ValueError("row phase applies to a column-normalized state")
    factor = s.r / s.row_marginal()
    return _frozen_state(s.base, s.marginals, s.log_row + np.log(factor), s.log_col,
                         s.entries * factor[s.base.rows], s.k, Phase.AFTER_ROW)


def col_phase(s: SinkhornState) -> SinkhornState:
    """``N_{k+1} = C(M_k)``."""
    if s.phase is not Phase.AFTER_ROW:
        raise ValueError("column phase applies to a row-normalized state")
    factor = s.c / s.col_marginal()
    return _frozen_state(s.base, s.marginals, s.log_row, s.log_col + np.log(factor),
                         s.entries * factor[s.base.cols], s.k + 1, Phase.AFTER_COL)


def step(s: SinkhornState) -> SinkhornState:
    """One row normalization followed by one column normalization."""
    return col_phase(row_phase(s))


def divergence(s: SinkhornState) -> float:
    """``D(M_k || N_k)``, evaluated as ``D(r || N_k 1)`` from the row marginal."""
    if s.phase is not Phase.AFTER_COL:
        raise ValueError("divergence is defined on column-normalized states")
    return kl_vec(s.r, s.row_marginal())


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Telemetry of a run, one row per recorded iteration."""

    k: np.ndarray
    divergence: np.ndarray
    linf_change: np.ndarray
    row_marginals: np.ndarray

    def __len__(self) -> int:
        return int(self.k.size)

    def is_nonincreasing(self, atol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.divergence) <= atol))

    def write_csv(self, fh: TextIO) -> None:
        n = self.row_marginals.shape[1] if self.row_marginals.ndim == 2 else 0
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "divergence", "linf_change"] + [f"p{i + 1}" for i in range(n)])
        for k, d, ch, p in zip(self.k, self.divergence, self.linf_change, self.row_marginals):
            w.writerow([int(k), repr(float(d)), repr(float(ch))] + [repr(float(x)) for x in p])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def default_stride(shape: tuple[int, int], budget: int) -> int:
    if max(shape) <= 64 and budget <= 10**6:
        return 1
    return max(1, math.ceil(budget / 10**4))


def _divergences(r: np.ndarray, P: np.ndarray) -> np.ndarray:
    if P.shape[0] == 0:
        return np.empty(0)
    return np.sum(r * np.log(r / P), axis=1)


def run(A: NonnegMatrix, mp: MarginalPair, budget: int, stop: str = "none",
        tol: float = 1e-12, record_stride: int | None = None, window: int | None = None,
        state: SinkhornState | None = None) -> tuple[SinkhornState, Trajectory]:
    """Iterate from ``state`` (default ``init(A, mp)``) for at most ``budget`` steps.

    ``stop`` is ``"none"`` (honor the budget), ``"linf"`` (stop once the
    sup-norm change of ``N_k 1`` drops below ``tol``) or ``"perm"`` (stop once
    the ascending order of ``N_k 1`` is unchanged for ``window`` consecutive
    iterations; an iteration whose sup-norm change is below ``tol`` also counts
    as unchanged).  ``record_stride=0`` disables telemetry.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if stop not in STOP_RULES:
        raise ValueError(f"unknown stopping rule {stop!r}")
    if state is None:
        state = init(A, mp)
    elif state.base is not A and state.base != A:
        raise DimensionError("state does not belong to this matrix")
    if state.phase is not Phase.AFTER_COL:
        raise ValueError("run starts from a column-normalized state")
    stride = default_stride(A.shape, budget) if record_stride is None else int(record_stride)
    if stride < 0:
        raise ValueError("record_stride must be nonnegative")
    if window is None:
        window = 2 * max(A.shape) ** 2
    r, c = state.r, state.c
    n = A.n_rows
    cap = budget // stride + 2 if stride else 0
    rec_k = np.zeros(cap, dtype=np.int64)
    rec_p = np.zeros((cap, n))
    rec_change = np.zeros(cap)
    xi = np.array(state.log_row, dtype=np.float64)
    eta = np.array(state.log_col, dtype=np.float64)
    values = np.array(state.entries, dtype=np.float64)
    prev_p = np.full(n, np.nan)
    mode = STOP_RULES.index(stop)
    done, nrec = kernel.sinkhorn_sweeps(
        np.ascontiguousarray(A.rows, dtype=np.int64), np.ascontiguousarray(A.cols, dtype=np.int64),
        np.log(A.values), values, xi, eta, r, c, int(budget), stride, int(state.k), mode, float(tol),
        int(window), prev_p, rec_k, rec_p, rec_change)
    final = _frozen_state(A, state.marginals, xi, eta, values, state.k + int(done),
                          Phase.AFTER_COL)
    P = rec_p[:nrec]
    traj = Trajectory(rec_k[:nrec].copy(), _divergences(r, P), rec_change[:nrec].copy(), P.copy())
    return final, traj


@dataclass(frozen=True)
class FivePointReport:
    three_point: float
    four_point: float
    five_point: float

    def holds(self, tol: float = 1e-9) -> bool:
        return (abs(self.three_point) <= tol and self.four_point >= -tol
                and self.five_point >= -tol)


def _dense(X: NonnegMatrix | np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    if isinstance(X, NonnegMatrix):
        return X.to_dense()
    return np.asarray(X, dtype=np.float64)


def _kl_dense(P: np.ndarray, Q: np.ndarray) -> float:
    return kl_vec(P.ravel(), Q.ravel())


def _support_logs(s: SinkhornState) -> np.ndarray:
    """Log of each support entry; underflowed entries come from the log factors."""
    e = s.values()
    with np.errstate(divide="ignore"):
        return np.where(e > LOG_EXACT, np.log(e), s.log_values())


def _kl_logs(p: np.ndarray, log_p: np.ndarray | None, log_q: np.ndarray) -> float:
    """``sum p log(p/q)`` over the support, ``q`` given by its logs."""
    keep = p > 0
    lp = np.log(p[keep]) if log_p is None else log_p[keep]
    return math.fsum((p[keep] * (lp - log_q[keep])).tolist())


def _check_member(X: np.ndarray, A: NonnegMatrix, target: np.ndarray, axis: int, name: str) -> None:
    if X.shape != A.shape:
        raise DimensionError(f"{name} has shape {X.shape}, expected {A.shape}")
    if np.any(X < 0):
        raise MarginalError(f"{name} has negative entries")
    if np.any(X[A.to_dense() == 0] != 0):
        raise MarginalError(f"{name} is not supported on the support of A")
    sums = X.sum(axis=axis)
    if not np.allclose(sums, target, rtol=TOTALS_RTOL, atol=0.0):
        raise MarginalError(f"{name} violates its marginal constraint")


def check_five_point(M, N, s: SinkhornState) -> FivePointReport:
    """Residuals of the 3-point equality and the 4- and 5-point inequalities.

    ``M`` must lie in the row-constrained set and ``N`` in the
    column-constrained set of ``s.base``; ``s`` supplies ``N_k``.
    """
    if s.phase is not Phase.AFTER_COL:
        raise ValueError("five-point check needs a column-normalized state")
    A = s.base
    M, N = _dense(M), _dense(N)
    _check_member(M, A, s.r, 1, "M")
    _check_member(N, A, s.c, 0, "N")
    # KL terms use log entries: N_k can hold entries far below the float range
    m_state = row_phase(s)
    states = (s, m_state, col_phase(m_state))
    lNk, lMk, lNk1 = (_support_logs(x) for x in states)
    m, mk = M[A.rows, A.cols], m_state.values()
    d_mk_nk = _kl_logs(mk, lMk, lNk)
    d_m_mk = _kl_logs(m, None, lMk)
    d_m_nk = _kl_logs(m, None, lNk)
    d_m_n = _kl_dense(M, N)
    d_m_nk1 = _kl_logs(m, None, lNk1)
    three = d_mk_nk + d_m_mk - d_m_nk
    four = d_m_mk + d_m_n - d_m_nk1
    five = d_m_n + d_m_nk - d_mk_nk - d_m_nk1
    return FivePointReport(three, four if math.isfinite(four) else math.inf,
                           five if math.isfinite(five) else math.inf)


def check_sublinear(traj: Trajectory, Dstar: float, D0: float, atol: float = 1e-9) -> bool:
    """Whether ``D(M_l||N_l) - Dstar <= D0 / l`` at every recorded ``l >= 1``."""
    mask = traj.k >= 1
    ks = traj.k[mask].astype(np.float64)
    return bool(np.all(traj.divergence[mask] - Dstar <= D0 / ks + atol))

