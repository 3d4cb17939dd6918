"""Sinkhorn & Sorting: Hall blockers of maximum deficiency from a scaled 0/1 matrix.

Scale the biadjacency matrix toward unit marginals, sort the row sums of
``N_k`` ascending and take every prefix.  Each prefix is then checked
exactly, so the reported deficiency is always a true value even when the
iteration count is too small for the guarantee.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import engine
from .matrix import MarginalPair, NonnegMatrix

AUTO_TOL = 1e-13


class IsolatedVertexError(ValueError):
    """A vertex of the bipartite graph has no incident edge."""


@dataclass(frozen=True)
class BipartiteGraph:
    """Left vertices ``0..n1-1``, right vertices ``0..n2-1``, edges ``(u, v)``."""

    n1: int
    n2: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("both sides need at least one vertex")
        for u, v in edges:
            if not (0 <= u < self.n1 and 0 <= v < self.n2):
                raise ValueError(f"edge ({u}, {v}) out of range")
        left = {u for u, _ in edges}
        right = {v for _, v in edges}
        lonely = [f"u{u + 1}" for u in range(self.n1) if u not in left]
        lonely += [f"v{v + 1}" for v in range(self.n2) if v not in right]
        if lonely:
            raise IsolatedVertexError("isolated vertex: " + ", ".join(lonely))

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def adjacency(self) -> list[frozenset[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n1)]
        for u, v in self.edges:
            adj[u].add(v)
        return [frozenset(a) for a in adj]


def matrix_of_graph(G: BipartiteGraph) -> NonnegMatrix:
    return NonnegMatrix.from_entries(G.n1, G.n2, dict.fromkeys(G.edges, 1.0))


def iteration_budget(n: int) -> int:
    """``ceil(64 n^7 ln n)``, enough iterations for the sorted prefixes to contain a maximizer."""
    if n < 2:
        raise ValueError("the budget is defined for n >= 2")
    return math.ceil(64 * n**7 * math.log(n))


@dataclass(frozen=True)
class Candidates:
    sets: tuple[frozenset[int], ...]
    order: tuple[int, ...]
    p_final: np.ndarray
    iterations_used: int
    budget_mode: str


@dataclass(frozen=True)
class HallReport:
    candidates: tuple[frozenset[int], ...]
    best_set: frozenset[int]
    deficiency: int
    matching_number: int
    has_perfect_matching: bool
    iterations_used: int
    p_final: np.ndarray
    budget_mode: str

    @property
    def guarantee(self) -> str:
        """``"certified"`` when the theorem budget was met, else ``"heuristic budget"``."""
        return "certified" if self.budget_mode == "theorem" else "heuristic budget"


def sinkhorn_and_sort(G: BipartiteGraph, ell: int | str = "auto") -> Candidates:
    """Prefix sets of the rows sorted by ascending ``N_ell 1``.

    ``ell`` is an iteration count, ``"theorem"`` for :func:`iteration_budget`,
    or ``"auto"``: stop once the sorted order has been unchanged for
    ``2 n^2`` consecutive iterations (capped at the theorem budget).  Near a
    limit with tied entries the order flips on rounding noise, so iterations
    where ``p`` moves by less than ``AUTO_TOL`` also count as unchanged.
    """
    A = matrix_of_graph(G)
    mp = MarginalPair.uniform(G.n1, G.n2)
    budget = iteration_budget(G.n)
    if ell == "auto":
        state, _ = engine.run(A, mp, budget, stop="perm", tol=AUTO_TOL, window=2 * G.n**2,
                              record_stride=0)
        mode = "theorem" if state.k >= budget else "auto"
    else:
        if ell == "theorem":
            ell = budget
        ell = int(ell)
        if ell < 0:
            raise ValueError("ell must be nonnegative")
        state, _ = engine.run(A, mp, ell, record_stride=0)
        mode = "theorem" if ell >= budget else "fixed"
    p = state.row_marginal()
    order = tuple(int(i) for i in np.argsort(p, kind="stable"))
    sets = tuple(frozenset(order[:k]) for k in range(G.n1 + 1))
    p.setflags(write=False)
    return Candidates(sets, order, p, int(state.k), mode)


def deficiency(G: BipartiteGraph, X: Iterable[int]) -> int:
    """``|X| - |Gamma(X)|``."""
    X = set(X)
    return len(X) - len({v for u, v in G.edges if u in X})


def best_blocker(G: BipartiteGraph, candidates: Candidates | Sequence[Iterable[int]]) -> HallReport:
    """Exact deficiency of every candidate; the maximizer (ties to the smaller set) wins."""
    if isinstance(candidates, Candidates):
        sets, meta = candidates.sets, candidates
    else:
        sets, meta = tuple(frozenset(s) for s in candidates), None
    if not sets:
        raise ValueError("at least one candidate is required")
    adj = G.adjacency()
    best, best_def = None, None
    for X in sets:
        gamma = frozenset().union(*(adj[u] for u in X))
        d = len(X) - len(gamma)
        if best_def is None or d > best_def or (d == best_def and len(X) < len(best)):
            best, best_def = X, d
    return HallReport(
        candidates=sets,
        best_set=best,
        deficiency=best_def,
        matching_number=G.n1 - best_def,
        has_perfect_matching=best_def <= 0 and G.n1 == G.n2,
        iterations_used=meta.iterations_used if meta else 0,
        p_final=meta.p_final if meta else np.empty(0),
        budget_mode=meta.budget_mode if meta else "external",
    )


def find_blocker(G: BipartiteGraph, ell: int | str = "auto") -> HallReport:
    return best_blocker(G, sinkhorn_and_sort(G, ell))
