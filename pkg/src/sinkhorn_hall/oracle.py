"""Deliberately naive ground truth used to cross-check the fast paths.

Nothing here shares code with the flow-based decomposition or the log-domain
engine: subsets are enumerated, hulls use exact cross products, and the
dense Sinkhorn simulation normalizes rows and columns literally.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from .matrix import MarginalPair, NonnegMatrix, StableSet

MAX_ENUM = 20
MAX_DENSE = 50
MAX_STEPS = 10**7


class OracleLimitError(ValueError):
    """Input exceeds the size the exhaustive oracle accepts."""


class UnderflowError(ArithmeticError):
    """A support entry reached zero in the dense simulation."""


@dataclass(frozen=True)
class HullPoint:
    x: Fraction
    y: Fraction
    set: StableSet


def _subsets(n: int):
    for size in range(n + 1):
        yield from combinations(range(n), size)


def enumerate_stable(A: NonnegMatrix) -> list[StableSet]:
    """``X ⊔ ([m] - Gamma(X))`` for every row subset ``X``."""
    if A.n_rows > MAX_ENUM:
        raise OracleLimitError(f"enumeration limited to {MAX_ENUM} rows")
    adj = [set(js) for js in A.adjacency()]
    cols = frozenset(range(A.n_cols))
    out = []
    for X in _subsets(A.n_rows):
        gamma = set().union(*(adj[i] for i in X)) if X else set()
        out.append(StableSet(frozenset(X), cols - gamma))
    return out


def hull_points(A: NonnegMatrix, mp: MarginalPair) -> list[HullPoint]:
    return [HullPoint(sum((mp.r[i] for i in s.X), Fraction(0)),
                      sum((mp.c[j] for j in s.Y), Fraction(0)), s)
            for s in enumerate_stable(A)]


def _cross(o, a, b) -> Fraction:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_extremes(points: Sequence[HullPoint]) -> list[HullPoint]:
    """Vertices of the upper-right hull from ``(R, 0)`` to ``(0, C)``, by decreasing x.

    Points on a hull edge but not at a corner are discarded (strict turn test).
    """
    best: dict[tuple[Fraction, Fraction], HullPoint] = {}
    for p in points:
        best.setdefault((p.x, p.y), p)
    pts = sorted(best, key=lambda q: (-q[0], q[1]))
    chain: list[tuple[Fraction, Fraction]] = []
    for q in pts:
        # keep only strict right turns (clockwise when walking to smaller x)
        while len(chain) >= 2 and _cross(chain[-2], chain[-1], q) <= 0:
            chain.pop()
        chain.append(q)
    # drop the trailing part below the point with maximal y at x = 0
    top = max(range(len(chain)), key=lambda k: (chain[k][1], -chain[k][0]))
    chain = chain[: top + 1]
    return [best[q] for q in chain]


def oracle_partition(A: NonnegMatrix, mp: MarginalPair):
    """Extreme chain, blocks and limit marginal by brute force: ``(sets, blocks, p_star)``."""
    ext = hull_extremes(hull_points(A, mp))
    sets = [h.set for h in ext]
    blocks = []
    p_star = [Fraction(0)] * A.n_rows
    for a, b in zip(sets, sets[1:]):
        I = tuple(sorted(a.X - b.X))
        J = tuple(sorted(b.Y - a.Y))
        Rk = sum((mp.r[i] for i in I), Fraction(0))
        Ck = sum((mp.c[j] for j in J), Fraction(0))
        blocks.append((I, J))
        for i in I:
            p_star[i] = Ck / Rk * mp.r[i]
    return sets, blocks, tuple(p_star)


def optimal_sets(A: NonnegMatrix, mp: MarginalPair, lam: Fraction) -> list[StableSet]:
    """All maximal stable sets maximizing ``(1 - lam) r(X) + lam c(Y)``."""
    pts = hull_points(A, mp)
    vals = [(1 - lam) * p.x + lam * p.y for p in pts]
    top = max(vals)
    return [p.set for p, v in zip(pts, vals) if v == top]


def is_maximal_chain(chain: Sequence[StableSet], optima: Sequence[StableSet]) -> bool:
    """No optimal set fits strictly between consecutive members of ``chain``."""
    for big, small in zip(chain, chain[1:]):
        if not small.X < big.X:
            return False
        for s in optima:
            if small.X < s.X < big.X:
                return False
    return True


def max_deficiency_exhaustive(n1: int, edges) -> tuple[frozenset[int], int]:
    """Argmax of ``|X| - |Gamma(X)|``; ties go to the smallest, then lexicographically first, set."""
    if n1 > MAX_ENUM:
        raise OracleLimitError(f"enumeration limited to {MAX_ENUM} left vertices")
    adj = [set() for _ in range(n1)]
    for i, j in edges:
        adj[i].add(j)
    best, best_val = frozenset(), 0
    for X in _subsets(n1):
        gamma = set().union(*(adj[i] for i in X)) if X else set()
        val = len(X) - len(gamma)
        if val > best_val:
            best, best_val = frozenset(X), val
    return best, best_val


def maximum_matching(n1: int, n2: int, edges) -> int:
    """Size of a maximum matching by repeated augmenting paths (Kuhn)."""
    adj = [[] for _ in range(n1)]
    for i, j in edges:
        adj[i].append(j)
    match_col = [-1] * n2

    def augment(i: int, seen: list[bool]) -> bool:
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if match_col[j] < 0 or augment(match_col[j], seen):
                    match_col[j] = i
                    return True
        return False

    return sum(augment(i, [False] * n2) for i in range(n1))


def _matching_pairs(n1: int, n2: int, edges) -> tuple[list[int], list[int]]:
    adj = [sorted(j for a, j in edges if a == i) for i in range(n1)]
    match_row, match_col = [-1] * n1, [-1] * n2

    def augment(i, seen):
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if match_col[j] < 0 or augment(match_col[j], seen):
                    match_col[j] = i
                    match_row[i] = j
                    return True
        return False

    for i in range(n1):
        augment(i, [False] * n2)
    return match_row, match_col


def dm_decomposition(n1: int, n2: int, edges) -> list[tuple[frozenset[int], frozenset[int]]]:
    """Classical Dulmage-Mendelsohn blocks from a maximum matching.

    Returns the row-surplus part (rows reachable by alternating paths from
    unmatched rows, with their neighbours), the square components (strong
    components of the matched remainder) and the column-surplus part.
    Empty parts are omitted.
    """
    match_row, match_col = _matching_pairs(n1, n2, edges)
    adj = [set() for _ in range(n1)]
    radj = [set() for _ in range(n2)]
    for i, j in edges:
        adj[i].add(j)
        radj[j].add(i)
    # rows with surplus: alternate row -edge-> col -matching-> row from free rows
    hr = {i for i in range(n1) if match_row[i] < 0}
    hc: set[int] = set()
    frontier = list(hr)
    while frontier:
        i = frontier.pop()
        for j in adj[i]:
            if j not in hc:
                hc.add(j)
                k = match_col[j]
                if k >= 0 and k not in hr:
                    hr.add(k)
                    frontier.append(k)
    vc = {j for j in range(n2) if match_col[j] < 0}
    vr: set[int] = set()
    frontier = list(vc)
    while frontier:
        j = frontier.pop()
        for i in radj[j]:
            if i not in vr:
                vr.add(i)
                k = match_row[i]
                if k >= 0 and k not in vc:
                    vc.add(k)
                    frontier.append(k)
    sq_rows = [i for i in range(n1) if i not in hr and i not in vr]
    # strong components of row i -> row match_col[j] for edges (i, j) inside the square part
    sq_cols = {match_row[i] for i in sq_rows}
    succ = {i: {match_col[j] for j in adj[i] if j in sq_cols} for i in sq_rows}
    reach = {i: _reach(i, succ) for i in sq_rows}
    comps, seen = [], set()
    for i in sq_rows:
        if i in seen:
            continue
        comp = {k for k in reach[i] if i in reach[k]}
        seen |= comp
        comps.append((frozenset(comp), frozenset(match_row[k] for k in comp)))
    parts = [(frozenset(hr), frozenset(hc))] + comps + [(frozenset(vr), frozenset(vc))]
    return [p for p in parts if p[0] or p[1]]


def _reach(start: int, succ: dict[int, set[int]]) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for w in succ[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def dense_sinkhorn(A, r, c, steps: int, strict: bool = True) -> np.ndarray:
    """``N_steps`` by literal alternation ``N_0 = C(A)``, ``N_{k+1} = C(R(N_k))`` on a dense array.

    With ``strict`` a support entry that underflows to zero raises; otherwise
    the zero is returned as is.
    """
    N = np.array(A.to_dense() if isinstance(A, NonnegMatrix) else A, dtype=np.float64)
    if max(N.shape) > MAX_DENSE:
        raise OracleLimitError(f"dense simulation limited to {MAX_DENSE} per side")
    if steps > MAX_STEPS:
        raise OracleLimitError(f"dense simulation limited to {MAX_STEPS} steps")
    r = np.asarray(r, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    support = N > 0
    N = N * (c / N.sum(axis=0))[None, :]
    for _ in range(steps):
        N = N * (r / N.sum(axis=1))[:, None]
        N = N * (c / N.sum(axis=0))[None, :]
    if strict and np.any(N[support] == 0):
        raise UnderflowError("a support entry underflowed to zero")
    return N


def verify_kkt(pp) -> bool:
    """Gradient expansion and tight constraints at ``p*``, in exact arithmetic.

    Checks that ``r_i / p*_i`` equals ``R_1/C_1`` plus the positive slope
    increments of every extreme set containing ``i``, and that ``p*(X_k) =
    c(Gamma(X_k))`` for each extreme set.
    """
    mp = pp.marginals
    slopes = [R / C for R, C in pp.block_sums]
    coeffs = [slopes[0]] + [b - a for a, b in zip(slopes, slopes[1:])]
    if any(x <= 0 for x in coeffs):
        return False
    ext = pp.extreme_sets
    for i in range(len(mp.r)):
        grad = mp.r[i] / pp.limit_marginal[i]
        expansion = coeffs[0] + sum(coeffs[k] for k in range(1, pp.theta) if i in ext[k].X)
        if grad != expansion:
            return False
    cols = frozenset(range(len(mp.c)))
    for s in ext:
        if sum((pp.limit_marginal[i] for i in s.X), Fraction(0)) != \
                sum((mp.c[j] for j in cols - s.Y), Fraction(0)):
            return False
    return sum(pp.limit_marginal, Fraction(0)) == mp.C


def all_stable_pairs(A: NonnegMatrix) -> list[StableSet]:
    """Every pair ``(X, Y)`` with ``A[X, Y] = 0``, maximal or not."""
    n, m = A.shape
    if n + m > MAX_ENUM:
        raise OracleLimitError(f"pair enumeration limited to {MAX_ENUM} vertices")
    adj = [set(js) for js in A.adjacency()]
    out = []
    for X in _subsets(n):
        gamma = set().union(*(adj[i] for i in X)) if X else set()
        free = [j for j in range(m) if j not in gamma]
        for k in range(len(free) + 1):
            for Y in combinations(free, k):
                out.append(StableSet(frozenset(X), frozenset(Y)))
    return out


def scalability_by_enumeration(A: NonnegMatrix, mp: MarginalPair) -> tuple[bool, bool]:
    """``(approximate, exact)`` scalability read off the stable-set conditions.

    Approximate: ``R = C`` and ``r(X) + c(Y) <= C`` for every stable pair.
    Exact: additionally every tight pair has ``A[[n] - X, [m] - Y] = 0``.
    """
    if mp.R != mp.C:
        return False, False
    sup = A.support()
    approx, exact = True, True
    for s in all_stable_pairs(A):
        w = sum((mp.r[i] for i in s.X), Fraction(0)) + sum((mp.c[j] for j in s.Y), Fraction(0))
        if w > mp.C:
            return False, False
        if w == mp.C and any(i not in s.X and j not in s.Y for i, j in sup):
            exact = False
    return approx, exact
