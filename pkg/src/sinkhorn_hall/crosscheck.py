"""Compare the flow-based decomposition and the blocker with the brute-force oracle."""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations_with_replacement, permutations
from typing import Iterator

import numpy as np

from . import oracle
from .blocker import BipartiteGraph, find_blocker
from .decomp import approx_scalable, exact_scalable, principal_partition, refined_chain
from .matrix import MarginalPair, NonnegMatrix


def patterns(n: int, m: int | None = None) -> Iterator[NonnegMatrix]:
    """All ``n x m`` 0/1 patterns without a zero row or column, fewest entries first."""
    m = n if m is None else m
    cells = [(i, j) for i in range(n) for j in range(m)]
    masks = sorted(range(1 << len(cells)), key=lambda x: (bin(x).count("1"), x))
    for mask in masks:
        on = [cells[k] for k in range(len(cells)) if mask >> k & 1]
        if {i for i, _ in on} == set(range(n)) and {j for _, j in on} == set(range(m)):
            yield NonnegMatrix.from_entries(n, m, dict.fromkeys(on, 1.0))


def pattern_classes(n: int, m: int) -> list[NonnegMatrix]:
    """One representative per row/column permutation class of ``n x m`` patterns.

    Rows are bitmasks over the columns; a class is the lexicographically
    smallest sorted row tuple over all column permutations.
    """
    perms = list(permutations(range(m)))
    table = [[sum(1 << p[b] for b in range(m) if mask >> b & 1) for mask in range(1 << m)]
             for p in perms]
    full = (1 << m) - 1
    seen = set()
    for rows in combinations_with_replacement(range(1, 1 << m), n):
        acc = 0
        for x in rows:
            acc |= x
        if acc != full:
            continue
        seen.add(min(tuple(sorted(t[x] for x in rows)) for t in table))
    out = []
    for rows in sorted(seen):
        entries = {(i, j): 1.0 for i, x in enumerate(rows) for j in range(m) if x >> j & 1}
        out.append(NonnegMatrix.from_entries(n, m, entries))
    return out


def graph_of(A: NonnegMatrix) -> BipartiteGraph:
    return BipartiteGraph(A.n_rows, A.n_cols, frozenset(A.support()))


def check_decomposition(A: NonnegMatrix, mp: MarginalPair) -> list[str]:
    bad = []
    pp = principal_partition(A, mp)
    sets, blocks, p_star = oracle.oracle_partition(A, mp)
    if list(pp.extreme_sets) != sets:
        bad.append("extreme stable sets differ from the hull oracle")
    if list(pp.blocks) != blocks:
        bad.append("blocks differ from the hull oracle")
    if pp.limit_marginal != p_star:
        bad.append("limit marginal differs from the hull oracle")
    if any(a >= b for a, b in zip(pp.slopes, pp.slopes[1:])):
        bad.append("slopes not strictly increasing")
    if not oracle.verify_kkt(pp):
        bad.append("KKT certificate fails")
    rd = refined_chain(A, mp, pp)
    for lam, chain in zip(pp.critical_params, rd.chains):
        optima = oracle.optimal_sets(A, mp, lam)
        if any(s not in optima for s in chain) or not oracle.is_maximal_chain(chain, optima):
            bad.append(f"chain at lambda={lam} is not a maximal chain of optima")
    if sum(A.shape) <= oracle.MAX_ENUM:
        approx, exact = oracle.scalability_by_enumeration(A, mp)
        if bool(approx_scalable(A, mp)) != approx:
            bad.append("approximate scalability disagrees with enumeration")
        if exact_scalable(A, mp) != exact:
            bad.append("exact scalability disagrees with enumeration")
    return bad


def check_blocker(G: BipartiteGraph, ell="auto") -> list[str]:
    bad = []
    rep = find_blocker(G, ell)
    X, val = oracle.max_deficiency_exhaustive(G.n1, G.edges)
    if rep.deficiency != val:
        bad.append(f"blocker deficiency {rep.deficiency} but the maximum is {val}")
    if oracle.maximum_matching(G.n1, G.n2, G.edges) != G.n1 - val:
        bad.append("matching size disagrees with the maximum deficiency")
    return bad


def check_all(A: NonnegMatrix, mp: MarginalPair | None = None, ell="auto") -> list[str]:
    mp = MarginalPair.uniform(*A.shape) if mp is None else mp
    return check_decomposition(A, mp) + check_blocker(graph_of(A), ell)


def random_pattern(rng: np.random.Generator, n: int, m: int, density: float) -> NonnegMatrix:
    """Random 0/1 pattern with every row and column hit (one forced entry each)."""
    dense = rng.random((n, m)) < density
    for i in range(n):
        dense[i, rng.integers(m)] = True
    for j in range(m):
        dense[rng.integers(n), j] = True
    return NonnegMatrix.from_dense(dense.astype(float))


def random_marginals(rng: np.random.Generator, n: int, m: int, top: int = 5) -> MarginalPair:
    """Rational marginals from integer weights in ``1..top``, both totals equal to ``n``."""
    r = [Fraction(int(x)) for x in rng.integers(1, top + 1, n)]
    c = [Fraction(int(x)) for x in rng.integers(1, top + 1, m)]
    R, C = sum(r), sum(c)
    return MarginalPair(tuple(x * n / R for x in r), tuple(x * n / C for x in c))


def planted_graph(rng: np.random.Generator, n: int, density: float) -> BipartiteGraph:
    """Random ``n x n`` graph in which a random row set sees too few columns.

    With probability one half no blocker is planted.
    """
    dense = rng.random((n, n)) < density
    if rng.random() < 0.5 and n >= 2:
        k = int(rng.integers(2, n + 1))
        X = rng.choice(n, size=k, replace=False)
        allowed = rng.choice(n, size=int(rng.integers(1, k)), replace=False)
        mask = np.zeros(n, dtype=bool)
        mask[allowed] = True
        dense[np.ix_(X, ~mask)] = False
        for i in X:
            dense[i, rng.choice(allowed)] = True
        rest = np.setdiff1d(np.arange(n), X)
        for j in np.flatnonzero(~mask):
            if not dense[:, j].any():
                if rest.size == 0:
                    dense[rng.choice(X), j] = True
                else:
                    dense[rng.choice(rest), j] = True
    for i in range(n):
        if not dense[i].any():
            dense[i, rng.integers(n)] = True
    for j in range(n):
        if not dense[:, j].any():
            dense[rng.integers(n), j] = True
    edges = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(dense)))
    return BipartiteGraph(n, n, edges)
