"""Exact combinatorics of the Sinkhorn limit via parametric minimum cuts.

Stable sets ``X ⊔ Y`` (no support entry in ``X x Y``) correspond to source
sides ``{s} ∪ X ∪ ([m] - Y)`` of finite cuts in the bipartite network.  The
upper hull of the points ``(r(X), c(Y))`` is traced by breakpoint
divide-and-conquer, one max-flow per probe; all arithmetic on marginals is in
exact fractions with denominators cleared before the flow is solved.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import engine
from .matrix import (
    TOTALS_RTOL,
    DimensionError,
    MarginalError,
    MarginalPair,
    NonnegMatrix,
    StableSet,
    kl_vec,
    row_normalize,
)
from .maxflow import BipartiteNetwork

BLOCK_TOL = 1e-10
BLOCK_BUDGET = 10**6


class ConvergenceError(RuntimeError):
    """A block scaling did not reach its tolerance within the iteration budget."""


def _lcm_denominators(values: Sequence[Fraction]) -> int:
    d = 1
    for v in values:
        d = d * v.denominator // math.gcd(d, v.denominator)
    return d


def bipartite_network(A: NonnegMatrix, p: Sequence[Fraction],
                      c: Sequence[Fraction]) -> tuple[BipartiteNetwork, int]:
    """Network with integer capacities ``scale * p`` and ``scale * c``; returns ``(net, scale)``."""
    p = [Fraction(x) for x in p]
    c = [Fraction(x) for x in c]
    if len(p) != A.n_rows or len(c) != A.n_cols:
        raise DimensionError("capacity vectors do not match the matrix")
    scale = _lcm_denominators(p + c)
    net = BipartiteNetwork(A.n_rows, A.n_cols, sorted(A.support()),
                           [int(x * scale) for x in p], [int(x * scale) for x in c])
    return net, scale


@dataclass(frozen=True)
class ScalabilityResult:
    scalable: bool
    flow_value: Fraction
    witness: StableSet | None = None

    def __bool__(self) -> bool:
        return self.scalable


def approx_scalable(A: NonnegMatrix, mp: MarginalPair) -> ScalabilityResult:
    """Approximate ``(r, c)``-scalability by max-flow.

    When ``R = C`` but the flow falls short, the witness is the stable set of
    the minimal minimum cut, which has ``r(X) + c(Y) > C``.  When ``R != C``
    there is no witness.
    """
    mp.check_dims(A)
    net, scale = bipartite_network(A, mp.r, mp.c)
    value = Fraction(net.max_flow(), scale)
    if mp.R != mp.C:
        return ScalabilityResult(False, value)
    if value == mp.C:
        return ScalabilityResult(True, value)
    X, Y = net.split(net.reachable_from_source())
    return ScalabilityResult(False, value, StableSet(X, Y))


def _scc(nodes: Sequence[int], succ: dict[int, list[int]]) -> list[list[int]]:
    """Strongly connected components (iterative Tarjan) of the induced subgraph."""
    inside = set(nodes)
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in inside:
                    continue
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


@dataclass(frozen=True)
class CutLattice:
    """Optimal stable sets at one parameter, encoded by a residual graph.

    ``minimal`` and ``maximal`` are the optimal stable sets with the
    smallest and largest row set; ``pieces`` are the row/column sets of the
    residual strongly connected components between them, in the order in
    which a maximal chain removes them from ``maximal``.
    """

    lam: Fraction
    value: Fraction
    minimal: StableSet
    maximal: StableSet
    pieces: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]


def _lattice(A: NonnegMatrix, mp: MarginalPair, lam: Fraction,
             order: str = "min") -> CutLattice:
    net, scale = bipartite_network(A, [(1 - lam) * x for x in mp.r], [lam * x for x in mp.c])
    cut = net.max_flow()
    value = (1 - lam) * mp.R + lam * mp.C - Fraction(cut, scale)
    s_min = net.reachable_from_source()
    s_max = set(range(net.n_nodes)) - net.reaching_sink()
    between = sorted(s_max - s_min)
    succ = {v: net.residual_successors(v) for v in between}
    comps = _scc(between, succ)
    n = A.n_rows
    comp_of = {v: k for k, comp in enumerate(comps) for v in comp}

    def parts(comp):
        rows = tuple(sorted(v - 1 for v in comp if 1 <= v <= n))
        cols = tuple(sorted(v - 1 - n for v in comp if v > n))
        return rows, cols

    # a component can leave the source side once all its residual predecessors have
    preds = [set() for _ in comps]
    for v in between:
        for w in succ[v]:
            if w in comp_of and comp_of[w] != comp_of[v]:
                preds[comp_of[w]].add(comp_of[v])
    keys = []
    for comp in comps:
        rows, cols = parts(comp)
        key = (rows[0] if rows else math.inf, cols[0] if cols else math.inf)
        keys.append(key if order == "min" else tuple(-x for x in key))
    indeg = [len(p) for p in preds]
    out = [[] for _ in comps]
    for k, ps in enumerate(preds):
        for q in ps:
            out[q].append(k)
    heap = [(keys[k], k) for k in range(len(comps)) if indeg[k] == 0]
    heapq.heapify(heap)
    pieces = []
    while heap:
        _, k = heapq.heappop(heap)
        pieces.append(parts(comps[k]))
        for q in out[k]:
            indeg[q] -= 1
            if indeg[q] == 0:
                heapq.heappush(heap, (keys[q], q))
    X0, Y0 = net.split(s_min)
    X1, Y1 = net.split(s_max)
    return CutLattice(lam, value, StableSet(X0, Y0), StableSet(X1, Y1), tuple(pieces))


@dataclass(frozen=True)
class ParametricResult:
    lam: Fraction
    value: Fraction
    optimum: StableSet
    lattice: CutLattice


def parametric_objective(A: NonnegMatrix, mp: MarginalPair, lam) -> ParametricResult:
    """Maximize ``(1 - lam) r(X) + lam c(Y)`` over stable sets by one minimum cut.

    The returned optimum is the one with the smallest row set.
    """
    mp.check_dims(A)
    lam = Fraction(lam)
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    lat = _lattice(A, mp, lam)
    return ParametricResult(lam, lat.value, lat.minimal, lat)


def exact_scalable(A: NonnegMatrix, mp: MarginalPair) -> bool:
    """Exact ``(r, c)``-scalability.

    Every tight stable set is a minimum cut at ``lambda = 1/2``; the
    condition that each one splits ``A`` into diagonal blocks is equivalent
    to every support entry lying inside one residual strongly connected
    component.
    """
    if not approx_scalable(A, mp):
        return False
    lat = _lattice(A, mp, Fraction(1, 2))
    row_comp, col_comp = {}, {}
    for k, (rows, cols) in enumerate(lat.pieces):
        row_comp.update(dict.fromkeys(rows, k))
        col_comp.update(dict.fromkeys(cols, k))
    return all(row_comp[int(i)] == col_comp[int(j)] for i, j in zip(A.rows, A.cols))


@dataclass(frozen=True)
class PrincipalPartition:
    """Extreme stable sets, the induced block partition, and the limit row marginal.

    Index ``kappa`` runs ``1..theta`` in the mathematical notation and
    ``0..theta-1`` in the Python lists ``blocks``, ``block_sums`` and
    ``critical_params``; ``extreme_sets`` has ``theta + 1`` members.
    """

    shape: tuple[int, int]
    marginals: MarginalPair
    theta: int
    extreme_sets: tuple[StableSet, ...]
    blocks: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    block_sums: tuple[tuple[Fraction, Fraction], ...]
    limit_marginal: tuple[Fraction, ...]
    critical_params: tuple[Fraction, ...]

    @property
    def slopes(self) -> tuple[Fraction, ...]:
        """``R_kappa / C_kappa``, strictly increasing."""
        return tuple(R / C for R, C in self.block_sums)

    def p_star(self) -> np.ndarray:
        return np.array([float(x) for x in self.limit_marginal])

    def row_block(self) -> list[int]:
        """Block number (0-based) of each row."""
        out = [0] * self.shape[0]
        for k, (rows, _) in enumerate(self.blocks):
            for i in rows:
                out[i] = k
        return out

    def col_block(self) -> list[int]:
        out = [0] * self.shape[1]
        for k, (_, cols) in enumerate(self.blocks):
            for j in cols:
                out[j] = k
        return out

    def limit_divergence(self) -> float:
        """``D(r || p*)``, the optimal value of the alternating minimization."""
        return kl_vec(self.marginals.r_float, self.p_star())


def principal_partition(A: NonnegMatrix, mp: MarginalPair) -> PrincipalPartition:
    """All extreme stable sets by breakpoint divide-and-conquer on the parameter."""
    mp.check_dims(A)
    n, m = A.shape
    full = StableSet.maximal(A, range(n))
    empty = StableSet(frozenset(), frozenset(range(m)))

    def point(s: StableSet) -> tuple[Fraction, Fraction]:
        return (sum((mp.r[i] for i in s.X), Fraction(0)),
                sum((mp.c[j] for j in s.Y), Fraction(0)))

    chain = [full]
    params: list[Fraction] = []
    pending = [(full, empty)]
    # depth-first, left (large X) segment first, so ``chain`` grows in order
    while pending:
        a, b = pending.pop()
        (xa, ya), (xb, yb) = point(a), point(b)
        lam = (xa - xb) / ((xa - xb) + (yb - ya))
        res = parametric_objective(A, mp, lam)
        line = (1 - lam) * xa + lam * ya
        if res.value == line:
            params.append(lam)
            chain.append(b)
        else:
            q = res.optimum
            pending.append((q, b))
            pending.append((a, q))
    theta = len(params)
    assert theta >= 1
    blocks, sums = [], []
    p_star = [Fraction(0)] * n
    for k in range(1, theta + 1):
        I = tuple(sorted(chain[k - 1].X - chain[k].X))
        J = tuple(sorted(chain[k].Y - chain[k - 1].Y))
        Rk = sum((mp.r[i] for i in I), Fraction(0))
        Ck = sum((mp.c[j] for j in J), Fraction(0))
        blocks.append((I, J))
        sums.append((Rk, Ck))
        for i in I:
            p_star[i] = Ck / Rk * mp.r[i]
    return PrincipalPartition((n, m), mp, theta, tuple(chain), tuple(blocks), tuple(sums),
                              tuple(p_star), tuple(params))


@dataclass(frozen=True)
class FineBlock:
    kappa: int  # 1-based coarse block
    alpha: int  # 1-based position in the chain
    rows: tuple[int, ...]
    cols: tuple[int, ...]


@dataclass(frozen=True)
class RefinedDecomposition:
    chains: tuple[tuple[StableSet, ...], ...]
    fine_blocks: tuple[FineBlock, ...]

    def blocks_of(self, kappa: int) -> list[FineBlock]:
        return [b for b in self.fine_blocks if b.kappa == kappa]


def refined_chain(A: NonnegMatrix, mp: MarginalPair, pp: PrincipalPartition,
                  order: str = "min") -> RefinedDecomposition:
    """A maximal chain of optimal stable sets at each critical parameter.

    ``order`` breaks ties between independent residual components by their
    smallest index (``"min"``) or largest (``"max"``); any maximal chain
    yields the same family of fine blocks.
    """
    chains, fine = [], []
    for k, lam in enumerate(pp.critical_params, start=1):
        lat = _lattice(A, mp, lam, order)
        top, bottom = pp.extreme_sets[k - 1], pp.extreme_sets[k]
        if lat.maximal != top or lat.minimal != bottom:
            raise AssertionError("critical parameter does not reproduce its extreme sets")
        X, Y = set(top.X), set(top.Y)
        chain = [top]
        for alpha, (rows, cols) in enumerate(lat.pieces, start=1):
            X -= set(rows)
            Y |= set(cols)
            chain.append(StableSet(frozenset(X), frozenset(Y)))
            fine.append(FineBlock(k, alpha, rows, cols))
        if chain[-1] != bottom:
            raise AssertionError("chain does not end at the next extreme set")
        chains.append(tuple(chain))
    return RefinedDecomposition(tuple(chains), tuple(fine))


def block_marginals(mp: MarginalPair, pp: PrincipalPartition,
                    block: FineBlock) -> MarginalPair:
    """``(r restricted / R_kappa, c restricted / C_kappa)`` for a fine block."""
    Rk, Ck = pp.block_sums[block.kappa - 1]
    return MarginalPair(tuple(mp.r[i] / Rk for i in block.rows),
                        tuple(mp.c[j] / Ck for j in block.cols))


def scale_block(B: NonnegMatrix, mp: MarginalPair, tol: float = BLOCK_TOL,
                budget: int = BLOCK_BUDGET, chunk: int = 1000) -> engine.SinkhornState:
    """Sinkhorn on an exactly scalable block until the row error is below ``tol``."""
    state = engine.init(B, mp)
    r = mp.r_float
    while True:
        if np.max(np.abs(state.row_marginal() - r)) < tol:
            return state
        if state.k >= budget:
            raise ConvergenceError(f"block did not reach {tol} within {budget} iterations")
        state, _ = engine.run(B, mp, min(chunk, budget - state.k), record_stride=0, state=state)


def sinkhorn_limit(A: NonnegMatrix, mp: MarginalPair, pp: PrincipalPartition,
                   rd: RefinedDecomposition, block_budget: int = BLOCK_BUDGET,
                   block_tol: float = BLOCK_TOL) -> tuple[NonnegMatrix, NonnegMatrix]:
    """The limit pair ``(M*, N*)`` assembled from scaled fine blocks.

    Off-block positions are absent from the returned supports, i.e. exact zeros.
    """
    m_entries: dict[tuple[int, int], float] = {}
    n_entries: dict[tuple[int, int], float] = {}
    for block in rd.fine_blocks:
        Rk, Ck = pp.block_sums[block.kappa - 1]
        bmp = block_marginals(mp, pp, block)
        sub = A.submatrix(block.rows, block.cols)
        state = scale_block(sub, bmp, block_tol, block_budget)
        Bn = state.matrix()
        Bm = row_normalize(Bn, bmp.r_float)
        for (a, b), v in Bn.entries.items():
            n_entries[(block.rows[a], block.cols[b])] = float(Ck) * v
        for (a, b), v in Bm.entries.items():
            m_entries[(block.rows[a], block.cols[b])] = float(Rk) * v
    return (NonnegMatrix.from_entries(A.n_rows, A.n_cols, m_entries),
            NonnegMatrix.from_entries(A.n_rows, A.n_cols, n_entries))


@dataclass(frozen=True)
class OffDiagonalMass:
    """Mass of a column-feasible matrix in the upper off-diagonal blocks.

    ``delta_pairs[(kappa, lam)]`` (1-based, ``kappa < lam``) is the sum of
    ``N`` over ``I_kappa x J_lam``.
    """

    delta_pairs: dict[tuple[int, int], float]
    delta_blocks: tuple[float, ...]
    delta_total: float


def _as_dense(N) -> np.ndarray:
    if isinstance(N, NonnegMatrix):
        return N.to_dense()
    return np.asarray(N, dtype=np.float64)


def off_diagonal_mass(N, pp: PrincipalPartition) -> OffDiagonalMass:
    N = _as_dense(N)
    if N.shape != pp.shape:
        raise DimensionError("N does not match the partition")
    c = pp.marginals.c_float
    if np.any(N < 0) or not np.allclose(N.sum(axis=0), c, rtol=TOTALS_RTOL, atol=0.0):
        raise MarginalError("N violates the column constraint")
    theta = pp.theta
    pairs: dict[tuple[int, int], float] = {}
    for a in range(theta):
        I = list(pp.blocks[a][0])
        for b in range(a + 1, theta):
            J = list(pp.blocks[b][1])
            pairs[(a + 1, b + 1)] = math.fsum(N[np.ix_(I, J)].ravel())
    blocks = tuple(
        math.fsum([pairs[(k, g)] for g in range(k + 1, theta + 1)])
        - math.fsum([pairs[(g, k)] for g in range(1, k)])
        for k in range(1, theta + 1))
    total = math.fsum(pairs.values())
    p = N.sum(axis=1)
    for k, ((I, _), (_, Ck)) in enumerate(zip(pp.blocks, pp.block_sums)):
        lhs = math.fsum(p[list(I)])
        if not math.isclose(lhs, float(Ck) + blocks[k], rel_tol=1e-9, abs_tol=1e-9):
            raise MarginalError(f"block {k + 1}: p(I) = {lhs} but C + Delta = {float(Ck) + blocks[k]}")
    return OffDiagonalMass(pairs, blocks, total)


def lower_bound_certificate(N, pp: PrincipalPartition) -> float:
    """Right-hand side of the lower bound on ``D(r||p) - D(r||p*)`` for ``p = N 1``.

    The bound adds, over blocks, a Pinsker term on the renormalized block
    marginal and, over block pairs, the slope gap times the off-diagonal mass.
    """
    N = _as_dense(N)
    od = off_diagonal_mass(N, pp)
    p = N.sum(axis=1)
    p_star = pp.p_star()
    slopes = [float(s) for s in pp.slopes]
    terms = []
    for k, ((I, _), (Rk, Ck)) in enumerate(zip(pp.blocks, pp.block_sums)):
        Rk, Ck = float(Rk), float(Ck)
        idx = list(I)
        scaled = Ck / (Ck + od.delta_blocks[k]) * p[idx]
        l1 = math.fsum(np.abs(p_star[idx] - scaled))
        terms.append(Rk / (2.0 * Ck * Ck) * l1 * l1)
    for (a, b), d in od.delta_pairs.items():
        terms.append((slopes[b - 1] - slopes[a - 1]) * d)
    return math.fsum(terms)
