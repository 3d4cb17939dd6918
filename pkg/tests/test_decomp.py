from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinkhorn_hall import decomp, engine, oracle
from sinkhorn_hall.decomp import (
    ConvergenceError,
    approx_scalable,
    bipartite_network,
    exact_scalable,
    lower_bound_certificate,
    off_diagonal_mass,
    parametric_objective,
    principal_partition,
    refined_chain,
    sinkhorn_limit,
)
from sinkhorn_hall.matrix import (
    MarginalError,
    MarginalPair,
    NonnegMatrix,
    StableSet,
    col_normalize,
    is_stable,
    kl_vec,
)
from sinkhorn_hall.maxflow import BipartiteNetwork, FlowNetwork

from conftest import HALL3, ONES2, balanced_marginals, patterns

F = Fraction


def ss(X, Y):
    return StableSet(frozenset(X), frozenset(Y))


def uni(A):
    return MarginalPair.uniform(*A.shape)


@st.composite
def instances(draw, max_n=4, balanced_only=False):
    A = draw(patterns(max_n))
    if balanced_only or draw(st.booleans()):
        mp = draw(balanced_marginals(*A.shape))
    else:
        mp = uni(A)
    return A, mp


class TestMaxFlow:
    def test_small_network(self):
        net = FlowNetwork(4, 0, 3)
        net.add_arc(0, 1, 3)
        net.add_arc(0, 2, 2)
        net.add_arc(1, 2, 5)
        net.add_arc(1, 3, 2)
        net.add_arc(2, 3, 3)
        assert net.max_flow() == 5
        assert net.reachable_from_source() == {0}
        assert net.reaching_sink() == {3}

    def test_negative_capacity(self):
        with pytest.raises(ValueError):
            FlowNetwork(2, 0, 1).add_arc(0, 1, -1)

    def test_bipartite_flow_matrix(self):
        net = BipartiteNetwork(2, 2, [(0, 0), (0, 1), (1, 1)], [1, 1], [1, 1])
        assert net.max_flow() == 2
        assert net.flow_matrix() == {(0, 0): 1, (0, 1): 0, (1, 1): 1}
        assert net.infinity == 5

    def test_denominators_cleared(self):
        A = NonnegMatrix.from_dense(HALL3)
        net, scale = bipartite_network(A, [F(1, 2), F(1, 3), 1], [F(1, 6), 1, 1])
        assert scale == 6
        assert [net.cap[e] for e in net.source_arcs] == [3, 2, 6]
        assert len(net.edge_arcs) == A.nnz
        assert all(net.cap[e] == net.infinity for e in net.edge_arcs.values())

    @settings(max_examples=60, deadline=None)
    @given(instances(4), st.fractions(0, 1, max_denominator=7))
    def test_cut_duality(self, inst, lam):
        A, mp = inst
        res = parametric_objective(A, mp, lam)
        net, scale = bipartite_network(A, [(1 - lam) * x for x in mp.r],
                                       [lam * x for x in mp.c])
        cut = net.max_flow()
        X, Y = res.optimum.X, res.optimum.Y
        assert is_stable(A, X, Y)
        rX = sum((mp.r[i] for i in X), F(0))
        cY = sum((mp.c[j] for j in Y), F(0))
        # cut capacity identity, scaled to integers
        assert cut == scale * ((1 - lam) * (mp.R - rX) + lam * (mp.C - cY))
        assert res.value == (1 - lam) * rX + lam * cY
        brute = max((1 - lam) * p.x + lam * p.y for p in oracle.hull_points(A, mp))
        assert res.value == brute


class TestScalability:
    def test_ones(self):
        A = NonnegMatrix.from_dense(ONES2)
        res = approx_scalable(A, uni(A))
        assert res and res.flow_value == 2 and res.witness is None

    def test_hall_witness(self, hall3):
        A, mp = hall3
        res = approx_scalable(A, mp)
        assert not res
        assert res.witness == ss({0, 1}, {1, 2})
        X, Y = res.witness.X, res.witness.Y
        assert sum(mp.r[i] for i in X) + sum(mp.c[j] for j in Y) == 4 > mp.C

    def test_e2_approx_only(self, e2):
        A, mp = e2
        assert approx_scalable(A, mp)
        assert not exact_scalable(A, mp)

    @pytest.mark.parametrize("a", [[[2, 0], [0, 3]], ONES2])
    def test_exact(self, a):
        A = NonnegMatrix.from_dense(a)
        assert exact_scalable(A, uni(A))

    def test_unequal_totals(self):
        A = NonnegMatrix.from_dense(ONES2)
        res = approx_scalable(A, MarginalPair((1, 1), (1, 2)))
        assert not res and res.witness is None
        assert not exact_scalable(A, MarginalPair((1, 1), (1, 2)))

    @settings(max_examples=80, deadline=None)
    @given(instances(3))
    def test_agrees_with_enumeration(self, inst):
        A, mp = inst
        approx, exact = oracle.scalability_by_enumeration(A, mp)
        assert bool(approx_scalable(A, mp)) == approx
        assert exact_scalable(A, mp) == exact


class TestParametric:
    def test_endpoints(self, hall3):
        A, mp = hall3
        lo = parametric_objective(A, mp, 0)
        assert lo.value == 3 and lo.optimum == ss({0, 1, 2}, set())
        hi = parametric_objective(A, mp, 1)
        assert hi.value == 3 and hi.optimum == ss(set(), {0, 1, 2})

    def test_hall_half(self, hall3):
        A, mp = hall3
        res = parametric_objective(A, mp, F(1, 2))
        assert res.value == 2
        assert res.optimum == ss({0, 1}, {1, 2})

    def test_range(self, hall3):
        with pytest.raises(ValueError):
            parametric_objective(*hall3, F(3, 2))

    @settings(max_examples=50, deadline=None)
    @given(instances(4), st.fractions(0, 1, max_denominator=5))
    def test_lattice_extremes(self, inst, lam):
        A, mp = inst
        lat = parametric_objective(A, mp, lam).lattice
        optima = oracle.optimal_sets(A, mp, lam)
        assert lat.minimal in optima and lat.maximal in optima
        assert all(lat.minimal.X <= s.X <= lat.maximal.X for s in optima)
        # optima are closed under meet and join
        for a in optima:
            for b in optima:
                for X in (a.X | b.X, a.X & b.X):
                    assert StableSet.maximal(A, X) in optima


class TestPrincipalPartition:
    def test_ones(self):
        A = NonnegMatrix.from_dense(ONES2)
        pp = principal_partition(A, uni(A))
        assert pp.theta == 1
        assert pp.blocks == (((0, 1), (0, 1)),)
        assert pp.limit_marginal == (1, 1)

    def test_hall(self, hall3):
        pp = principal_partition(*hall3)
        assert pp.theta == 2
        assert pp.blocks == (((2,), (1, 2)), ((0, 1), (0,)))
        assert pp.block_sums == ((1, 2), (2, 1))
        assert pp.limit_marginal == (F(1, 2), F(1, 2), 2)
        assert pp.critical_params == (F(1, 3), F(2, 3))
        assert pp.extreme_sets == (ss({0, 1, 2}, set()), ss({0, 1}, {1, 2}), ss(set(), {0, 1, 2}))
        assert pp.limit_divergence() == pytest.approx(math.log(2), abs=1e-15)

    def test_e2(self, e2):
        pp = principal_partition(*e2)
        assert pp.theta == 1
        assert pp.limit_marginal == (1, 1)
        assert pp.critical_params == (F(1, 2),)

    def test_matches_hull_oracle_fixed(self, hall3):
        sets, blocks, p_star = oracle.oracle_partition(*hall3)
        pp = principal_partition(*hall3)
        assert list(pp.extreme_sets) == sets
        assert list(pp.blocks) == blocks and pp.limit_marginal == p_star

    @settings(max_examples=120, deadline=None)
    @given(instances(4))
    def test_invariants(self, inst):
        A, mp = inst
        n, m = A.shape
        pp = principal_partition(A, mp)
        ext = pp.extreme_sets
        assert ext[0] == ss(range(n), set()) and ext[-1] == ss(set(), range(m))
        for a, b in zip(ext, ext[1:]):
            assert b.X < a.X and a.Y < b.Y
        assert sorted(i for I, _ in pp.blocks for i in I) == list(range(n))
        assert sorted(j for _, J in pp.blocks for j in J) == list(range(m))
        assert all(a < b for a, b in zip(pp.slopes, pp.slopes[1:]))
        assert list(pp.critical_params) == sorted(set(pp.critical_params))
        for (I, _), (Rk, Ck) in zip(pp.blocks, pp.block_sums):
            for i in I:
                assert pp.limit_marginal[i] == Ck / Rk * mp.r[i]
        assert sum(pp.limit_marginal) == mp.C
        # p* lies in the base polytope: the flow saturates every column
        net, scale = bipartite_network(A, pp.limit_marginal, mp.c)
        assert F(net.max_flow(), scale) == mp.C
        assert oracle.verify_kkt(pp)
        sets, blocks, p_star = oracle.oracle_partition(A, mp)
        assert list(ext) == sets and list(pp.blocks) == blocks and pp.limit_marginal == p_star

    def test_kkt_coefficients_hall(self, hall3):
        pp = principal_partition(*hall3)
        slopes = pp.slopes
        assert (slopes[0], slopes[1] - slopes[0]) == (F(1, 2), F(3, 2))
        assert oracle.verify_kkt(pp)

    @settings(max_examples=40, deadline=None)
    @given(instances(4, balanced_only=True), st.integers(0, 2**32 - 1))
    def test_limit_marginal_unique(self, inst, seed):
        A, mp = inst
        pp = principal_partition(A, mp)
        Ms, Ns = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp))
        rng = np.random.default_rng(seed)
        r, p_star = mp.r_float, pp.p_star()
        D = pp.limit_divergence()
        Nstar = Ns.to_dense()
        for t in np.logspace(-9, 0, 19):
            other = col_normalize(A.with_values(rng.uniform(0.1, 3, A.nnz)), mp.c_float).to_dense()
            N = (1 - t) * Nstar + t * other
            p = N.sum(axis=1)
            if kl_vec(r, p) <= D + 1e-10:
                assert np.max(np.abs(p - p_star)) <= 1e-4


class TestRefinedChain:
    def test_diagonal(self):
        A = NonnegMatrix.from_dense([[2, 0], [0, 3]])
        mp = uni(A)
        rd = refined_chain(A, mp, principal_partition(A, mp))
        assert [(b.rows, b.cols) for b in rd.fine_blocks] == [((0,), (0,)), ((1,), (1,))]

    def test_e2(self, e2):
        A, mp = e2
        pp = principal_partition(A, mp)
        rd = refined_chain(A, mp, pp)
        assert [(b.kappa, b.alpha, b.rows, b.cols) for b in rd.fine_blocks] == \
            [(1, 1, (0,), (0,)), (1, 2, (1,), (1,))]
        assert rd.chains[0] == (ss({0, 1}, set()), ss({1}, {0}), ss(set(), {0, 1}))
        optima = oracle.optimal_sets(A, mp, F(1, 2))
        assert oracle.is_maximal_chain(rd.chains[0], optima)

    def test_hall_equals_coarse(self, hall3):
        A, mp = hall3
        pp = principal_partition(A, mp)
        rd = refined_chain(A, mp, pp)
        assert [len(rd.blocks_of(k)) for k in (1, 2)] == [1, 1]
        assert [(b.rows, b.cols) for b in rd.fine_blocks] == list(pp.blocks)

    @settings(max_examples=80, deadline=None)
    @given(instances(4))
    def test_fine_blocks(self, inst):
        A, mp = inst
        pp = principal_partition(A, mp)
        lo = refined_chain(A, mp, pp, order="min")
        hi = refined_chain(A, mp, pp, order="max")
        key = lambda rd: sorted((b.kappa, b.rows, b.cols) for b in rd.fine_blocks)
        assert key(lo) == key(hi)
        for kappa, (I, J) in enumerate(pp.blocks, start=1):
            fb = lo.blocks_of(kappa)
            assert sorted(i for b in fb for i in b.rows) == list(I)
            assert sorted(j for b in fb for j in b.cols) == list(J)
        for b in lo.fine_blocks:
            sub = A.submatrix(b.rows, b.cols)
            assert exact_scalable(sub, decomp.block_marginals(mp, pp, b))
        for lam, chain in zip(pp.critical_params, lo.chains + hi.chains):
            assert oracle.is_maximal_chain(chain, oracle.optimal_sets(A, mp, lam))

    @settings(max_examples=80, deadline=None)
    @given(patterns(5, square=True))
    def test_half_parts_match_dm(self, A):
        n, m = A.shape
        lat = parametric_objective(A, uni(A), F(1, 2)).lattice
        lo, hi = lat.minimal, lat.maximal
        parts = [(lo.X, frozenset(range(m)) - lo.Y)]
        parts += [(frozenset(r), frozenset(c)) for r, c in lat.pieces]
        parts.append((frozenset(range(n)) - hi.X, hi.Y))
        parts = {p for p in parts if p[0] or p[1]}
        dm = oracle.dm_decomposition(n, m, A.support())
        assert parts == set(dm)


class TestLimit:
    def test_ones(self):
        A = NonnegMatrix.from_dense(ONES2)
        mp = uni(A)
        pp = principal_partition(A, mp)
        Ms, Ns = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp))
        assert np.allclose(Ms.to_dense(), 0.5) and np.allclose(Ns.to_dense(), 0.5)

    def test_e2(self, e2):
        A, mp = e2
        pp = principal_partition(A, mp)
        Ms, Ns = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp))
        assert Ms.support() == Ns.support() == {(0, 0), (1, 1)}
        assert np.allclose(Ns.to_dense(), np.eye(2), atol=1e-12)
        assert np.allclose(Ms.to_dense(), np.eye(2), atol=1e-12)

    def test_hall(self, hall3):
        A, mp = hall3
        pp = principal_partition(A, mp)
        Ms, Ns = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp))
        assert np.allclose(Ns.to_dense(), [[0.5, 0, 0], [0.5, 0, 0], [0, 1, 1]], atol=1e-12)
        assert np.allclose(Ms.to_dense(), [[1, 0, 0], [1, 0, 0], [0, 0.5, 0.5]], atol=1e-12)
        assert (2, 0) not in Ns.support() and (2, 0) not in Ms.support()

    @settings(max_examples=30, deadline=None)
    @given(instances(4))
    def test_chain_choice_does_not_matter(self, inst):
        A, mp = inst
        pp = principal_partition(A, mp)
        a = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp, "min"))
        b = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp, "max"))
        for x, y in zip(a, b):
            assert x.support() == y.support()
            assert np.allclose(x.to_dense(), y.to_dense(), rtol=1e-9, atol=1e-12)

    def test_budget_exhausted(self):
        A = NonnegMatrix.from_dense([[1, 2], [3, 1]])
        mp = uni(A)
        pp = principal_partition(A, mp)
        with pytest.raises(ConvergenceError):
            sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp), block_budget=1)


class TestOffDiagonal:
    def test_limit_is_zero(self, hall3):
        A, mp = hall3
        pp = principal_partition(A, mp)
        _, Ns = sinkhorn_limit(A, mp, pp, refined_chain(A, mp, pp))
        od = off_diagonal_mass(Ns, pp)
        assert od.delta_total == 0 and od.delta_blocks == (0, 0)
        assert lower_bound_certificate(Ns, pp) == pytest.approx(0, abs=1e-12)

    def test_hall_n0(self, hall3):
        A, mp = hall3
        pp = principal_partition(A, mp)
        N0 = engine.init(A, mp).matrix()
        od = off_diagonal_mass(N0, pp)
        # I_1 = {3}, J_2 = {1}: the single entry N_0[3, 1] = 1/3
        assert od.delta_pairs == {(1, 2): pytest.approx(1 / 3, abs=1e-15)}
        assert od.delta_blocks == pytest.approx((1 / 3, -1 / 3), abs=1e-15)
        assert od.delta_total == pytest.approx(1 / 3, abs=1e-15)
        lhs = kl_vec(mp.r_float, N0.row_sums()) - pp.limit_divergence()
        rhs = lower_bound_certificate(N0, pp)
        assert rhs == pytest.approx(0.5, abs=1e-12)  # slope gap 3/2 times 1/3
        assert lhs == pytest.approx(math.log(27 / 7) - math.log(2), abs=1e-12)
        assert rhs <= lhs

    def test_rejects_infeasible(self, hall3):
        A, mp = hall3
        pp = principal_partition(A, mp)
        with pytest.raises(MarginalError):
            off_diagonal_mass(np.eye(3) * 2, pp)

    @settings(max_examples=60, deadline=None)
    @given(instances(4, balanced_only=True), st.integers(0, 2**32 - 1))
    def test_random_column_feasible(self, inst, seed):
        A, mp = inst
        pp = principal_partition(A, mp)
        rng = np.random.default_rng(seed)
        N = col_normalize(A.with_values(rng.uniform(0.1, 3, A.nnz)), mp.c_float)
        od = off_diagonal_mass(N, pp)  # raises if p(I) != C + Delta
        assert all(v >= 0 for v in od.delta_pairs.values())
        assert od.delta_total == pytest.approx(sum(od.delta_pairs.values()), abs=1e-12)
        lhs = kl_vec(mp.r_float, N.row_sums()) - pp.limit_divergence()
        assert lower_bound_certificate(N, pp) <= lhs + 1e-9

    @pytest.mark.parametrize("a", [HALL3, [[1, 1, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0], [0, 1, 1, 1]]])
    def test_along_trajectory(self, a):
        A = NonnegMatrix.from_dense(a)
        mp = uni(A)
        pp = principal_partition(A, mp)
        assert pp.theta > 1
        s = engine.init(A, mp)
        D = pp.limit_divergence()
        for k in range(10**4 + 1):
            if k <= 200 or k % 50 == 0:
                lhs = engine.divergence(s) - D
                assert lower_bound_certificate(s.matrix(), pp) <= lhs + 1e-9, k
            s = engine.step(s)
