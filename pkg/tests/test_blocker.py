from __future__ import annotations

import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinkhorn_hall import decomp, engine, oracle
from sinkhorn_hall.blocker import (
    BipartiteGraph,
    IsolatedVertexError,
    best_blocker,
    deficiency,
    find_blocker,
    iteration_budget,
    matrix_of_graph,
    sinkhorn_and_sort,
)
from sinkhorn_hall.crosscheck import graph_of, planted_graph
from sinkhorn_hall.matrix import MarginalPair, kl_matrix

from conftest import patterns

HALL_EDGES = {(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)}


def graph(n1, n2, edges):
    return BipartiteGraph(n1, n2, frozenset(edges))


def diagonal(n):
    return graph(n, n, {(i, i) for i in range(n)})


def complete(n1, n2):
    return graph(n1, n2, {(i, j) for i in range(n1) for j in range(n2)})


HALL = graph(3, 3, HALL_EDGES)
STAR = graph(3, 1, {(0, 0), (1, 0), (2, 0)})


@st.composite
def graphs(draw, max_n=5, square=True):
    return graph_of(draw(patterns(max_n, square=square)))


class TestGraph:
    def test_isolated_vertices_named(self):
        with pytest.raises(IsolatedVertexError, match="u3, v2"):
            graph(3, 2, {(0, 0), (1, 0)})

    def test_edge_range(self):
        with pytest.raises(ValueError):
            graph(1, 1, {(0, 1)})

    def test_matrix_examples(self):
        assert np.array_equal(matrix_of_graph(diagonal(2)).to_dense(), np.eye(2))
        assert np.array_equal(matrix_of_graph(complete(2, 2)).to_dense(), np.ones((2, 2)))
        assert matrix_of_graph(HALL).to_dense().tolist() == [[1, 0, 0], [1, 0, 0], [1, 1, 1]]


class TestBudget:
    @pytest.mark.parametrize("n, want", [(2, 5679), (4, 1453635), (6, 32100991)])
    def test_values(self, n, want):
        assert iteration_budget(n) == want

    @pytest.mark.parametrize("n", range(2, 13))
    def test_matches_high_precision(self, n):
        with localcontext() as ctx:
            ctx.prec = 50
            exact = Decimal(64) * Decimal(n) ** 7 * Decimal(n).ln()
            want = int(exact.to_integral_value(rounding="ROUND_CEILING"))
        assert iteration_budget(n) == want

    @pytest.mark.parametrize("n", [0, 1, -3])
    def test_small_n(self, n):
        with pytest.raises(ValueError):
            iteration_budget(n)


class TestSinkhornAndSort:
    @pytest.mark.parametrize("ell", [0, 7, "auto"])
    def test_diagonal(self, ell):
        G = diagonal(4)
        cand = sinkhorn_and_sort(G, ell)
        assert np.allclose(cand.p_final, 1.0, rtol=0, atol=1e-15)
        assert cand.order == (0, 1, 2, 3)
        assert cand.sets == tuple(frozenset(range(k)) for k in range(5))
        assert all(deficiency(G, X) <= 0 for X in cand.sets)

    def test_hall(self):
        cand = sinkhorn_and_sort(HALL, 10**5)
        assert cand.order[2] == 2 and set(cand.order[:2]) == {0, 1}
        assert cand.sets[2] == {0, 1}
        assert cand.iterations_used == 10**5 and cand.budget_mode == "fixed"

    def test_k33_minus_edge(self):
        G = graph(3, 3, {(i, j) for i in range(3) for j in range(3)} - {(0, 0)})
        cand = sinkhorn_and_sort(G, 10**3)
        assert all(deficiency(G, X) <= 0 for X in cand.sets)
        assert oracle.maximum_matching(3, 3, G.edges) == 3

    def test_modes(self):
        auto = sinkhorn_and_sort(HALL, "auto")
        assert auto.budget_mode == "auto" and 0 < auto.iterations_used < iteration_budget(6)
        thm = sinkhorn_and_sort(diagonal(2), "theorem")
        assert thm.budget_mode == "theorem" and thm.iterations_used == iteration_budget(4)
        with pytest.raises(ValueError):
            sinkhorn_and_sort(HALL, -1)

    @settings(max_examples=60, deadline=None)
    @given(graphs(6, square=False), st.sampled_from([0, 5, 200, "auto"]))
    def test_prefix_structure(self, G, ell):
        cand = sinkhorn_and_sort(G, ell)
        assert sorted(cand.order) == list(range(G.n1))
        assert [len(X) for X in cand.sets] == list(range(G.n1 + 1))
        assert all(a < b for a, b in zip(cand.sets, cand.sets[1:]))
        p = cand.p_final
        assert all(p[a] <= p[b] for a, b in zip(cand.order, cand.order[1:]))


class TestDeficiency:
    def test_examples(self):
        assert deficiency(HALL, set()) == 0
        assert deficiency(HALL, {0, 1}) == 1
        assert deficiency(complete(2, 2), {0, 1}) == 0


class TestBestBlocker:
    def test_diagonal(self):
        rep = find_blocker(diagonal(3))
        assert rep.best_set == frozenset() and rep.deficiency == 0
        assert rep.matching_number == 3 and rep.has_perfect_matching

    def test_hall(self):
        rep = find_blocker(HALL, 10**5)
        assert rep.best_set == {0, 1} and rep.deficiency == 1
        assert rep.matching_number == 2 and not rep.has_perfect_matching
        assert rep.guarantee == "heuristic budget"

    def test_star(self):
        rep = find_blocker(STAR)
        assert rep.best_set == {0, 1, 2} and rep.deficiency == 2 and rep.matching_number == 1

    def test_explicit_candidates(self):
        rep = best_blocker(HALL, [set(), {2}, {0, 1}, {0, 1, 2}])
        assert rep.best_set == {0, 1} and rep.budget_mode == "external"
        with pytest.raises(ValueError):
            best_blocker(HALL, [])

    def test_tie_prefers_smaller(self):
        G = graph(2, 2, {(0, 0), (1, 0), (1, 1)})
        rep = best_blocker(G, [set(), {0}, {0, 1}])
        assert rep.best_set == frozenset() and rep.deficiency == 0

    def test_non_square(self):
        rep = find_blocker(complete(2, 3))
        assert rep.deficiency == 0 and not rep.has_perfect_matching

    def test_theorem_budget_certified(self):
        rep = find_blocker(HALL, "theorem")
        assert rep.guarantee == "certified"
        assert rep.deficiency == 1 and rep.iterations_used == iteration_budget(6)

    @settings(max_examples=150, deadline=None)
    @given(graphs(6), st.sampled_from([0, 3, 50, "auto"]))
    def test_soundness_any_budget(self, G, ell):
        rep = find_blocker(G, ell)
        assert rep.deficiency == deficiency(G, rep.best_set)
        _, best = oracle.max_deficiency_exhaustive(G.n1, G.edges)
        assert 0 <= rep.deficiency <= best
        assert rep.matching_number >= oracle.maximum_matching(G.n1, G.n2, G.edges)

    def test_sampled_auto_matches_oracle(self):
        rng = np.random.default_rng(20240613)
        for _ in range(150):
            n = int(rng.integers(2, 7))
            G = planted_graph(rng, n, float(rng.uniform(0.2, 0.6)))
            _, best = oracle.max_deficiency_exhaustive(G.n1, G.edges)
            assert find_blocker(G, "auto").deficiency == best

    def test_sampled_theorem_budget_4x4(self):
        rng = np.random.default_rng(44)
        for _ in range(2):
            G = planted_graph(rng, 4, 0.4)
            _, best = oracle.max_deficiency_exhaustive(G.n1, G.edges)
            assert find_blocker(G, "theorem").deficiency == best


def separation_holds(G, ell):
    A = matrix_of_graph(G)
    mp = MarginalPair.uniform(G.n1, G.n2)
    pp = decomp.principal_partition(A, mp)
    cand = sinkhorn_and_sort(G, ell)
    gap = np.max(np.abs(cand.p_final - pp.p_star()))
    return gap < 1 / (2 * G.n**2), pp, cand


class TestGuarantees:
    @settings(max_examples=60, deadline=None)
    @given(graphs(5), st.sampled_from([100, 2000, 20000]))
    def test_separation(self, G, ell):
        ok, pp, cand = separation_holds(G, ell)
        if ok:
            for s in pp.extreme_sets:
                assert s.X in cand.sets

    def test_separation_reached_on_hall(self):
        ok, pp, cand = separation_holds(HALL, 2000)
        assert ok and all(s.X in cand.sets for s in pp.extreme_sets)

    @settings(max_examples=60, deadline=None)
    @given(graphs(5, square=False))
    def test_initial_divergence_bound(self, G):
        A = matrix_of_graph(G)
        mp = MarginalPair.uniform(G.n1, G.n2)
        pp = decomp.principal_partition(A, mp)
        Ms, _ = decomp.sinkhorn_limit(A, mp, pp, decomp.refined_chain(A, mp, pp))
        assert kl_matrix(Ms, engine.init(A, mp).matrix()) <= G.n * math.log(G.n) + 1e-12
