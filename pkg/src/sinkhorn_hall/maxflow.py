"""Dinic maximum flow on integer capacities, plus residual-graph queries.

Only what the bipartite decomposition needs: the network ``s -> row i``
(capacity ``p_i``), ``row i -> col j`` for each support entry (capacity
"infinite"), ``col j -> t`` (capacity ``c_j``).
"""
from __future__ import annotations

from collections import deque
from typing import Sequence


class FlowNetwork:
    """Directed network with paired residual arcs.  Nodes are ``0..n_nodes-1``."""

    def __init__(self, n_nodes: int, source: int, sink: int):
        self.n_nodes = n_nodes
        self.source = source
        self.sink = sink
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.orig: list[int] = []
        self.value = 0

    def add_arc(self, u: int, v: int, capacity: int) -> int:
        if capacity < 0:
            raise ValueError("capacities must be nonnegative")
        e = len(self.to)
        self.to += [v, u]
        self.cap += [capacity, 0]
        self.orig += [capacity, 0]
        self.head[u].append(e)
        self.head[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.orig[e] - self.cap[e]

    def _levels(self) -> list[int] | None:
        level = [-1] * self.n_nodes
        level[self.source] = 0
        q = deque([self.source])
        while q:
            u = q.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[self.sink] >= 0 else None

    def _blocking_flow(self, level: list[int]) -> int:
        # iterative DFS with current-arc pointers
        ptr = [0] * self.n_nodes
        total = 0
        s, t = self.source, self.sink
        while True:
            path: list[int] = []
            u = s
            while u != t:
                adv = False
                arcs = self.head[u]
                while ptr[u] < len(arcs):
                    e = arcs[ptr[u]]
                    v = self.to[e]
                    if self.cap[e] > 0 and level[v] == level[u] + 1:
                        path.append(e)
                        u = v
                        adv = True
                        break
                    ptr[u] += 1
                if not adv:
                    if u == s:
                        return total
                    level[u] = -1  # dead end
                    e = path.pop()
                    u = self.to[e ^ 1]
                    ptr[u] += 1
            f = min(self.cap[e] for e in path)
            for e in path:
                self.cap[e] -= f
                self.cap[e ^ 1] += f
            total += f

    def max_flow(self) -> int:
        while True:
            level = self._levels()
            if level is None:
                return self.value
            self.value += self._blocking_flow(level)

    def residual_successors(self, u: int) -> list[int]:
        return [self.to[e] for e in self.head[u] if self.cap[e] > 0]

    def reachable_from_source(self) -> set[int]:
        """Source side of the unique minimal minimum cut."""
        seen = {self.source}
        q = deque([self.source])
        while q:
            u = q.popleft()
            for e in self.head[u]:
                v = self.to[e]
                if self.cap[e] > 0 and v not in seen:
                    seen.add(v)
                    q.append(v)
        return seen

    def reaching_sink(self) -> set[int]:
        """Nodes with a residual path to the sink; their complement is the maximal source side."""
        seen = {self.sink}
        q = deque([self.sink])
        while q:
            v = q.popleft()
            for e in self.head[v]:
                # arc e goes v -> u; its partner e^1 is u -> v
                u = self.to[e]
                if self.cap[e ^ 1] > 0 and u not in seen:
                    seen.add(u)
                    q.append(u)
        return seen


class BipartiteNetwork(FlowNetwork):
    """The network of a support pattern with source capacities ``p`` and sink capacities ``c``.

    Node ``0`` is the source, rows are ``1..n``, columns ``n+1..n+m`` and the
    sink is ``n+m+1``.  The stand-in for infinite capacity is ``sum(p) +
    sum(c) + 1``, which exceeds every cut that avoids support arcs.
    """

    def __init__(self, n: int, m: int, support: Sequence[tuple[int, int]],
                 p: Sequence[int], c: Sequence[int]):
        if len(p) != n or len(c) != m:
            raise ValueError("capacity vectors do not match the dimensions")
        super().__init__(n + m + 2, 0, n + m + 1)
        self.n, self.m = n, m
        self.infinity = sum(p) + sum(c) + 1
        self.source_arcs = [self.add_arc(0, 1 + i, int(p[i])) for i in range(n)]
        self.edge_arcs = {(i, j): self.add_arc(1 + i, 1 + n + j, self.infinity)
                          for i, j in support}
        self.sink_arcs = [self.add_arc(1 + n + j, n + m + 1, int(c[j])) for j in range(m)]

    def row_node(self, i: int) -> int:
        return 1 + i

    def col_node(self, j: int) -> int:
        return 1 + self.n + j

    def split(self, side: set[int]) -> tuple[frozenset[int], frozenset[int]]:
        """Row set ``X`` and column set ``Y`` of the stable set of a source side."""
        X = frozenset(i for i in range(self.n) if 1 + i in side)
        Y = frozenset(j for j in range(self.m) if 1 + self.n + j not in side)
        return X, Y

    def flow_matrix(self) -> dict[tuple[int, int], int]:
        return {ij: self.flow_on(e) for ij, e in self.edge_arcs.items()}
