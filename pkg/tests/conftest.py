from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from sinkhorn_hall.matrix import MarginalPair, NonnegMatrix

DATA = Path(__file__).parent / "data"

HALL3 = [[1, 0, 0], [1, 0, 0], [1, 1, 1]]
E2 = [[1, 1], [0, 1]]
ONES2 = [[1, 1], [1, 1]]
DIAG23 = [[2, 0], [0, 3]]


@pytest.fixture
def hall3():
    return NonnegMatrix.from_dense(HALL3), MarginalPair.uniform(3, 3)


@pytest.fixture
def e2():
    return NonnegMatrix.from_dense(E2), MarginalPair.uniform(2, 2)


@st.composite
def patterns(draw, max_n: int = 4, max_m: int | None = None, square: bool = False):
    """0/1 patterns without zero rows or columns."""
    n = draw(st.integers(1, max_n))
    m = n if square else draw(st.integers(1, max_m or max_n))
    bits = draw(st.lists(st.booleans(), min_size=n * m, max_size=n * m))
    a = np.array(bits, dtype=float).reshape(n, m)
    for i in range(n):
        if not a[i].any():
            a[i, draw(st.integers(0, m - 1))] = 1.0
    for j in range(m):
        if not a[:, j].any():
            a[draw(st.integers(0, n - 1)), j] = 1.0
    return NonnegMatrix.from_dense(a)


@st.composite
def weighted(draw, max_n: int = 4):
    """A pattern with positive weights in [0.1, 10]."""
    A = draw(patterns(max_n))
    w = draw(st.lists(st.floats(0.1, 10.0), min_size=A.nnz, max_size=A.nnz))
    return A.with_values(np.array(w))


@st.composite
def balanced_marginals(draw, n: int, m: int, top: int = 4):
    """Integer-weight rational marginals with both totals equal to ``n``."""
    r = draw(st.lists(st.integers(1, top), min_size=n, max_size=n))
    c = draw(st.lists(st.integers(1, top), min_size=m, max_size=m))
    from fractions import Fraction
    R, C = sum(r), sum(c)
    return MarginalPair(tuple(Fraction(x * n, R) for x in r), tuple(Fraction(x * n, C) for x in c))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
