"""Sinkhorn scaling as alternating KL minimization, its exact limit, and Hall blockers.

Layers, bottom up: ``matrix`` (sparse nonnegative matrices, marginals, KL),
``engine`` (the iteration itself, compiled kernel in ``kernel``), ``decomp``
(principal partition and block limit via max-flow), ``blocker`` (Sinkhorn &
Sorting), ``oracle`` (brute-force ground truth) and ``cli``.
"""
from __future__ import annotations

from .blocker import (
    BipartiteGraph,
    HallReport,
    IsolatedVertexError,
    best_blocker,
    deficiency,
    find_blocker,
    iteration_budget,
    matrix_of_graph,
    sinkhorn_and_sort,
)
from .decomp import (
    ConvergenceError,
    PrincipalPartition,
    RefinedDecomposition,
    approx_scalable,
    exact_scalable,
    lower_bound_certificate,
    off_diagonal_mass,
    parametric_objective,
    principal_partition,
    refined_chain,
    sinkhorn_limit,
)
from .engine import (
    SinkhornState,
    Trajectory,
    check_five_point,
    check_sublinear,
    divergence,
    init,
    run,
    step,
)
from .kernel import BACKEND
from .matrix import (
    DimensionError,
    MarginalError,
    MarginalPair,
    NonnegMatrix,
    StableSet,
    col_normalize,
    kl_matrix,
    kl_vec,
    pinsker_gap,
    row_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "annotations",
    "BipartiteGraph",
    "HallReport",
    "IsolatedVertexError",
    "best_blocker",
    "deficiency",
    "find_blocker",
    "iteration_budget",
    "matrix_of_graph",
    "sinkhorn_and_sort",
    "ConvergenceError",
    "PrincipalPartition",
    "RefinedDecomposition",
    "approx_scalable",
    "exact_scalable",
    "lower_bound_certificate",
    "off_diagonal_mass",
    "parametric_objective",
    "principal_partition",
    "refined_chain",
    "sinkhorn_limit",
    "SinkhornState",
    "Trajectory",
    "check_five_point",
    "check_sublinear",
    "divergence",
    "init",
    "run",
    "step",
    "BACKEND",
    "DimensionError",
    "MarginalError",
    "MarginalPair",
    "NonnegMatrix",
    "StableSet",
    "col_normalize",
    "kl_matrix",
    "kl_vec",
    "pinsker_gap",
    "row_normalize",
]
