"""Text input formats and JSON reports.

All indices in files and reports are 1-based; everything in memory is 0-based.
Fractions are written as strings (``"1/2"``, ``"2"``) so reports are exact.
"""
from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, TextIO

from .blocker import BipartiteGraph, HallReport
from .decomp import (
    PrincipalPartition,
    RefinedDecomposition,
    bipartite_network,
)
from .matrix import MarginalPair, NonnegMatrix


class ParseError(ValueError):
    """Malformed input text."""


def _lines(text: str) -> list[list[str]]:
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def _int(tok: str, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{what}: expected an integer, got {tok!r}") from None


def _header(rows: list[list[str]], what: str) -> tuple[int, int]:
    if not rows or len(rows[0]) != 2:
        raise ParseError(f"{what}: first line must hold two sizes")
    a, b = (_int(t, "header") for t in rows[0])
    if a < 1 or b < 1:
        raise ParseError(f"{what}: sizes must be positive")
    return a, b


def _index(tok: str, size: int, line: int) -> int:
    k = _int(tok, f"line {line}")
    if not 1 <= k <= size:
        raise ParseError(f"line {line}: index {k} outside 1..{size}")
    return k - 1


def parse_matrix(text: str) -> NonnegMatrix:
    """Header ``n m`` then support lines ``i j v``."""
    rows = _lines(text)
    n, m = _header(rows, "matrix")
    entries: dict[tuple[int, int], float] = {}
    for ln, toks in enumerate(rows[1:], start=2):
        if len(toks) != 3:
            raise ParseError(f"line {ln}: expected 'i j v'")
        i, j = _index(toks[0], n, ln), _index(toks[1], m, ln)
        try:
            v = float(Fraction(toks[2]))
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"line {ln}: bad value {toks[2]!r}") from None
        if not v > 0:
            raise ParseError(f"line {ln}: values must be positive")
        if (i, j) in entries:
            raise ParseError(f"line {ln}: duplicate entry ({i + 1}, {j + 1})")
        entries[(i, j)] = v
    try:
        return NonnegMatrix.from_entries(n, m, entries)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def format_matrix(A: NonnegMatrix) -> str:
    out = [f"{A.n_rows} {A.n_cols}"]
    out += [f"{i + 1} {j + 1} {float(v)!r}" for i, j, v in zip(A.rows, A.cols, A.values)]
    return "\n".join(out) + "\n"


def parse_vector(text: str) -> tuple[Fraction, ...]:
    """One decimal (or ``p/q``) per line, read exactly."""
    out = []
    for ln, toks in enumerate(_lines(text), start=1):
        if len(toks) != 1:
            raise ParseError(f"vector line {ln}: expected one number")
        try:
            x = Fraction(toks[0])
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"vector line {ln}: bad number {toks[0]!r}") from None
        if x <= 0:
            raise ParseError(f"vector line {ln}: marginals must be positive")
        out.append(x)
    if not out:
        raise ParseError("empty vector")
    return tuple(out)


def parse_graph(text: str) -> BipartiteGraph:
    """Header ``n1 n2`` then edge lines ``u v``.  May raise ``IsolatedVertexError``."""
    rows = _lines(text)
    n1, n2 = _header(rows, "graph")
    edges = set()
    for ln, toks in enumerate(rows[1:], start=2):
        if len(toks) != 2:
            raise ParseError(f"line {ln}: expected 'u v'")
        edges.add((_index(toks[0], n1, ln), _index(toks[1], n2, ln)))
    return BipartiteGraph(n1, n2, frozenset(edges))


def is_graph_text(text: str) -> bool:
    body = _lines(text)[1:]
    return bool(body) and all(len(t) == 2 for t in body)


def _frac(x: Fraction) -> str:
    return str(Fraction(x))


def _one_based(idx) -> list[int]:
    return [int(i) + 1 for i in sorted(idx)]


def decomposition_report(pp: PrincipalPartition, rd: RefinedDecomposition,
                         limit: tuple[NonnegMatrix, NonnegMatrix] | None = None) -> dict[str, Any]:
    rep: dict[str, Any] = {
        "shape": list(pp.shape),
        "theta": pp.theta,
        "blocks": [{"rows": _one_based(I), "cols": _one_based(J), "R": _frac(R), "C": _frac(C)}
                   for (I, J), (R, C) in zip(pp.blocks, pp.block_sums)],
        "critical_lambdas": [_frac(x) for x in pp.critical_params],
        "p_star": [_frac(x) for x in pp.limit_marginal],
        "fine_blocks": [{"block": b.kappa, "position": b.alpha,
                         "rows": _one_based(b.rows), "cols": _one_based(b.cols)}
                        for b in rd.fine_blocks],
    }
    if limit is not None:
        M, N = limit
        rep["limit"] = {name: [[int(i) + 1, int(j) + 1, float(v)]
                               for i, j, v in zip(X.rows, X.cols, X.values)]
                        for name, X in (("M", M), ("N", N))}
    return rep


def verify_decomposition_report(A: NonnegMatrix, mp: MarginalPair, rep: dict[str, Any]) -> list[str]:
    """Re-check a parsed report against ``A``; returns the list of violated invariants."""
    bad = []
    n, m = A.shape
    blocks = [([i - 1 for i in b["rows"]], [j - 1 for j in b["cols"]],
               Fraction(b["R"]), Fraction(b["C"])) for b in rep["blocks"]]
    if rep["theta"] != len(blocks) or len(rep["critical_lambdas"]) != len(blocks):
        bad.append("theta does not match the block count")
    if sorted(i for b in blocks for i in b[0]) != list(range(n)) or \
            sorted(j for b in blocks for j in b[1]) != list(range(m)):
        bad.append("blocks do not partition rows and columns")
        return bad
    slopes = []
    for I, J, R, C in blocks:
        if R != sum((mp.r[i] for i in I), Fraction(0)) or C != sum((mp.c[j] for j in J), Fraction(0)):
            bad.append("block sums disagree with the marginals")
        slopes.append(R / C)
    if any(a >= b for a, b in zip(slopes, slopes[1:])):
        bad.append("slopes are not strictly increasing")
    lams = [Fraction(x) for x in rep["critical_lambdas"]]
    if lams != [R / (R + C) for _, _, R, C in blocks]:
        bad.append("critical parameters disagree with the block sums")
    row_blk = {i: k for k, b in enumerate(blocks) for i in b[0]}
    col_blk = {j: k for k, b in enumerate(blocks) for j in b[1]}
    if any(row_blk[int(i)] > col_blk[int(j)] for i, j in zip(A.rows, A.cols)):
        bad.append("support entry below the block diagonal")
    p_star = [Fraction(x) for x in rep["p_star"]]
    for I, J, R, C in blocks:
        if any(p_star[i] != C / R * mp.r[i] for i in I):
            bad.append("p_star is not the block-proportional marginal")
            break
    net, scale = bipartite_network(A, p_star, mp.c)
    if Fraction(net.max_flow(), scale) != mp.C:
        bad.append("p_star is not attainable as a column-feasible row marginal")
    fine = rep.get("fine_blocks", [])
    for k, (I, J, _, _) in enumerate(blocks, start=1):
        mine = [fb for fb in fine if fb["block"] == k]
        if sorted(i - 1 for fb in mine for i in fb["rows"]) != sorted(I) or \
                sorted(j - 1 for fb in mine for j in fb["cols"]) != sorted(J):
            bad.append(f"fine blocks do not partition block {k}")
    return bad


def hall_report(rep: HallReport) -> dict[str, Any]:
    return {
        "candidates": [_one_based(s) for s in rep.candidates],
        "best_set": _one_based(rep.best_set),
        "deficiency": rep.deficiency,
        "matching_number": rep.matching_number,
        "has_perfect_matching": rep.has_perfect_matching,
        "iterations_used": rep.iterations_used,
        "budget_mode": rep.budget_mode,
        "guarantee": rep.guarantee,
        "p_final": [float(x) for x in rep.p_final],
    }


def verify_hall_report(G: BipartiteGraph, rep: dict[str, Any]) -> list[str]:
    bad = []
    adj = G.adjacency()

    def defect(X):
        return len(X) - len(set().union(*(adj[u - 1] for u in X)))

    cands = [list(s) for s in rep["candidates"]]
    if [len(s) for s in cands] != list(range(G.n1 + 1)) or \
            any(not set(a) < set(b) for a, b in zip(cands, cands[1:])):
        bad.append("candidates are not a nested prefix chain")
    if defect(rep["best_set"]) != rep["deficiency"]:
        bad.append("deficiency of best_set is wrong")
    if rep["best_set"] not in cands or max(defect(s) for s in cands) != rep["deficiency"]:
        bad.append("best_set is not the best candidate")
    if rep["matching_number"] != G.n1 - rep["deficiency"]:
        bad.append("matching_number disagrees with the deficiency")
    if rep["has_perfect_matching"] != (rep["deficiency"] <= 0 and G.n1 == G.n2):
        bad.append("has_perfect_matching flag is inconsistent")
    return bad


def dump_json(obj: Any, fh: TextIO) -> None:
    json.dump(obj, fh, indent=2)
    fh.write("\n")

