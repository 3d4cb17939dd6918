"""Command-line front end: ``sinkhall {scale,decompose,blocker,oracle-check}``.

Exit codes: 0 success (for ``blocker``: no positive-deficiency set), 1 blocker
found, 2 unreadable or oversize input, 3 dimension mismatch, 4 isolated
vertex, 5 oracle disagreement.
"""
from __future__ import annotations

import argparse
import contextlib
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Sequence, TextIO

from . import crosscheck, engine, formats, oracle
from .blocker import IsolatedVertexError, best_blocker, sinkhorn_and_sort
from .decomp import principal_partition, refined_chain, sinkhorn_limit
from .formats import ParseError
from .matrix import DimensionError, MarginalPair, NonnegMatrix

EXIT_OK, EXIT_BLOCKER, EXIT_INPUT, EXIT_DIM, EXIT_ISOLATED, EXIT_ORACLE = range(6)
MAX_SIDE = 10**4
AUTO_CAP = 10**7
MAX_SWEEP = 4


class InputError(Exception):
    """Anything that maps to exit status 2."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str | None
    row_marginals: str
    col_marginals: str
    iters: int | str
    tol: float
    fmt: str
    record_stride: int | None
    out: str | None
    trajectory: str | None = None
    with_limit: bool = False
    sweep: int | None = None


def _iters(text: str) -> int | str:
    if text in ("auto", "theorem"):
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer, 'auto' or 'theorem'") from None
    if k < 0:
        raise argparse.ArgumentTypeError("iteration count must be nonnegative")
    return k


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sinkhall", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, marginals=True, default_fmt="json", formats_=("json", "csv", "text")):
        p.add_argument("--iters", type=_iters, default="auto", help="N, auto or theorem")
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--format", dest="fmt", choices=formats_, default=default_fmt)
        p.add_argument("--record-stride", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if marginals:
            p.add_argument("--row-marginals", default="uniform", help="PATH or 'uniform'")
            p.add_argument("--col-marginals", default="uniform", help="PATH or 'uniform'")

    p = sub.add_parser("scale", help="run the Sinkhorn iteration")
    p.add_argument("input", help="matrix file")
    common(p)
    p.add_argument("--trajectory", default=None, help="also write the trajectory CSV here")

    p = sub.add_parser("decompose", help="principal partition and fine blocks")
    p.add_argument("input", help="matrix file")
    common(p, formats_=("json", "text"))
    p.add_argument("--with-limit", action="store_true", help="include the limit matrices")

    p = sub.add_parser("blocker", help="Hall blocker by Sinkhorn and sorting")
    p.add_argument("input", help="graph file")
    common(p, marginals=False, formats_=("json", "text"))

    p = sub.add_parser("oracle-check", help="compare fast paths with brute force")
    p.add_argument("input", nargs="?", default=None, help="matrix or graph file")
    common(p, formats_=("json", "text"), default_fmt="text")
    p.add_argument("--sweep", type=int, default=None, metavar="N",
                   help="check every N x N pattern instead of one input")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=ns.command,
        input=getattr(ns, "input", None),
        row_marginals=getattr(ns, "row_marginals", "uniform"),
        col_marginals=getattr(ns, "col_marginals", "uniform"),
        iters=ns.iters,
        tol=ns.tol,
        fmt=ns.fmt,
        record_stride=ns.record_stride,
        out=ns.out,
        trajectory=getattr(ns, "trajectory", None),
        with_limit=getattr(ns, "with_limit", False),
        sweep=getattr(ns, "sweep", None),
    )


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _load_matrix(cfg: RunConfig, limit: int | None = None) -> tuple[NonnegMatrix, MarginalPair]:
    A = formats.parse_matrix(_read(cfg.input))
    limit = MAX_SIDE if limit is None else limit
    if max(A.shape) > limit:
        raise InputError(f"input is {A.n_rows} x {A.n_cols}; the limit is {limit} per side")
    r = (1,) * A.n_rows if cfg.row_marginals == "uniform" else formats.parse_vector(_read(cfg.row_marginals))
    c = (1,) * A.n_cols if cfg.col_marginals == "uniform" else formats.parse_vector(_read(cfg.col_marginals))
    mp = MarginalPair(r, c)
    mp.check_dims(A)
    return A, mp


@contextlib.contextmanager
def _sink(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        buf = io.StringIO()
        yield buf
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def workers() -> int:
    """Worker processes for sweeps: ``SB_THREADS`` if set, capped by the CPU count."""
    cpus = os.cpu_count() or 1
    env = os.environ.get("SB_THREADS")
    if env is None:
        return 1
    try:
        return max(1, min(int(env), cpus))
    except ValueError:
        return 1


def cmd_scale(cfg: RunConfig) -> int:
    if cfg.iters == "theorem":
        raise InputError("--iters theorem is only meaningful for blocker")
    A, mp = _load_matrix(cfg)
    if cfg.iters == "auto":
        state, traj = engine.run(A, mp, AUTO_CAP, stop="linf", tol=cfg.tol,
                                 record_stride=cfg.record_stride)
    else:
        state, traj = engine.run(A, mp, cfg.iters, record_stride=cfg.record_stride)
    div = engine.divergence(state)
    if cfg.trajectory:
        with open(cfg.trajectory, "w", encoding="utf-8") as fh:
            traj.write_csv(fh)
    with _sink(cfg.out) as out:
        if cfg.fmt == "csv":
            traj.write_csv(out)
        elif cfg.fmt == "json":
            formats.dump_json({
                "shape": list(A.shape),
                "iterations": state.k,
                "divergence": div,
                "row_marginal": state.row_marginal().tolist(),
                "col_marginal": state.col_marginal().tolist(),
                "records": len(traj),
            }, out)
        else:
            out.write(f"iterations {state.k}\ndivergence {div!r}\n")
            out.write("row_marginal " + " ".join(repr(float(x)) for x in state.row_marginal()) + "\n")
    return EXIT_OK


def cmd_decompose(cfg: RunConfig) -> int:
    A, mp = _load_matrix(cfg)
    pp = principal_partition(A, mp)
    rd = refined_chain(A, mp, pp)
    limit = sinkhorn_limit(A, mp, pp, rd) if cfg.with_limit else None
    rep = formats.decomposition_report(pp, rd, limit)
    with _sink(cfg.out) as out:
        if cfg.fmt == "json":
            formats.dump_json(rep, out)
        else:
            out.write(f"theta {rep['theta']}\n")
            for k, b in enumerate(rep["blocks"], start=1):
                out.write(f"block {k}: rows {b['rows']} cols {b['cols']} R={b['R']} C={b['C']}\n")
            out.write("critical_lambdas " + " ".join(rep["critical_lambdas"]) + "\n")
            out.write("p_star " + " ".join(rep["p_star"]) + "\n")
            for fb in rep["fine_blocks"]:
                out.write(f"fine {fb['block']}.{fb['position']}: rows {fb['rows']} cols {fb['cols']}\n")
    return EXIT_OK


def cmd_blocker(cfg: RunConfig) -> int:
    G = formats.parse_graph(_read(cfg.input))
    if G.n > 2 * MAX_SIDE:
        raise InputError(f"graph has {G.n} vertices; the limit is {2 * MAX_SIDE}")
    rep = best_blocker(G, sinkhorn_and_sort(G, cfg.iters))
    data = formats.hall_report(rep)
    with _sink(cfg.out) as out:
        if cfg.fmt == "json":
            formats.dump_json(data, out)
        else:
            out.write(f"best_set {data['best_set']}\ndeficiency {rep.deficiency}\n"
                      f"matching_number {rep.matching_number}\n"
                      f"has_perfect_matching {str(rep.has_perfect_matching).lower()}\n"
                      f"iterations_used {rep.iterations_used} ({rep.guarantee})\n")
    return EXIT_BLOCKER if rep.deficiency > 0 else EXIT_OK


def _check_one(A: NonnegMatrix, ell: int | str = "auto") -> list[str]:
    return crosscheck.check_all(A, ell=ell)


def cmd_oracle_check(cfg: RunConfig) -> int:
    ell = cfg.iters
    if cfg.sweep is not None:
        if not 1 <= cfg.sweep <= MAX_SWEEP:
            raise InputError(f"--sweep is limited to 1..{MAX_SWEEP}")
        mats = list(crosscheck.patterns(cfg.sweep))
        check = partial(_check_one, ell=ell)
        if workers() > 1:
            with ProcessPoolExecutor(workers()) as pool:
                results = list(pool.map(check, mats, chunksize=16))
        else:
            results = [check(A) for A in mats]
        cases = list(zip(mats, results))
        label = f"{len(mats)} patterns of size {cfg.sweep} x {cfg.sweep}"
    else:
        if cfg.input is None:
            raise InputError("oracle-check needs an input file or --sweep")
        text = _read(cfg.input)
        if formats.is_graph_text(text):
            G = formats.parse_graph(text)
            A = formats.parse_matrix(f"{G.n1} {G.n2}\n" + "".join(
                f"{u + 1} {v + 1} 1\n" for u, v in sorted(G.edges)))
            mp = MarginalPair.uniform(G.n1, G.n2)
        else:
            A, mp = _load_matrix(cfg, limit=oracle.MAX_ENUM)
        if max(A.shape) > oracle.MAX_ENUM:
            raise InputError(f"input is {A.n_rows} x {A.n_cols}; the oracle limit is "
                             f"{oracle.MAX_ENUM} per side")
        cases = [(A, crosscheck.check_decomposition(A, mp)
                  + crosscheck.check_blocker(crosscheck.graph_of(A), ell))]
        label = f"input {A.n_rows} x {A.n_cols}"
    failures = [(A, bad) for A, bad in cases if bad]
    with _sink(cfg.out) as out:
        if cfg.fmt == "json":
            formats.dump_json({
                "checked": len(cases),
                "disagreements": len(failures),
                "counterexample": None if not failures else {
                    "matrix": formats.format_matrix(failures[0][0]),
                    "problems": failures[0][1]},
            }, out)
        elif failures:
            A, bad = failures[0]
            out.write(f"DISAGREE on {len(failures)} of {label}; smallest counterexample:\n")
            out.write(formats.format_matrix(A))
            for b in bad:
                out.write(f"  {b}\n")
        else:
            out.write(f"agree: {label}\n")
    return EXIT_ORACLE if failures else EXIT_OK


COMMANDS = {
    "scale": cmd_scale,
    "decompose": cmd_decompose,
    "blocker": cmd_blocker,
    "oracle-check": cmd_oracle_check,
}


def main(argv: Sequence[str] | None = None, stderr: TextIO | None = None) -> int:
    stderr = sys.stderr if stderr is None else stderr
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        return COMMANDS[cfg.command](cfg)
    except IsolatedVertexError as exc:
        print(f"sinkhall: {exc}", file=stderr)
        return EXIT_ISOLATED
    except DimensionError as exc:
        print(f"sinkhall: dimension mismatch: {exc}", file=stderr)
        return EXIT_DIM
    except (InputError, ParseError) as exc:
        print(f"sinkhall: {exc}", file=stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # malformed marginals and similar input problems
        print(f"sinkhall: {exc}", file=stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
