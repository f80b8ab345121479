import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .algebra import Cochain
from .complex import CellComplex, incidence_matrix, validate
from .errors import InconsistentError, MorsePotentialError, ResidualNotZeroError
from .generators import (
    KNOT_NAMES,
    build_furch_ball,
    cube_grid,
    knot_paths,
    knotted_arc_edges,
    random_solenoidal_field,
)
from .io import (
    Report,
    read_cochain,
    read_knot_path,
    read_mesh,
    read_tree,
    write_cochain,
    write_matching,
    write_mesh,
    write_tree,
)
from .matching import (
    bfs_tree,
    make_policy,
    random_spanning_tree,
    stt_run,
    tree_containing,
)
from .solver import VectorPotentialSolver, greedy_spanning_tree, solve_with_eliminator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PRECONDITION = 2
EXIT_STALLED = 3


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


# Mesh and field sources


def _add_mesh_args(parser: argparse.ArgumentParser, required: bool = True) -> None:
    source = parser.add_mutually_exclusive_group(required=required)
    source.add_argument("--mesh", help="mesh file ('vertices N tets M' format)")
    source.add_argument("--grid", type=positive_int, metavar="N", help="Kuhn cube grid of size N")
    source.add_argument("--furch", type=positive_int, metavar="N", help="knotted ball of size N")
    parser.add_argument(
        "--knot",
        default="trefoil-1",
        help=f"tunnel for --furch: one of {KNOT_NAMES} with k in trefoil-k",
    )
    parser.add_argument("--knot-file", help="lattice path file overriding --knot")


def _add_field_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--field", help="face cochain file; generated from --seed otherwise")
    parser.add_argument("--seed", type=non_negative_int, default=0)
    parser.add_argument("--magnitude", type=non_negative_int, default=10)


def _load_mesh(args: argparse.Namespace):
    """Returns the complex and, for knotted balls, the FurchBall record."""
    if args.mesh:
        return read_mesh(args.mesh), None
    if args.grid:
        return cube_grid(args.grid), None
    if args.knot_file:
        paths = [read_knot_path(args.knot_file)]
    else:
        paths = knot_paths(args.knot, args.furch)
    ball = build_furch_ball(args.furch, paths)
    return ball.complex, ball


def _load_field(args: argparse.Namespace, K: CellComplex) -> Cochain:
    if args.field:
        return read_cochain(args.field, K, 2)
    return random_solenoidal_field(K, args.seed, args.magnitude)


def _residual_zero(K: CellComplex, h: Cochain, i: Cochain) -> bool:
    return (incidence_matrix(K, 1).apply(h) - i).is_zero()


# Commands


def cmd_gen(args: argparse.Namespace) -> int:
    K, _ = _load_mesh(args)
    report = Report(mesh=Report.mesh_stats(K), validation=validate(K).to_dict())
    if args.out:
        write_mesh(K, args.out)
    print(report.to_json())
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    K, _ = _load_mesh(args)
    i = _load_field(args, K)
    report = Report(mesh=Report.mesh_stats(K), validation=validate(K).to_dict())

    started = time.perf_counter()
    if args.method == "eliminate":
        h = solve_with_eliminator(K, i, args.arithmetic)
    else:
        solver = VectorPotentialSolver(
            seed=args.seed, field=args.arithmetic, debug=args.debug, max_depth=args.max_depth
        )
        factorization = solver.factorize(K)
        h = factorization.solve(i)
        report.trace = factorization.trace.to_dict()
        if args.matching_out:
            for level, matching in enumerate(factorization.levels):
                write_matching(matching, f"{args.matching_out}.{level}")
    report.seconds["solve"] = time.perf_counter() - started

    report.residual_zero = _residual_zero(K, h, i)
    if args.out:
        write_cochain(h, args.out)
    if args.report:
        report.write(args.report)
    print(report.to_json())
    if not report.residual_zero:
        logger.error("C h - i is not zero")
        return EXIT_ERROR
    return EXIT_OK


def _stt_tree(args: argparse.Namespace, K: CellComplex, ball):
    choice = args.tree
    if choice == "bfs":
        return bfs_tree(K)
    if choice == "from-matching":
        return greedy_spanning_tree(K, args.seed)
    if choice == "random":
        return random_spanning_tree(K, args.seed)
    if choice == "knotted":
        if ball is None or not ball.paths:
            raise ValueError("--tree knotted needs --furch with a knotted tunnel")
        return tree_containing(K, knotted_arc_edges(ball, ball.paths[0]), args.seed)
    if choice.startswith("file:"):
        return read_tree(choice[len("file:") :], K)
    raise ValueError(
        f"Unknown tree: '{choice}'. Valid options: "
        "['bfs', 'random', 'knotted', 'file:PATH', 'from-matching']"
    )


def cmd_stt(args: argparse.Namespace) -> int:
    K, ball = _load_mesh(args)
    i = _load_field(args, K)
    tree = _stt_tree(args, K, ball)
    policy = make_policy(args.seed, K)
    if args.tree_out:
        write_tree(tree, args.tree_out)

    started = time.perf_counter()
    result = stt_run(K, tree, i, policy)
    report = Report(mesh=Report.mesh_stats(K))
    report.seconds["stt"] = time.perf_counter() - started
    report.extra = {
        "tree": args.tree,
        "tree_edges": len(tree.edge_ids),
        "terminated": result.terminated,
        "propagations": len(result.matching),
        "unresolved_faces": len(result.unresolved),
    }

    if result.terminated:
        report.residual_zero = _residual_zero(K, result.h, i)
        if args.out:
            write_cochain(result.h, args.out)
    print(report.to_json())
    if not result.terminated:
        return EXIT_STALLED
    return EXIT_OK if report.residual_zero else EXIT_ERROR


@lru_cache(maxsize=8)
def _bench_mesh(n: int, knot: Optional[str]) -> CellComplex:
    if knot:
        return build_furch_ball(n, knot_paths(knot, n)).complex
    return cube_grid(n)


def _bench_one(job: Tuple[int, Optional[str], int, int]) -> Tuple[int, int, float, int, int]:
    n, knot, seed, magnitude = job
    K = _bench_mesh(n, knot)
    i = random_solenoidal_field(K, seed, magnitude)
    started = time.perf_counter()
    factorization = VectorPotentialSolver(seed=seed).factorize(K)
    h = factorization.solve(i)
    seconds = time.perf_counter() - started
    if not _residual_zero(K, h, i):
        raise ResidualNotZeroError(f"Inexact solution for n={n}, seed={seed}")
    trace = factorization.trace
    return n, K.n_volumes, seconds, trace.depth, trace.first_residual_faces or 0


def cmd_bench(args: argparse.Namespace) -> int:
    jobs = [(n, args.knot, seed, args.magnitude) for n in args.sizes for seed in range(args.runs)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(job) for job in jobs]

    header = ["n", "tets", "seconds", "ratio", "max_depth", "max_first_residual_faces", "runs"]
    rows: List[list] = []
    previous = None
    for n in args.sizes:
        mine = [r for r in results if r[0] == n]
        median = float(np.median([r[2] for r in mine]))
        ratio = "" if previous is None or previous == 0 else f"{median / previous:.3f}"
        depth = max(r[3] for r in mine)
        residual_faces = max(r[4] for r in mine)
        rows.append([n, mine[0][1], f"{median:.6f}", ratio, depth, residual_faces, len(mine)])
        previous = median

    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morsepotential",
        description="Discrete vector potentials by recursive acyclic matchings",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a mesh and print its validation")
    _add_mesh_args(gen)
    gen.add_argument("--out", help="mesh file to write")
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="solve C h = i")
    _add_mesh_args(solve)
    _add_field_args(solve)
    solve.add_argument("--out", help="file for h")
    solve.add_argument("--report", help="file for the JSON report")
    solve.add_argument("--method", choices=["morse", "eliminate"], default="morse")
    solve.add_argument("--arithmetic", choices=["rational", "float"], default="rational")
    solve.add_argument("--max-depth", type=non_negative_int, default=32)
    solve.add_argument("--matching-out", help="prefix for per-level matching dumps")
    solve.add_argument("--debug", action="store_true", help="check dd = 0 after every collapse")
    solve.set_defaults(func=cmd_solve)

    stt = sub.add_parser("stt", help="run the spanning tree technique")
    _add_mesh_args(stt)
    _add_field_args(stt)
    stt.add_argument(
        "--tree",
        default="bfs",
        help="bfs, random, knotted, file:PATH or from-matching",
    )
    stt.add_argument("--tree-out", help="file for the spanning tree used")
    stt.add_argument("--out", help="file for h")
    stt.set_defaults(func=cmd_stt)

    bench = sub.add_parser("bench", help="time solves over a size sweep")
    bench.add_argument("--sizes", type=positive_int, nargs="+", required=True)
    bench.add_argument("--knot", help="bench knotted balls with this tunnel instead of grids")
    bench.add_argument("--runs", type=positive_int, default=3)
    bench.add_argument("--magnitude", type=non_negative_int, default=10)
    bench.add_argument("--workers", type=positive_int, default=1)
    bench.add_argument("--out", help="CSV file, standard output by default")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args)
    except InconsistentError as e:
        logger.error(str(e))
        return EXIT_PRECONDITION
    except (MorsePotentialError, ValueError, OSError) as e:
        logger.error(str(e))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
