import json
import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .algebra import Cochain
from .complex import CellComplex, build_from_tetrahedra
from .errors import DimensionMismatchError, ParseError
from .generators import KnotPath
from .matching import Matching, Pair, PairKind, SpanningTree, tree_from_edges

logger = logging.getLogger(__name__)


def _content_lines(path: str) -> Iterator[Tuple[int, List[str]]]:
    """Yield (1-based line number, tokens) for lines that are not blank or comments."""
    with open(path, "r", encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            tokens = raw.split("#", 1)[0].split()
            if tokens:
                yield number, tokens


def _next(lines: Iterator[Tuple[int, List[str]]], last: int, what: str):
    try:
        return next(lines)
    except StopIteration:
        raise ParseError(f"unexpected end of file, expected {what}", last + 1) from None


def _ints(tokens: List[str], number: int, what: str) -> List[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected integers for {what}, got {' '.join(tokens)}", number) from None


def _format_scalar(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


# Meshes


def write_mesh(K: CellComplex, path: str) -> None:
    if K.dimension != 3:
        raise ValueError(f"Only tetrahedral complexes can be written, got dimension {K.dimension}")
    tets = K.top_simplices()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"vertices {K.n_vertices} tets {len(tets)}\n")
        for v in range(K.n_vertices):
            if K.coordinates is None:
                fh.write("- - -\n")
            else:
                fh.write(" ".join(repr(float(c)) for c in K.coordinates[v]) + "\n")
        for tet in tets:
            fh.write(" ".join(str(v) for v in tet) + "\n")
    logger.info(f"Wrote {K!r} to {path}")


def read_mesh(path: str) -> CellComplex:
    """
    Raises:
        ParseError: the file does not follow the mesh format.
        MeshError: the tets do not describe a valid complex.
    """
    lines = _content_lines(path)
    number, tokens = _next(lines, 0, "header")
    if len(tokens) != 4 or tokens[0] != "vertices" or tokens[2] != "tets":
        raise ParseError("header must read 'vertices N tets M'", number)
    n_vertices, n_tets = _ints([tokens[1], tokens[3]], number, "header counts")
    if n_vertices < 0 or n_tets < 0:
        raise ParseError("counts must be non-negative", number)

    coords: List[List[float]] = []
    missing = 0
    for _ in range(n_vertices):
        number, tokens = _next(lines, number, "a vertex line")
        if len(tokens) != 3:
            raise ParseError(f"vertex line needs 3 fields, got {len(tokens)}", number)
        if tokens == ["-", "-", "-"]:
            missing += 1
            continue
        try:
            coords.append([float(t) for t in tokens])
        except ValueError:
            raise ParseError(f"bad coordinates: {' '.join(tokens)}", number) from None
    if missing and coords:
        raise ParseError("either all or no vertices may carry coordinates", number)

    tets = []
    for _ in range(n_tets):
        number, tokens = _next(lines, number, "a tet line")
        if len(tokens) != 4:
            raise ParseError(f"tet line needs 4 vertex ids, got {len(tokens)}", number)
        tets.append(_ints(tokens, number, "tet"))
    extra = next(lines, None)
    if extra is not None:
        raise ParseError("unexpected content after the last tet", extra[0])

    K = build_from_tetrahedra(
        n_vertices, tets, np.array(coords) if coords and not missing else None
    )
    logger.info(f"Read {K!r} from {path}")
    return K


# Cochains


def write_cochain(v: Cochain, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"cochain {v.k} {len(v)}\n")
        for cid, value in v.items():
            fh.write(f"{cid} {_format_scalar(value)}\n")


def read_cochain(path: str, K: CellComplex, k: int) -> Cochain:
    """
    Read a k-cochain of K; cells without a line are zero.

    Raises:
        ParseError: malformed header or entry line.
        DimensionMismatchError: wrong dimension or an id that is not a k-cell.
    """
    lines = _content_lines(path)
    number, tokens = _next(lines, 0, "header")
    if len(tokens) != 3 or tokens[0] != "cochain":
        raise ParseError("header must read 'cochain k N'", number)
    dim, count = _ints(tokens[1:], number, "header")
    if dim != k:
        raise DimensionMismatchError(f"File holds a {dim}-cochain, expected k={k}")

    cochain = Cochain(k, range(K.count(k)))
    seen = set()
    for _ in range(count):
        number, tokens = _next(lines, number, "an entry line")
        if len(tokens) != 2:
            raise ParseError("entry line must read 'id value'", number)
        (cid,) = _ints(tokens[:1], number, "cell id")
        try:
            value = Fraction(tokens[1])
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"bad value '{tokens[1]}'", number) from None
        if cid < 0 or cid >= K.count(k):
            raise DimensionMismatchError(
                f"line {number}: {k}-cell {cid} does not exist (0..{K.count(k) - 1})"
            )
        if cid in seen:
            raise ParseError(f"duplicate entry for cell {cid}", number)
        seen.add(cid)
        cochain[cid] = value.numerator if value.denominator == 1 else value
    extra = next(lines, None)
    if extra is not None:
        raise ParseError("more entries than the header announces", extra[0])
    return cochain


# Matchings


def write_matching(M: Matching, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for order, pair in enumerate(M.pairs):
            fh.write(f"pair {M.k} {pair.sigma} {pair.tau} {pair.kind.value} {order}\n")


def read_matching(path: str, K: Optional[CellComplex] = None) -> Matching:
    """Pairs come back in file order; with K, snapshots are the canonical boundaries."""
    kinds = {kind.value: kind for kind in PairKind}
    rows = []
    k = None
    for number, tokens in _content_lines(path):
        if len(tokens) != 6 or tokens[0] != "pair":
            raise ParseError("line must read 'pair k sigma tau kind order'", number)
        dim, sigma, tau = _ints(tokens[1:4], number, "pair")
        (order,) = _ints(tokens[5:6], number, "order")
        if tokens[4] not in kinds:
            raise ParseError(f"unknown pair kind '{tokens[4]}'", number)
        if k is None:
            k = dim
        elif dim != k:
            raise ParseError(f"mixed dimensions {k} and {dim}", number)
        rows.append((order, sigma, tau, kinds[tokens[4]]))
    matching = Matching(k if k is not None else 0)
    for _, sigma, tau, kind in sorted(rows):
        boundary = dict(K.boundary(matching.k + 1, tau)) if K is not None else {}
        matching.append(Pair(sigma, tau, kind, 0, boundary))
    return matching


# Spanning trees


def write_tree(tree: SpanningTree, path: str) -> None:
    edges = [(v, tree.parent[v], tree.parent_edge[v]) for v in tree.order[1:]]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"tree root {tree.root} edges {len(edges)}\n")
        for child, parent, edge in edges:
            fh.write(f"{child} {parent} {edge}\n")


def read_tree(path: str, K: CellComplex) -> SpanningTree:
    """
    Raises:
        ParseError: malformed file.
        NotASpanningTreeError: the edges do not span K as a tree.
    """
    lines = _content_lines(path)
    number, tokens = _next(lines, 0, "header")
    if len(tokens) != 5 or tokens[0] != "tree" or tokens[1] != "root" or tokens[3] != "edges":
        raise ParseError("header must read 'tree root R edges N'", number)
    root, count = _ints([tokens[2], tokens[4]], number, "header")
    edge_ids = []
    for _ in range(count):
        number, tokens = _next(lines, number, "a tree edge")
        if len(tokens) != 3:
            raise ParseError("tree line must read 'child parent edge'", number)
        edge_ids.append(_ints(tokens, number, "tree edge")[2])
    return tree_from_edges(K, edge_ids, root)


# Knot paths


def read_knot_path(path: str, name: Optional[str] = None) -> KnotPath:
    cells = []
    for number, tokens in _content_lines(path):
        if len(tokens) != 3:
            raise ParseError("path line must read 'x y z'", number)
        cells.append(tuple(_ints(tokens, number, "cell")))
    return KnotPath(tuple(cells), name or path)


def write_knot_path(knot: KnotPath, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {knot.name}\n")
        for x, y, z in knot.cells:
            fh.write(f"{x} {y} {z}\n")


# Reports


@dataclass
class Report:
    """Summary of one run; `residual_zero` is an exact check, not a norm."""

    mesh: Dict[str, int]
    validation: Dict[str, Any] = field(default_factory=dict)
    trace: Dict[str, Any] = field(default_factory=dict)
    residual_zero: Optional[bool] = None
    seconds: Dict[str, float] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    @staticmethod
    def mesh_stats(K: CellComplex) -> Dict[str, int]:
        return {
            "vertices": K.n_vertices,
            "edges": K.n_edges,
            "faces": K.n_faces,
            "volumes": K.n_volumes,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")
