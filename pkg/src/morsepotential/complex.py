import logging
import warnings
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .algebra import SignedSparseMatrix
from .errors import (
    DanglingVertexIdError,
    DegenerateTetError,
    DuplicateTetError,
    TopologyWarning,
    UnknownIndexError,
)

logger = logging.getLogger(__name__)

Simplex = Tuple[int, ...]
Incidence = Tuple[Tuple[int, int], ...]


class CellComplex:
    """
    Immutable oriented simplicial complex.

    Cells of dimension k are sorted vertex tuples, numbered in lexicographic
    order. The boundary of a k-simplex lists its facets with the sign
    (-1)^j of the omitted vertex position j, so every cell carries the
    orientation induced by increasing vertex order.

    Use `from_simplices` or `build_from_tetrahedra` to construct one.
    """

    def __init__(
        self,
        simplices: Sequence[Sequence[Simplex]],
        coordinates: Optional[np.ndarray] = None,
    ):
        self._simplices: Tuple[Tuple[Simplex, ...], ...] = tuple(
            tuple(level) for level in simplices
        )
        self._index: List[Dict[Simplex, int]] = [
            {s: i for i, s in enumerate(level)} for level in self._simplices
        ]
        self.coordinates = coordinates

        self._boundaries: List[Tuple[Incidence, ...]] = [tuple()]
        for k in range(1, len(self._simplices)):
            facet_index = self._index[k - 1]
            self._boundaries.append(
                tuple(
                    tuple(
                        (facet_index[s[:j] + s[j + 1 :]], -1 if j % 2 else 1)
                        for j in range(k + 1)
                    )
                    for s in self._simplices[k]
                )
            )

        cob: List[List[List[Tuple[int, int]]]] = [
            [[] for _ in level] for level in self._simplices
        ]
        for k in range(1, len(self._simplices)):
            for cell, bd in enumerate(self._boundaries[k]):
                for facet, sign in bd:
                    cob[k - 1][facet].append((cell, sign))
        self._coboundaries: List[Tuple[Incidence, ...]] = [
            tuple(tuple(entry) for entry in level) for level in cob
        ]

    @classmethod
    def from_simplices(
        cls,
        vertex_count: int,
        top_simplices: Iterable[Sequence[int]],
        coordinates: Optional[Sequence[Sequence[float]]] = None,
    ) -> "CellComplex":
        """
        Build the complex generated by a list of top-dimensional simplices.

        Every vertex id in range(vertex_count) becomes a 0-cell, even when no
        simplex uses it.

        Raises:
            DanglingVertexIdError: a simplex references a vertex id out of range.
            DegenerateTetError: a simplex repeats a vertex.
            DuplicateTetError: two simplices have the same vertex set.
        """
        if vertex_count < 0:
            raise ValueError(f"vertex_count must be non-negative, got {vertex_count}")

        top: List[Simplex] = []
        seen = set()
        dim = None
        for position, raw in enumerate(top_simplices):
            cell = tuple(int(v) for v in raw)
            if dim is None:
                dim = len(cell) - 1
            elif len(cell) - 1 != dim:
                raise ValueError(
                    f"Simplex {position} has {len(cell)} vertices, expected {dim + 1}"
                )
            for v in cell:
                if v < 0 or v >= vertex_count:
                    raise DanglingVertexIdError(
                        f"Simplex {position} references vertex {v}, "
                        f"valid ids are 0..{vertex_count - 1}"
                    )
            key = tuple(sorted(cell))
            if len(set(key)) != len(key):
                raise DegenerateTetError(f"Simplex {position} repeats a vertex: {cell}")
            if key in seen:
                raise DuplicateTetError(f"Simplex {position} duplicates {key}")
            seen.add(key)
            top.append(key)

        levels: List[set] = [set((v,) for v in range(vertex_count))]
        if dim is not None and dim > 0:
            by_dim = {dim: set(top)}
            for k in range(dim - 1, 0, -1):
                by_dim[k] = {
                    face for s in by_dim[k + 1] for face in combinations(s, k + 1)
                }
            levels.extend(by_dim[k] for k in range(1, dim + 1))

        coords = None
        if coordinates is not None:
            coords = np.asarray(coordinates, dtype=float)
            if coords.shape != (vertex_count, 3):
                raise ValueError(
                    f"coordinates must have shape ({vertex_count}, 3), got {coords.shape}"
                )

        complex_ = cls([sorted(level) for level in levels], coords)
        logger.debug(f"Built complex with counts {complex_.counts}")
        return complex_

    @property
    def dimension(self) -> int:
        return len(self._simplices) - 1

    def count(self, k: int) -> int:
        if 0 <= k < len(self._simplices):
            return len(self._simplices[k])
        return 0

    @property
    def counts(self) -> Tuple[int, int, int, int]:
        return tuple(self.count(k) for k in range(4))

    @property
    def n_vertices(self) -> int:
        return self.count(0)

    @property
    def n_edges(self) -> int:
        return self.count(1)

    @property
    def n_faces(self) -> int:
        return self.count(2)

    @property
    def n_volumes(self) -> int:
        return self.count(3)

    @property
    def euler_characteristic(self) -> int:
        return sum((-1) ** k * self.count(k) for k in range(len(self._simplices)))

    def cells(self, k: int) -> Tuple[Simplex, ...]:
        if 0 <= k < len(self._simplices):
            return self._simplices[k]
        return tuple()

    def cell_id(self, vertices: Sequence[int]) -> int:
        key = tuple(sorted(vertices))
        k = len(key) - 1
        try:
            return self._index[k][key]
        except (IndexError, KeyError):
            raise UnknownIndexError(f"No {k}-cell with vertices {key}") from None

    def boundary(self, k: int, cell: int) -> Incidence:
        """Signed facets ((k-1)-cell id, sign) of a k-cell."""
        if k == 0:
            return tuple()
        return self._boundaries[k][cell]

    def coboundary(self, k: int, cell: int) -> Incidence:
        """Signed cofacets ((k+1)-cell id, sign) of a k-cell."""
        return self._coboundaries[k][cell]

    def top_simplices(self) -> Tuple[Simplex, ...]:
        return self._simplices[-1]

    def vertex_graph(self) -> nx.Graph:
        """Vertex-edge graph; each graph edge carries the mesh edge id as `id`."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_vertices))
        for eid, (a, b) in enumerate(self.cells(1)):
            graph.add_edge(a, b, id=eid)
        return graph

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellComplex):
            return NotImplemented
        return self._simplices == other._simplices

    def __repr__(self) -> str:
        return f"CellComplex(counts={self.counts})"


def build_from_tetrahedra(
    vertex_count: int,
    tets: Iterable[Sequence[int]],
    coordinates: Optional[Sequence[Sequence[float]]] = None,
) -> CellComplex:
    """Build a 3-dimensional complex from 4-tuples of vertex ids."""
    tets = list(tets)
    for position, tet in enumerate(tets):
        if len(tet) != 4:
            raise ValueError(f"Tet {position} must have 4 vertices, got {len(tet)}")
    return CellComplex.from_simplices(vertex_count, tets, coordinates)


def incidence_matrix(K: CellComplex, k: int) -> SignedSparseMatrix:
    """
    Matrix of the coboundary from k-cochains to (k+1)-cochains.

    Rows are (k+1)-cells, columns k-cells, entry (tau, sigma) is the
    coefficient of sigma in the boundary of tau.
    """
    if k not in (0, 1, 2):
        raise ValueError(f"Unknown incidence degree: {k}. Valid options: [0, 1, 2]")
    entries = (
        (cell, facet, sign)
        for cell in range(K.count(k + 1))
        for facet, sign in K.boundary(k + 1, cell)
    )
    return SignedSparseMatrix(
        range(K.count(k + 1)),
        range(K.count(k)),
        entries,
        row_dim=k + 1,
        col_dim=k,
    )


@dataclass
class ValidationReport:
    boundary_squared_zero: bool
    manifold: bool
    connected: bool
    euler: int
    boundary_connected: bool
    boundary_euler: int

    @property
    def ok(self) -> bool:
        return (
            self.boundary_squared_zero
            and self.manifold
            and self.connected
            and self.euler == 1
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data["ok"] = self.ok
        return data


def _boundary_squared_zero(K: CellComplex) -> bool:
    for k in range(2, K.dimension + 1):
        for cell in range(K.count(k)):
            acc: Dict[int, int] = {}
            for facet, sign in K.boundary(k, cell):
                for ridge, inner in K.boundary(k - 1, facet):
                    acc[ridge] = acc.get(ridge, 0) + sign * inner
            if any(acc.values()):
                logger.error(f"Boundary of boundary nonzero on {k}-cell {cell}")
                return False
    return True


def validate(K: CellComplex) -> ValidationReport:
    """
    Check the properties the solvers rely on.

    Euler characteristic 1 is what a 3-ball gives; anything else emits a
    TopologyWarning but is still reported rather than raised.
    """
    top = K.dimension
    manifold = True
    boundary_facets: List[int] = []
    if top >= 1:
        for facet in range(K.count(top - 1)):
            degree = len(K.coboundary(top - 1, facet))
            if degree > 2:
                manifold = False
            elif degree == 1:
                boundary_facets.append(facet)

    graph = K.vertex_graph()
    connected = K.n_vertices > 0 and nx.is_connected(graph)

    # boundary subcomplex generated by facets with a single cofacet
    cells_by_dim: List[set] = [set() for _ in range(max(top, 0))]
    if top >= 1:
        cells_by_dim[top - 1] = set(boundary_facets)
        for k in range(top - 1, 0, -1):
            for cell in cells_by_dim[k]:
                cells_by_dim[k - 1].update(f for f, _ in K.boundary(k, cell))
    boundary_euler = sum((-1) ** k * len(c) for k, c in enumerate(cells_by_dim))

    boundary_graph = nx.Graph()
    if top >= 2:
        boundary_graph.add_nodes_from(cells_by_dim[0])
        boundary_graph.add_edges_from(K.cells(1)[e] for e in cells_by_dim[1])
    boundary_connected = (
        boundary_graph.number_of_nodes() > 0 and nx.is_connected(boundary_graph)
    )

    report = ValidationReport(
        boundary_squared_zero=_boundary_squared_zero(K),
        manifold=manifold,
        connected=connected,
        euler=K.euler_characteristic,
        boundary_connected=boundary_connected,
        boundary_euler=boundary_euler,
    )
    if report.euler != 1:
        warnings.warn(
            f"Euler characteristic is {report.euler}, expected 1 for a ball; "
            "completeness checks fall back to computed ranks",
            TopologyWarning,
        )
    logger.info(f"Validated {K!r}: {report.to_dict()}")
    return report
