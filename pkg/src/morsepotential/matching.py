import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Set,
    Tuple,
)

import networkx as nx
import numpy as np

from .algebra import RATIONAL, Cochain, ScalarField, rank_of
from .complex import CellComplex, incidence_matrix
from .errors import (
    DimensionMismatchError,
    DisconnectedGraphError,
    InconsistentInputError,
    NonManifoldFaceError,
    NotASpanningTreeError,
)

if TYPE_CHECKING:
    from .ledger import BasisLedger

logger = logging.getLogger(__name__)

V_INF = -1


class PairKind(Enum):
    FREE = "free"
    FLAT = "flat"
    TREE = "tree"


@dataclass(frozen=True)
class Pair:
    """
    A matched pair (sigma, tau) with sigma of dimension k and tau of k + 1.

    `boundary` is the boundary expression of tau when the pair was formed.
    """

    sigma: int
    tau: int
    kind: PairKind = PairKind.FREE
    level: int = 0
    boundary: Mapping[int, Any] = field(default_factory=dict, compare=False)


class Matching:
    """
    Ordered matching of k-chains.

    Pairs are stored in an order that witnesses acyclicity: the sigma of a
    pair is never in the boundary snapshot of a later pair's tau.
    """

    def __init__(self, k: int, pairs: Iterable[Pair] = ()):
        self.k = k
        self.pairs: List[Pair] = []
        self._down: Set[int] = set()
        self._up: Set[int] = set()
        for pair in pairs:
            self.append(pair)

    def append(self, pair: Pair) -> None:
        if pair.sigma in self._down:
            raise ValueError(f"{self.k}-element {pair.sigma} is already matched")
        if pair.tau in self._up:
            raise ValueError(f"{self.k + 1}-element {pair.tau} is already matched")
        self.pairs.append(pair)
        self._down.add(pair.sigma)
        self._up.add(pair.tau)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    @property
    def down(self) -> Set[int]:
        return set(self._down)

    @property
    def up(self) -> Set[int]:
        return set(self._up)

    def critical(self, K: CellComplex) -> Tuple[Set[int], Set[int]]:
        """Unmatched canonical k-cells and (k+1)-cells."""
        return (
            set(range(K.count(self.k))) - self._down,
            set(range(K.count(self.k + 1))) - self._up,
        )

    def kinds(self) -> Counter:
        return Counter(pair.kind for pair in self.pairs)

    def __repr__(self) -> str:
        return f"Matching(k={self.k}, pairs={len(self.pairs)})"


# Selection order


class SelectionPolicy(Protocol):
    def rank(self, k: int, element: int) -> Any: ...


class AscendingPolicy:
    """Picks candidates by ascending id."""

    def rank(self, k: int, element: int) -> Any:
        return element


class SeededPolicy:
    """
    Picks candidates in a random order fixed by the seed.

    Each dimension gets its own permutation, drawn lazily.
    """

    def __init__(self, seed: int, counts: Sequence[int]):
        self.seed = seed
        self.counts = list(counts)
        self._ranks: Dict[int, np.ndarray] = {}

    def rank(self, k: int, element: int) -> Any:
        ranks = self._ranks.get(k)
        if ranks is None:
            rng = np.random.default_rng([self.seed, k])
            ranks = rng.permutation(self.counts[k])
            self._ranks[k] = ranks
        return int(ranks[element])


def make_policy(seed: Optional[int], K: CellComplex) -> SelectionPolicy:
    """Seed None or 0 selects ascending ids, anything else a seeded order."""
    if not seed:
        return AscendingPolicy()
    return SeededPolicy(seed, [K.count(k) for k in range(K.dimension + 1)])


# Greedy free/flat matching


def greedy_matching(
    ledger: "BasisLedger",
    k: int,
    policy: Optional[SelectionPolicy] = None,
    allow_flat: bool = True,
    exhaust: bool = False,
) -> Matching:
    """
    Build an acyclic matching of k-chains by collapsing on the ledger.

    Free elements (degree 1) are collapsed until none is left, then flat
    elements (degree 2) until none is left. A flat element is paired with
    the partner whose boundary has fewer nonzeros, ties by smaller id.
    Free elements created during the flat phase are left for the next call
    unless `exhaust` is set, in which case both phases repeat until neither
    makes progress.

    Args:
        ledger: basis to collapse on; it is mutated.
        k: dimension of the first component of every pair.
        policy: selection order among candidates, ascending by default.
        allow_flat: run the flat phase.
        exhaust: repeat the phases until no free or flat element is left.

    Returns:
        The matching in collapse order, which witnesses acyclicity.
    """
    policy = policy or AscendingPolicy()
    matching = Matching(k)
    free: List[Tuple[Any, int]] = []
    flat: List[Tuple[Any, int]] = []

    def push(cell: int) -> None:
        degree = ledger.degree(k, cell)
        if degree == 1:
            heapq.heappush(free, (policy.rank(k, cell), cell))
        elif degree == 2:
            heapq.heappush(flat, (policy.rank(k, cell), cell))

    for cell in ledger.live(k):
        push(cell)

    while True:
        progress = 0
        while free:
            _, sigma = heapq.heappop(free)
            if not ledger.is_live(k, sigma) or ledger.degree(k, sigma) != 1:
                continue
            (tau,) = ledger.coboundary(k, sigma)
            pair, touched = ledger.collapse(k, sigma, tau, PairKind.FREE)
            matching.append(pair)
            progress += 1
            for cell in touched:
                push(cell)

        if allow_flat:
            while flat:
                _, sigma = heapq.heappop(flat)
                if not ledger.is_live(k, sigma) or ledger.degree(k, sigma) != 2:
                    continue
                tau = min(
                    ledger.coboundary(k, sigma),
                    key=lambda t: (len(ledger.boundary(k + 1, t)), t),
                )
                pair, touched = ledger.collapse(k, sigma, tau, PairKind.FLAT)
                matching.append(pair)
                progress += 1
                for cell in touched:
                    push(cell)

        if not exhaust or not progress or not free:
            break

    counts = matching.kinds()
    logger.info(
        f"Greedy matching k={k} at level {ledger.level}: {len(matching)} pairs "
        f"({counts[PairKind.FREE]} free, {counts[PairKind.FLAT]} flat)"
    )
    return matching


# Spanning trees


@dataclass
class SpanningTree:
    """
    Rooted spanning tree. `order` lists the nodes in BFS order from the
    root; `parent_edge` holds the id of the edge (or dual face) joining a
    node to its parent.
    """

    root: int
    parent: Dict[int, Optional[int]]
    parent_edge: Dict[int, Optional[int]]
    order: List[int]

    @property
    def edge_ids(self) -> Set[int]:
        return {e for e in self.parent_edge.values() if e is not None}

    def __len__(self) -> int:
        return len(self.order)


def _rooted(graph: nx.Graph, root: int) -> SpanningTree:
    parent: Dict[int, Optional[int]] = {root: None}
    parent_edge: Dict[int, Optional[int]] = {root: None}
    order = [root]
    for u, v in nx.bfs_edges(graph, root):
        parent[v] = u
        parent_edge[v] = graph[u][v]["id"]
        order.append(v)
    return SpanningTree(root, parent, parent_edge, order)


def _connected_graph(K: CellComplex) -> nx.Graph:
    graph = K.vertex_graph()
    if K.n_vertices == 0 or not nx.is_connected(graph):
        raise DisconnectedGraphError(
            f"Vertex-edge graph of {K!r} is not connected "
            f"({nx.number_connected_components(graph)} components)"
        )
    return graph


def bfs_tree(K: CellComplex, root: int = 0) -> SpanningTree:
    graph = _connected_graph(K)
    if root not in graph:
        raise ValueError(f"root must be a vertex id in 0..{K.n_vertices - 1}, got {root}")
    return _rooted(graph, root)


def random_spanning_tree(K: CellComplex, seed: int, root: int = 0) -> SpanningTree:
    """Minimum spanning tree under seeded random edge weights."""
    graph = _connected_graph(K)
    rng = np.random.default_rng(seed)
    for (u, v), w in zip(graph.edges(), rng.random(graph.number_of_edges())):
        graph[u][v]["weight"] = float(w)
    return _rooted(nx.minimum_spanning_tree(graph, weight="weight"), root)


def tree_containing(
    K: CellComplex, edge_ids: Iterable[int], seed: int = 0, root: int = 0
) -> SpanningTree:
    """
    Random spanning tree forced to contain the given edges.

    Raises:
        NotASpanningTreeError: the forced edges contain a cycle.
    """
    forced = set(edge_ids)
    graph = _connected_graph(K)
    rng = np.random.default_rng(seed)
    for (u, v), w in zip(graph.edges(), rng.random(graph.number_of_edges())):
        graph[u][v]["weight"] = 0.0 if graph[u][v]["id"] in forced else 1.0 + float(w)
    tree = _rooted(nx.minimum_spanning_tree(graph, weight="weight"), root)
    missing = forced - tree.edge_ids
    if missing:
        raise NotASpanningTreeError(
            f"Forced edges {sorted(missing)} cannot all lie on one spanning tree"
        )
    return tree


def tree_from_edges(K: CellComplex, edge_ids: Iterable[int], root: int = 0) -> SpanningTree:
    """
    Raises:
        NotASpanningTreeError: the edges do not form a spanning tree.
    """
    edge_ids = set(edge_ids)
    cells = K.cells(1)
    for e in edge_ids:
        if e < 0 or e >= len(cells):
            raise NotASpanningTreeError(f"Edge id {e} is not in the complex")
    graph = nx.Graph()
    graph.add_nodes_from(range(K.n_vertices))
    for e in sorted(edge_ids):
        graph.add_edge(*cells[e], id=e)
    if len(edge_ids) != K.n_vertices - 1 or not nx.is_connected(graph):
        raise NotASpanningTreeError(
            f"{len(edge_ids)} edges do not span the {K.n_vertices} vertices as a tree"
        )
    return _rooted(graph, root)


# Spanning-tree matchings


def spanning_tree_matching_0(K: CellComplex, root: int = 0) -> Matching:
    """
    Complete acyclic matching of vertices with edges from a BFS tree.

    Leaves are peeled deepest first; each leaf is paired with the edge to
    its parent. The peeling order is the stored order.
    """
    tree = bfs_tree(K, root)
    matching = Matching(0)
    for v in reversed(tree.order[1:]):
        e = tree.parent_edge[v]
        matching.append(Pair(v, e, PairKind.TREE, 0, dict(K.boundary(1, e))))
    logger.debug(f"Spanning tree matching k=0: {len(matching)} pairs")
    return matching


def dual_graph(K: CellComplex) -> nx.MultiGraph:
    """
    Dual multigraph on volumes plus V_INF.

    An interior face joins its two volumes, a boundary face joins its
    volume to V_INF; the edge key is the face id.

    Raises:
        NonManifoldFaceError: a face bounds three or more volumes.
    """
    graph = nx.MultiGraph()
    graph.add_node(V_INF)
    graph.add_nodes_from(range(K.n_volumes))
    for f in range(K.n_faces):
        volumes = [c for c, _ in K.coboundary(2, f)]
        if len(volumes) > 2:
            raise NonManifoldFaceError(f"Face {f} bounds {len(volumes)} volumes")
        if len(volumes) == 2:
            graph.add_edge(volumes[0], volumes[1], key=f)
        elif len(volumes) == 1:
            graph.add_edge(V_INF, volumes[0], key=f)
    return graph


def spanning_tree_matching_2(K: CellComplex) -> Matching:
    """
    Complete acyclic matching of faces with volumes from the dual graph.

    BFS from V_INF; each volume is paired with the lowest-id face joining
    it to its BFS parent. Pairs are stored in BFS order: the face of a
    pair only bounds its own volume and the parent, which comes earlier.
    """
    graph = dual_graph(K)
    if not nx.is_connected(graph):
        raise DisconnectedGraphError("Dual graph is not connected")
    matching = Matching(2)
    for u, v in nx.bfs_edges(graph, V_INF):
        f = min(graph[u][v])
        matching.append(Pair(f, v, PairKind.TREE, 0, dict(K.boundary(3, v))))
    logger.debug(f"Spanning tree matching k=2: {len(matching)} pairs")
    return matching


# Verification


def verify_acyclic(matching: Matching) -> bool:
    """
    True when the pair digraph, with an arc i -> j whenever sigma_i lies in
    the boundary snapshot of tau_j, has a topological order. The stored
    order of the matching is not used.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(matching)))
    owner = {pair.sigma: i for i, pair in enumerate(matching.pairs)}
    for j, pair in enumerate(matching.pairs):
        for s, value in pair.boundary.items():
            i = owner.get(s)
            if i is not None and i != j and value != 0:
                graph.add_edge(i, j)
    return nx.is_directed_acyclic_graph(graph)


def expected_rank(K: CellComplex, k: int) -> int:
    """Rank of the k-th incidence matrix; closed form when Euler is 1."""
    if K.euler_characteristic == 1 and K.n_vertices > 0:
        if k == 0:
            return K.n_vertices - 1
        if k == 1:
            return K.n_faces - K.n_volumes
        if k == 2:
            return K.n_volumes
    return rank_of(incidence_matrix(K, k))


def is_complete(matching: Matching, K: CellComplex) -> bool:
    return len(matching) == expected_rank(K, matching.k)


# Spanning tree technique


@dataclass
class SttResult:
    terminated: bool
    h: Optional[Cochain]
    matching: Matching
    unresolved: List[int]


def stt_run(
    K: CellComplex,
    tree: SpanningTree,
    i: Cochain,
    policy: Optional[SelectionPolicy] = None,
    field: Optional[ScalarField] = None,
) -> SttResult:
    """
    Spanning tree technique for C h = i.

    Tree edges get h = 0. A face whose boundary has exactly one edge with
    unknown h determines that edge; a face with none left is checked
    against its right-hand side. The run stalls when no face with at most
    one unknown edge remains but some faces are still open.

    Args:
        K: the complex.
        tree: spanning tree of the vertex-edge graph.
        i: right-hand side on faces.
        policy: order among ready faces, ascending by default.
        field: scalar field, rational by default.

    Returns:
        SttResult. On termination `h` solves the system and `matching`
        holds the used (edge, face) pairs, last used first, which
        witnesses acyclicity.

    Raises:
        DimensionMismatchError: i is not a face cochain of K.
        InconsistentInputError: a fully determined face disagrees with i.
    """
    policy = policy or AscendingPolicy()
    field = field or RATIONAL
    if i.k != 2 or len(i) != K.n_faces:
        raise DimensionMismatchError(
            f"Expected a 2-cochain on {K.n_faces} faces, got a {i.k}-cochain on {len(i)}"
        )

    known: Dict[int, Any] = {e: 0 for e in tree.edge_ids}
    unknown = [
        sum(1 for e, _ in K.boundary(2, f) if e not in known) for f in range(K.n_faces)
    ]
    done = [False] * K.n_faces
    ready = [(policy.rank(2, f), f) for f in range(K.n_faces) if unknown[f] <= 1]
    heapq.heapify(ready)
    used: List[Pair] = []

    while ready:
        _, f = heapq.heappop(ready)
        if done[f]:
            continue
        done[f] = True
        boundary = K.boundary(2, f)
        if unknown[f] == 0:
            total = sum(sign * known[e] for e, sign in boundary)
            if not field.is_zero(total - field.coerce(i[f])):
                logger.error(f"Face {f} is fully determined but C h = {total} != {i[f]}")
                raise InconsistentInputError(
                    f"Face {f} is inconsistent with the right-hand side", rows=[f]
                )
            continue

        (e, sign) = next((e, s) for e, s in boundary if e not in known)
        acc = field.coerce(i[f]) - sum(s * known[x] for x, s in boundary if x != e)
        known[e] = field.div(acc, sign)
        used.append(Pair(e, f, PairKind.TREE, 0, dict(boundary)))
        for g, _ in K.coboundary(1, e):
            if done[g]:
                continue
            unknown[g] -= 1
            if unknown[g] <= 1:
                heapq.heappush(ready, (policy.rank(2, g), g))

    unresolved = [f for f in range(K.n_faces) if not done[f]]
    matching = Matching(1, reversed(used))
    if unresolved:
        logger.warning(
            f"STT stalled with {len(unresolved)} unresolved faces "
            f"after {len(used)} propagations"
        )
        return SttResult(False, None, matching, unresolved)

    h = Cochain(1, range(K.n_edges), [known.get(e, 0) for e in range(K.n_edges)])
    logger.info(f"STT terminated after {len(used)} propagations")
    return SttResult(True, h, matching, [])


def tree_from_matching(M1: Matching, K: CellComplex, root: int = 0) -> SpanningTree:
    """
    Spanning tree formed by the edges a complete matching of 1-chains
    leaves critical.

    Raises:
        NotASpanningTreeError: the critical edges are not a spanning tree.
    """
    if M1.k != 1:
        raise ValueError(f"Expected a matching of 1-chains, got k={M1.k}")
    critical_edges, _ = M1.critical(K)
    return tree_from_edges(K, critical_edges, root)
