"""
Recursive vector potential solver.

A solve has two phases. `factorize` builds the acyclic matchings level by
level on a BasisLedger, which is the elimination itself; `solve` replays the
recorded basis changes on a right-hand side, solves the last residual system
and back-substitutes level by level.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Hashable, List, Mapping, Optional, Tuple

from .algebra import (
    Cochain,
    ScalarField,
    SignedSparseMatrix,
    exact_eliminate_solve,
    make_field,
)
from .complex import CellComplex, incidence_matrix
from .errors import (
    BoundarySquaredError,
    DimensionMismatchError,
    InconsistentError,
    MissingValueError,
    NotASpanningTreeError,
    NotCurlFreeError,
    NotSolenoidalError,
    ResidualNotZeroError,
    ZeroBlockViolationError,
)
from .ledger import BasisLedger
from .matching import (
    Matching,
    PairKind,
    Pair,
    SpanningTree,
    greedy_matching,
    is_complete,
    make_policy,
    spanning_tree_matching_0,
    spanning_tree_matching_2,
    tree_from_matching,
)

logger = logging.getLogger(__name__)

TERMINAL_ACTIONS = ["complete-matching", "fallback-solver", "empty"]


def collapse_pair(ledger: BasisLedger, sigma: int, tau: int, k: int = 1) -> Pair:
    """Collapse (sigma, tau) and classify it as free or flat by degree."""
    kind = PairKind.FREE if ledger.degree(k, sigma) == 1 else PairKind.FLAT
    pair, _ = ledger.collapse(k, sigma, tau, kind)
    return pair


def back_substitution(
    matching: Matching,
    rhs: Mapping[Hashable, Any],
    known: Mapping[Hashable, Any],
    field: Optional[ScalarField] = None,
) -> Dict[Hashable, Any]:
    """
    Solve the triangular block of a matching, last pair first.

    For each pair (sigma, tau), the value of sigma is
    (rhs[tau] - sum of the other snapshot entries times their values)
    divided by the coefficient of sigma. Values of later pairs are reused,
    all other values must come from `known`.

    Returns:
        Values of the first components of the matching.

    Raises:
        MissingValueError: a right-hand side or an incident value is missing.
    """
    field = field or make_field("rational")
    values: Dict[Hashable, Any] = dict(known.items())
    for pair in reversed(matching.pairs):
        if pair.tau not in rhs:
            raise MissingValueError(f"No right-hand side for {pair.tau}")
        acc = rhs[pair.tau]
        for s, c in pair.boundary.items():
            if s == pair.sigma:
                continue
            if s not in values:
                raise MissingValueError(
                    f"Value of {s} is needed to solve for {pair.sigma} but was not supplied"
                )
            if values[s] != 0:
                acc = acc - c * values[s]
        values[pair.sigma] = field.div(acc, pair.boundary[pair.sigma])
    return {pair.sigma: values[pair.sigma] for pair in matching.pairs}


def check_triangular(matching: Matching) -> List[Tuple[int, int]]:
    """
    Positions (row, column) that break the upper triangular structure of the
    snapshot block U x D in pair order, plus (i, i) for a zero diagonal.
    An empty list means the block is upper triangular and invertible.
    """
    position = {pair.sigma: i for i, pair in enumerate(matching.pairs)}
    violations = []
    for i, pair in enumerate(matching.pairs):
        if pair.boundary.get(pair.sigma, 0) == 0:
            violations.append((i, i))
        for s, value in pair.boundary.items():
            j = position.get(s)
            if j is not None and j < i and value != 0:
                violations.append((i, j))
    return violations


@dataclass
class ResidualSystem:
    """Blocks of the transformed curl matrix after a matching of 1-chains."""

    matrix: SignedSparseMatrix
    rhs: Optional[Cochain]
    coupling: SignedSparseMatrix


def split_residual(
    ledger: BasisLedger,
    matching: Matching,
    rhs: Optional[Mapping[int, Any]] = None,
) -> ResidualSystem:
    """
    Extract the residual system of the live faces and edges.

    Args:
        ledger: basis after the collapses of `matching`.
        matching: the matching of 1-chains of the current level.
        rhs: right-hand side in the current face basis.

    Returns:
        ResidualSystem with C'[C2 x C1], the rhs on C2 and C'[U2 x C1].

    Raises:
        ZeroBlockViolationError: a live face is still incident to a matched
            edge.
    """
    faces = ledger.live(2)
    edges = ledger.live(1)
    edge_set = set(edges)
    entries = []
    for f in faces:
        for e, v in ledger.boundary(2, f).items():
            if e not in edge_set:
                logger.error(f"Live face {f} still has coefficient {v} on edge {e}")
                raise ZeroBlockViolationError(
                    f"Block C2 x D1 is not zero: face {f}, edge {e} "
                    f"({ledger.status(1, e).value})"
                )
            entries.append((f, e, v))
    matrix = SignedSparseMatrix(faces, edges, entries, row_dim=2, col_dim=1)

    ups = [pair.tau for pair in matching]
    coupling = SignedSparseMatrix(
        ups,
        edges,
        (
            (pair.tau, e, v)
            for pair in matching
            for e, v in pair.boundary.items()
            if e in edge_set
        ),
        row_dim=2,
        col_dim=1,
    )
    residual_rhs = None
    if rhs is not None:
        residual_rhs = Cochain(2, faces, [rhs[f] for f in faces])
    return ResidualSystem(matrix, residual_rhs, coupling)


@dataclass
class LevelRecord:
    level: int
    m1: int
    m2: int
    free: int
    flat: int
    critical_edges: int
    critical_faces: int
    fill: int
    seconds: float


@dataclass
class SolveTrace:
    """Per-level statistics of a factorization and the way it ended."""

    levels: List[LevelRecord] = field(default_factory=list)
    terminal_action: str = "empty"
    m2_complete: bool = True
    factorize_seconds: float = 0.0
    solve_seconds: float = 0.0

    @property
    def depth(self) -> int:
        return max(len(self.levels) - 1, 0)

    @property
    def first_residual_faces(self) -> Optional[int]:
        """Critical faces left by level 0, reported when recursion happened."""
        if len(self.levels) < 2:
            return None
        return self.levels[0].critical_faces

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "terminal_action": self.terminal_action,
            "first_residual_faces": self.first_residual_faces,
            "m2_complete": self.m2_complete,
            "factorize_seconds": self.factorize_seconds,
            "solve_seconds": self.solve_seconds,
            "levels": [asdict(level) for level in self.levels],
        }


class Factorization:
    """
    Matchings and basis changes for one complex, reusable across
    right-hand sides.
    """

    def __init__(
        self,
        complex: CellComplex,
        ledger: BasisLedger,
        m2: Matching,
        levels: List[Matching],
        trace: SolveTrace,
    ):
        self.complex = complex
        self.ledger = ledger
        self.m2 = m2
        self.levels = levels
        self.trace = trace
        self._div = incidence_matrix(complex, 2) if complex.dimension >= 3 else None

    @property
    def field(self) -> ScalarField:
        return self.ledger.field

    def transport(self, i: Cochain) -> Dict[int, Any]:
        """Express a canonical face cochain in the current face basis."""
        coerce = self.field.coerce
        rhs = {f: coerce(v) for f, v in i.items()}
        for t in self.ledger.transforms:
            if t.k == 2:
                source = rhs[t.source]
                if source != 0:
                    rhs[t.target] = rhs[t.target] - t.q * source
        return rhs

    def residual(self, rhs: Optional[Mapping[int, Any]] = None) -> ResidualSystem:
        matching = self.levels[-1] if self.levels else Matching(1)
        return split_residual(self.ledger, matching, rhs)

    def solve(self, i: Cochain) -> Cochain:
        """
        Raises:
            DimensionMismatchError: i is not a face cochain of the complex.
            NotSolenoidalError: D i is not zero.
            InconsistentError: the residual system has no solution.
        """
        K = self.complex
        started = time.perf_counter()
        if i.k != 2 or len(i) != K.n_faces or set(i.ids) != set(range(K.n_faces)):
            raise DimensionMismatchError(
                f"Expected a 2-cochain on the {K.n_faces} faces, "
                f"got a {i.k}-cochain on {len(i)} ids"
            )
        if self._div is not None:
            divergence = self._div.apply(i).support()
            if divergence:
                logger.error(f"Divergence is nonzero on {len(divergence)} volumes")
                raise NotSolenoidalError(
                    f"D i != 0 on volumes {divergence[:10]}", rows=divergence
                )

        rhs = self.transport(i)
        system = self.residual(rhs)
        values: Dict[int, Any] = {e: 0 for e in self.ledger.live(1)}
        if self.trace.terminal_action == "fallback-solver":
            result = exact_eliminate_solve(system.matrix, system.rhs, self.field)
            values.update(result.solution.to_dict())
            logger.info(
                f"Residual system {system.matrix!r} solved, rank {result.rank}"
            )
        else:
            leftover = [f for f in system.matrix.row_ids if not self.field.is_zero(rhs[f])]
            if leftover:
                raise InconsistentError(
                    f"Faces {leftover[:10]} have empty boundary but nonzero rhs",
                    rows=leftover,
                )

        for matching in reversed(self.levels):
            values.update(back_substitution(matching, rhs, values, self.field))

        h = Cochain(1, range(K.n_edges), [values.get(e, 0) for e in range(K.n_edges)])
        self.trace.solve_seconds = time.perf_counter() - started
        if self.ledger.debug:
            check = incidence_matrix(K, 1).apply(h) - i
            if any(not self.field.is_zero(v) for v in check.values):
                raise ResidualNotZeroError(
                    f"C h - i is nonzero on edges {check.support()[:10]}"
                )
        return h


class VectorPotentialSolver:
    """
    Solver for C h = i by recursive acyclic matchings.

    Args:
        seed: selection order of the greedy matchings; None or 0 means
            ascending ids.
        field: "rational" (exact) or "float".
        debug: check dd = 0 after every collapse and the final residual.
        max_depth: deepest recursion level before falling back to
            elimination.
    """

    def __init__(
        self,
        seed: Optional[int] = None,
        field: str = "rational",
        debug: bool = False,
        max_depth: int = 32,
    ):
        if seed is not None and seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        if max_depth < 0:
            raise ValueError(f"max_depth must be non-negative, got {max_depth}")
        self.seed = seed
        self.field = make_field(field)
        self.debug = debug
        self.max_depth = max_depth

    def factorize(self, K: CellComplex) -> Factorization:
        started = time.perf_counter()
        ledger = BasisLedger(K, self.field, self.debug)
        policy = make_policy(self.seed, K)
        trace = SolveTrace()

        t0 = time.perf_counter()
        m2 = Matching(2)
        if K.dimension >= 3:
            m2 = greedy_matching(ledger, 2, policy, exhaust=True)
            left = ledger.live(3)
            if left:
                trace.m2_complete = False
                logger.warning(
                    f"Greedy matching left {len(left)} volumes critical, "
                    "switching to the dual spanning tree matching"
                )
                ledger, m2 = self._tree_m2(K)
        m2_seconds = time.perf_counter() - t0

        levels: List[Matching] = []
        if not ledger.live(2):
            trace.terminal_action = "empty"
        while ledger.live(2):
            t0 = time.perf_counter()
            fill_before = ledger.fill
            m1 = greedy_matching(ledger, 1, policy)
            levels.append(m1)
            kinds = m1.kinds()
            faces = ledger.live(2)
            record = LevelRecord(
                level=ledger.level,
                m1=len(m1),
                m2=len(m2) if ledger.level == 0 else 0,
                free=kinds[PairKind.FREE],
                flat=kinds[PairKind.FLAT],
                critical_edges=len(ledger.live(1)),
                critical_faces=len(faces),
                fill=ledger.fill - fill_before,
                seconds=time.perf_counter() - t0 + (m2_seconds if ledger.level == 0 else 0),
            )
            trace.levels.append(record)
            logger.info(f"Level {record.level}: {asdict(record)}")

            # zero-block check runs on every level
            split_residual(ledger, m1)

            if all(not ledger.boundary(2, f) for f in faces):
                trace.terminal_action = "complete-matching"
                break
            if not len(m1):
                trace.terminal_action = "fallback-solver"
                break
            if ledger.level >= self.max_depth:
                logger.warning(f"Reached max_depth={self.max_depth}, falling back")
                trace.terminal_action = "fallback-solver"
                break
            ledger.advance_level()

        if self.debug and not ledger.check_boundary_squared():
            raise BoundarySquaredError("Boundary of boundary is not zero after factorization")

        trace.factorize_seconds = time.perf_counter() - started
        logger.info(
            f"Factorized {K!r}: depth {trace.depth}, {trace.terminal_action}"
        )
        return Factorization(K, ledger, m2, levels, trace)

    def _tree_m2(self, K: CellComplex) -> Tuple[BasisLedger, Matching]:
        """Fresh ledger with every volume matched along the dual spanning tree."""
        ledger = BasisLedger(K, self.field, self.debug)
        m2 = Matching(2)
        # BFS order: each face has a single live volume when it is collapsed
        for pair in spanning_tree_matching_2(K):
            collapsed, _ = ledger.collapse(2, pair.sigma, pair.tau, PairKind.TREE)
            m2.append(collapsed)
        return ledger, m2

    def solve(self, K: CellComplex, i: Cochain) -> Tuple[Cochain, SolveTrace]:
        factorization = self.factorize(K)
        h = factorization.solve(i)
        return h, factorization.trace


def solve_vector_potential(
    K: CellComplex, i: Cochain, **opts: Any
) -> Tuple[Cochain, SolveTrace]:
    """
    Find h with C h = i.

    Args:
        K: the complex.
        i: face cochain with D i = 0.
        **opts: forwarded to VectorPotentialSolver.

    Returns:
        The edge cochain h and the trace of the recursion.
    """
    return VectorPotentialSolver(**opts).solve(K, i)


def solve_with_eliminator(K: CellComplex, i: Cochain, field: str = "rational") -> Cochain:
    """Solve C h = i by eliminating the full canonical system."""
    if K.dimension >= 3:
        divergence = incidence_matrix(K, 2).apply(i).support()
        if divergence:
            raise NotSolenoidalError(
                f"D i != 0 on volumes {divergence[:10]}", rows=divergence
            )
    return exact_eliminate_solve(incidence_matrix(K, 1), i, make_field(field)).solution


def greedy_spanning_tree(
    K: CellComplex, seed: Optional[int] = None, root: int = 0
) -> SpanningTree:
    """
    Spanning tree of the edges left critical by a free-only greedy M1.

    Volumes are matched first; the edge phase then runs free collapses only,
    so M1 stays on the canonical edge basis.

    Raises:
        NotASpanningTreeError: M1 is not complete, or its critical edges do
            not form a spanning tree.
    """
    ledger = BasisLedger(K)
    policy = make_policy(seed, K)
    if K.dimension >= 3:
        greedy_matching(ledger, 2, policy, exhaust=True)
    m1 = greedy_matching(ledger, 1, policy, allow_flat=False)
    if not is_complete(m1, K):
        raise NotASpanningTreeError(
            f"Free collapses matched {len(m1)} edges, short of a complete matching"
        )
    tree = tree_from_matching(m1, K, root)
    logger.info(f"Tree from greedy M1: {len(m1)} pairs, {len(tree.edge_ids)} tree edges")
    return tree


def solve_gradient_potential(K: CellComplex, w: Cochain, root: int = 0) -> Cochain:
    """
    Find v with G v = w; the root vertex gets 0.

    Raises:
        NotCurlFreeError: C w is not zero.
    """
    if w.k != 1 or len(w) != K.n_edges:
        raise DimensionMismatchError(
            f"Expected a 1-cochain on {K.n_edges} edges, got a {w.k}-cochain on {len(w)}"
        )
    if K.n_faces:
        curl = incidence_matrix(K, 1).apply(w).support()
        if curl:
            raise NotCurlFreeError(f"C w != 0 on faces {curl[:10]}", rows=curl)
    matching = spanning_tree_matching_0(K, root)
    values = back_substitution(matching, w, {root: 0})
    values[root] = 0
    return Cochain(0, range(K.n_vertices), [values.get(v, 0) for v in range(K.n_vertices)])


def solve_divergence_potential(K: CellComplex, q: Cochain) -> Cochain:
    """Find v with D v = q; faces left critical get 0."""
    if q.k != 3 or len(q) != K.n_volumes:
        raise DimensionMismatchError(
            f"Expected a 3-cochain on {K.n_volumes} volumes, got a {q.k}-cochain on {len(q)}"
        )
    matching = spanning_tree_matching_2(K)
    matched = matching.down
    known = {f: 0 for f in range(K.n_faces) if f not in matched}
    values = back_substitution(matching, q, known)
    return Cochain(2, range(K.n_faces), [values.get(f, 0) for f in range(K.n_faces)])
