import logging
from dataclasses import dataclass
from itertools import permutations
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .algebra import Cochain
from .complex import CellComplex, build_from_tetrahedra, incidence_matrix, validate
from .errors import InvalidPathError, TopologyBrokenError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int, int]

# Kuhn split: one tet per path 000 -> 111 along the axes in permuted order
_KUHN_ORDERS = list(permutations(range(3)))


def _lattice(m: int) -> np.ndarray:
    """All points of {0..m-1}^3 in lexicographic order, shape (m^3, 3)."""
    return np.array(np.meshgrid(*(np.arange(m),) * 3, indexing="ij")).reshape(3, -1).T


@dataclass(frozen=True)
class GridSpec:
    """Cube of n x n x n unit cells, each split into 6 Kuhn tets."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")

    @property
    def vertex_count(self) -> int:
        return (self.n + 1) ** 3

    def vertex_id(self, x, y, z):
        """Works on ints and numpy arrays alike."""
        m = self.n + 1
        return (x * m + y) * m + z

    def coordinates(self) -> np.ndarray:
        return _lattice(self.n + 1).astype(float)

    def cubes(self) -> np.ndarray:
        """Lower corners of all unit cells, lexicographic, shape (n^3, 3)."""
        return _lattice(self.n)

    def tets(self, cubes: Optional[np.ndarray] = None) -> np.ndarray:
        """Kuhn tets of the given cells (all cells by default), shape (6m, 4)."""
        corners = self.cubes() if cubes is None else np.asarray(cubes).reshape(-1, 3)
        blocks = []
        for order in _KUHN_ORDERS:
            walk = corners.copy()
            ids = [self.vertex_id(walk[:, 0], walk[:, 1], walk[:, 2])]
            for axis in order:
                walk[:, axis] += 1
                ids.append(self.vertex_id(walk[:, 0], walk[:, 1], walk[:, 2]))
            blocks.append(np.stack(ids, axis=1))
        # tets of one cube stay together
        return np.stack(blocks, axis=1).reshape(-1, 4)


def cube_grid(spec: Union[GridSpec, int]) -> CellComplex:
    """Kuhn-triangulated cube with (n+1)^3 vertices and 6 n^3 tets."""
    if not isinstance(spec, GridSpec):
        spec = GridSpec(spec)
    K = build_from_tetrahedra(
        spec.vertex_count, spec.tets().tolist(), spec.coordinates()
    )
    logger.info(f"Generated cube grid n={spec.n}: {K!r}")
    return K


@dataclass(frozen=True)
class KnotPath:
    """
    Chain of unit cells dug out of a cube grid.

    The first cell touches the top face, the last one stays above the
    bottom face, consecutive cells share a face, and cells three or more
    steps apart along the path do not touch at all, which still allows
    L-shaped turns.
    """

    cells: Tuple[Cell, ...]
    name: str = "custom"

    def __len__(self) -> int:
        return len(self.cells)

    def validate(self, n: int) -> None:
        """
        Raises:
            InvalidPathError: the path does not fit a grid of size n.
        """
        cells = self.cells
        if not cells:
            return
        if len(set(cells)) != len(cells):
            raise InvalidPathError(f"Path '{self.name}' visits a cell twice")
        for idx, (x, y, z) in enumerate(cells):
            if not (1 <= x <= n - 2 and 1 <= y <= n - 2):
                raise InvalidPathError(
                    f"Path '{self.name}' cell {idx} {(x, y, z)} is not interior in x, y "
                    f"for n={n} (valid range 1..{n - 2})"
                )
            if not 0 <= z <= n - 1:
                raise InvalidPathError(
                    f"Path '{self.name}' cell {idx} {(x, y, z)} is outside the grid"
                )
        if cells[0][2] != n - 1:
            raise InvalidPathError(
                f"Path '{self.name}' must start on the top layer z={n - 1}, "
                f"starts at {cells[0]}"
            )
        if cells[-1][2] < 1:
            raise InvalidPathError(
                f"Path '{self.name}' must stop above the bottom layer, ends at {cells[-1]}"
            )
        arr = np.array(cells)
        steps = np.abs(np.diff(arr, axis=0)).sum(axis=1)
        bad = np.nonzero(steps != 1)[0]
        if bad.size:
            raise InvalidPathError(
                f"Path '{self.name}' cells {bad[0]} and {bad[0] + 1} are not face-adjacent"
            )
        for i in range(len(cells)):
            far = arr[i + 3 :]
            if far.size == 0:
                break
            close = np.nonzero(np.abs(far - arr[i]).max(axis=1) < 2)[0]
            if close.size:
                raise InvalidPathError(
                    f"Path '{self.name}' cells {i} and {i + 3 + close[0]} touch"
                )

    def shifted(self, dx: int = 0, dy: int = 0, name: Optional[str] = None) -> "KnotPath":
        return KnotPath(
            tuple((x + dx, y + dy, z) for x, y, z in self.cells), name or self.name
        )


# Trefoil grid diagram: O markers at (i, i), X markers at (i, (i + 2) % 5)
# as (column, row). Columns run at z=5 above the rows at z=3, grid
# coordinates map to 2g + 1, and row 0 is cut at x=4 where one end rises to
# the top face at x=3 and the other descends to z=1 at x=5.
TREFOIL_SIZE = 5
TREFOIL_TRAVERSAL = ["c0", "r2", "c2", "r4", "c4", "r1", "c1", "r3", "c3", "r0"]
_LOW, _HIGH = 3, 5


def _segment(a: Cell, b: Cell) -> List[Cell]:
    """Cells from a to b along one axis, a excluded, b included."""
    axis = next(i for i in range(3) if a[i] != b[i])
    step = 1 if b[axis] > a[axis] else -1
    out = []
    cur = list(a)
    while cur[axis] != b[axis]:
        cur[axis] += step
        out.append(tuple(cur))
    return out


def _trefoil_corners() -> List[Cell]:
    """Turning points of the closed trefoil in lattice coordinates."""
    o_col = {i: i for i in range(TREFOIL_SIZE)}
    x_row = {i: (i + 2) % TREFOIL_SIZE for i in range(TREFOIL_SIZE)}

    def lat(g: int) -> int:
        return 2 * g + 1

    # walk: column c from its O row to its X row, then along that row to the
    # O of the next column
    corners: List[Cell] = []
    col = 0
    for _ in range(TREFOIL_SIZE):
        start_row, end_row = o_col[col], x_row[col]
        corners.append((lat(col), lat(start_row), _LOW))
        corners.append((lat(col), lat(start_row), _HIGH))
        corners.append((lat(col), lat(end_row), _HIGH))
        corners.append((lat(col), lat(end_row), _LOW))
        col = end_row  # the O in row r sits in column r
    return corners


def trefoil_path(n: int = 12) -> KnotPath:
    """Blind trefoil tunnel for a grid of size n (n >= 11)."""
    corners = _trefoil_corners()
    closed: List[Cell] = [corners[0]]
    for a, b in zip(corners, corners[1:] + corners[:1]):
        closed.extend(_segment(a, b))
    # closed loop starts and ends at O(0,0) = (1, 1, 3), the last stretch
    # runs along row 0 from x=7 back to x=1
    closed = closed[:-1]
    tail = closed.index((5, 1, _LOW))

    cells: List[Cell] = [(3, 1, z) for z in range(n - 1, _LOW - 1, -1)]
    cells.append((2, 1, _LOW))
    cells.extend(closed[: tail + 1])
    cells.extend((5, 1, z) for z in range(_LOW - 1, 0, -1))
    path = KnotPath(tuple(cells), "trefoil-1")
    path.validate(n)
    return path


def trefoil_paths(k: int, n: int) -> List[KnotPath]:
    """k trefoil tunnels side by side, 10 cells apart in x (n >= 10k + 1)."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    base = trefoil_path(n)
    return [base.shifted(dx=10 * j, name=f"trefoil-{k}[{j}]") for j in range(k)]


def straight_path(n: int, depth: Optional[int] = None) -> KnotPath:
    """Unknotted vertical tunnel from the top down to z=1 (or to `depth` cells)."""
    depth = n - 1 if depth is None else depth
    c = n // 2
    path = KnotPath(tuple((c, c, n - 1 - j) for j in range(depth)), "straight")
    path.validate(n)
    return path


KNOT_NAMES = ["none", "straight", "trefoil-1", "trefoil-k"]


def knot_paths(name: str, n: int) -> List[KnotPath]:
    """Resolve a knot name: none, straight, trefoil-1 or trefoil-<k>."""
    if name == "none":
        return []
    if name == "straight":
        return [straight_path(n)]
    if name.startswith("trefoil-"):
        suffix = name[len("trefoil-") :]
        if suffix.isdigit() and int(suffix) >= 1:
            return trefoil_paths(int(suffix), n)
    raise ValueError(f"Unknown knot: '{name}'. Valid options: {KNOT_NAMES}")


@dataclass
class FurchBall:
    complex: CellComplex
    spec: GridSpec
    paths: List[KnotPath]
    vertex_map: Dict[int, int]

    def vertex_at(self, x: int, y: int, z: int) -> int:
        return self.vertex_map[self.spec.vertex_id(x, y, z)]


def _check_disjoint(paths: Sequence[KnotPath]) -> None:
    for a in range(len(paths)):
        for b in range(a + 1, len(paths)):
            pa, pb = np.array(paths[a].cells), np.array(paths[b].cells)
            if pa.size and pb.size:
                dist = np.abs(pa[:, None, :] - pb[None, :, :]).max(axis=2)
                if (dist < 2).any():
                    raise InvalidPathError(
                        f"Paths '{paths[a].name}' and '{paths[b].name}' touch"
                    )


def build_furch_ball(
    n: int, paths: Union[KnotPath, Iterable[KnotPath], None] = None
) -> FurchBall:
    spec = GridSpec(n)
    if paths is None:
        paths = []
    elif isinstance(paths, KnotPath):
        paths = [paths]
    paths = list(paths)
    for path in paths:
        path.validate(n)
    _check_disjoint(paths)

    removed: Set[Cell] = {cell for path in paths for cell in path.cells}
    cubes = spec.cubes()
    keep = np.array([tuple(c) not in removed for c in cubes.tolist()], dtype=bool)
    tets = spec.tets(cubes[keep])

    used = np.unique(tets)
    vertex_map = {int(old): new for new, old in enumerate(used)}
    remap = np.full(spec.vertex_count, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    coords = spec.coordinates()[used]

    K = build_from_tetrahedra(int(used.size), remap[tets].tolist(), coords)
    report = validate(K)
    if not report.ok:
        raise TopologyBrokenError(f"Knotted ball failed validation: {report.to_dict()}")
    logger.info(
        f"Generated knotted ball n={n} with {len(paths)} tunnels, "
        f"{len(removed)} cells removed: {K!r}"
    )
    return FurchBall(K, spec, paths, vertex_map)


def furch_ball(
    n: int, paths: Union[KnotPath, Iterable[KnotPath], None] = None
) -> CellComplex:
    """
    Cube grid with the cells of each path removed.

    Raises:
        InvalidPathError: a path violates its adjacency or interiority rules.
        TopologyBrokenError: the result is not a valid ball.
    """
    return build_furch_ball(n, paths).complex


def knotted_arc_edges(ball: FurchBall, path: KnotPath) -> List[int]:
    """
    Mesh edges along the lower corners of the path cells, extended up to
    the top face and straight down to the bottom face.
    """
    if not path.cells:
        return []
    n = ball.spec.n
    x0, y0, _ = path.cells[0]
    points: List[Cell] = [(x0, y0, n)]
    points.extend(path.cells)
    xl, yl, zl = path.cells[-1]
    points.extend((xl, yl, z) for z in range(zl - 1, -1, -1))
    K = ball.complex
    edges = []
    for a, b in zip(points, points[1:]):
        try:
            edges.append(K.cell_id((ball.vertex_at(*a), ball.vertex_at(*b))))
        except KeyError:
            raise InvalidPathError(f"No mesh edge between {a} and {b}") from None
    return edges


def random_solenoidal_field(K: CellComplex, seed: int, magnitude: int) -> Cochain:
    """C h0 for integer h0 drawn uniformly from [-magnitude, magnitude] per edge."""
    if magnitude < 0:
        raise ValueError(f"magnitude must be non-negative, got {magnitude}")
    rng = np.random.default_rng(seed)
    h0 = rng.integers(-magnitude, magnitude + 1, size=K.n_edges)
    edges = Cochain(1, range(K.n_edges), [int(v) for v in h0])
    return incidence_matrix(K, 1).apply(edges)
