import logging
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Set, Tuple

from .algebra import RATIONAL, Scalar, ScalarField
from .complex import CellComplex
from .errors import BoundarySquaredError, NotIncidentError, NotLiveError
from .matching import Pair, PairKind

logger = logging.getLogger(__name__)


class Status(Enum):
    CRITICAL = "critical"
    DOWN = "down"
    UP = "up"


@dataclass(frozen=True)
class Transform:
    """Basis change `target <- target - q * source` in dimension k."""

    level: int
    k: int
    target: int
    q: Scalar
    source: int


class BasisLedger:
    """
    Mutable basis of the chain complex of a CellComplex.

    Starts as the canonical basis. Each collapse rewrites the boundary
    expressions of the live (critical) elements it touches and records the
    elementary transform so canonical expansions and right-hand sides can be
    replayed later. Coboundary sets only list live cofacets, so the degree
    of an element is the size of its coboundary set.

    Args:
        complex: the complex whose canonical basis seeds the ledger.
        field: scalar field for the collapse coefficients.
        debug: check the boundary-of-boundary identity after every rewrite.
    """

    def __init__(
        self,
        complex: CellComplex,
        field: Optional[ScalarField] = None,
        debug: bool = False,
    ):
        self.complex = complex
        self.field = field or RATIONAL
        self.debug = debug
        self.top = complex.dimension
        self.level = 0

        self._boundary: Dict[int, Dict[int, Dict[int, Scalar]]] = {
            k: {cell: dict(complex.boundary(k, cell)) for cell in range(complex.count(k))}
            for k in range(1, self.top + 1)
        }
        self._cofaces: Dict[int, Dict[int, Set[int]]] = {
            k: {
                cell: {c for c, _ in complex.coboundary(k, cell)}
                for cell in range(complex.count(k))
            }
            for k in range(self.top)
        }
        self._status: Dict[int, Dict[int, Status]] = {
            k: {cell: Status.CRITICAL for cell in range(complex.count(k))}
            for k in range(self.top + 1)
        }
        self._rewritten: Dict[int, Dict[int, int]] = {
            k: {} for k in range(self.top + 1)
        }

        self.pair_log: List[Pair] = []
        self.transforms: List[Transform] = []
        self._by_target: Dict[Tuple[int, int], List[int]] = {}
        self._expansions: Dict[Tuple[int, int], Dict[int, Scalar]] = {}
        self.fill = 0

    # Queries

    def status(self, k: int, cell: int) -> Status:
        return self._status[k][cell]

    def is_live(self, k: int, cell: int) -> bool:
        return self._status.get(k, {}).get(cell) is Status.CRITICAL

    def live(self, k: int) -> List[int]:
        return [c for c, s in self._status.get(k, {}).items() if s is Status.CRITICAL]

    def matched(self, k: int) -> List[int]:
        return [
            c for c, s in self._status.get(k, {}).items() if s is not Status.CRITICAL
        ]

    def degree(self, k: int, cell: int) -> int:
        return len(self._cofaces[k][cell]) if k < self.top else 0

    def coboundary(self, k: int, cell: int) -> List[int]:
        if k >= self.top:
            return []
        return sorted(self._cofaces[k][cell])

    def boundary(self, k: int, cell: int) -> Mapping[int, Scalar]:
        if k == 0:
            return MappingProxyType({})
        return MappingProxyType(self._boundary[k][cell])

    def rewritten_at(self, k: int, cell: int) -> Optional[int]:
        """Level at which an element was last rewritten, None if never."""
        return self._rewritten[k].get(cell)

    def advance_level(self) -> int:
        self.level += 1
        logger.debug(f"Ledger advanced to level {self.level}")
        return self.level

    # Collapses

    def _require_live(self, k: int, cell: int) -> None:
        if k not in self._status or cell not in self._status[k]:
            raise NotLiveError(f"No {k}-element with id {cell}")
        status = self._status[k][cell]
        if status is not Status.CRITICAL:
            raise NotLiveError(f"{k}-element {cell} is already matched ({status.value})")

    def collapse(
        self, k: int, sigma: int, tau: int, kind: PairKind = PairKind.FREE
    ) -> Tuple[Pair, Set[int]]:
        """
        Match sigma (dimension k) with tau (dimension k + 1).

        Every other live tau' incident to sigma becomes
        tau' - (<sigma, d tau'> / <sigma, d tau>) tau, the coefficients of
        live (k + 2)-elements are rewritten so they still describe the same
        chains, and both elements leave the live basis.

        Returns:
            The recorded pair (with a snapshot of tau's boundary) and the ids
            of k-elements whose degree may have changed.

        Raises:
            NotLiveError: sigma or tau is not live.
            NotIncidentError: sigma is not in the boundary of tau.
        """
        self._require_live(k, sigma)
        self._require_live(k + 1, tau)
        field = self.field
        bd_tau = self._boundary[k + 1][tau]
        b = bd_tau.get(sigma)
        if b is None or field.is_zero(b):
            raise NotIncidentError(f"{k}-element {sigma} is not incident to {tau}")

        touched: Set[int] = set()
        for other in sorted(self._cofaces[k][sigma] - {tau}):
            bd_other = self._boundary[k + 1][other]
            q = field.div(bd_other[sigma], b)
            for s, v in bd_tau.items():
                if s == sigma:
                    continue
                old = bd_other.get(s)
                new = (old if old is not None else 0) - q * v
                if field.is_zero(new):
                    if old is not None:
                        del bd_other[s]
                        self._cofaces[k][s].discard(other)
                        touched.add(s)
                else:
                    if old is None:
                        self._cofaces[k][s].add(other)
                        touched.add(s)
                        self.fill += 1
                    bd_other[s] = new
            del bd_other[sigma]
            self._cofaces[k][sigma].discard(other)

            # other = new_other + q * tau, so (k+2)-coefficients on tau move
            if k + 2 <= self.top:
                for rho in sorted(self._cofaces[k + 1][other]):
                    bd_rho = self._boundary[k + 2][rho]
                    new = bd_rho.get(tau, 0) + q * bd_rho[other]
                    if field.is_zero(new):
                        if tau in bd_rho:
                            del bd_rho[tau]
                            self._cofaces[k + 1][tau].discard(rho)
                    else:
                        if tau not in bd_rho:
                            self._cofaces[k + 1][tau].add(rho)
                        bd_rho[tau] = new

            self._record(Transform(self.level, k + 1, other, q, tau))
            self._rewritten[k + 1][other] = self.level
            if self.debug:
                self._check_element(k + 1, other)

        for s in bd_tau:
            self._cofaces[k][s].discard(tau)
            touched.add(s)
        if k >= 1:
            for r in self._boundary[k][sigma]:
                self._cofaces[k - 1][r].discard(sigma)
        self._status[k][sigma] = Status.DOWN
        self._status[k + 1][tau] = Status.UP

        pair = Pair(sigma, tau, kind, self.level, dict(bd_tau))
        self.pair_log.append(pair)
        touched.discard(sigma)
        logger.debug(
            f"Collapsed ({sigma}, {tau}) in dimension {k} as {kind.value} "
            f"at level {self.level}, {len(touched)} neighbours touched"
        )
        return pair, touched

    def _record(self, transform: Transform) -> None:
        self._by_target.setdefault((transform.k, transform.target), []).append(
            len(self.transforms)
        )
        self.transforms.append(transform)
        self._expansions.clear()

    # Canonical expansions

    def canonical_expansion(self, k: int, cell: int) -> Dict[int, Scalar]:
        """Coefficients of a basis element on the canonical k-cells."""
        key = (k, cell)
        if key in self._expansions:
            return dict(self._expansions[key])

        # post-order over sources without recursion
        stack = [(key, False)]
        while stack:
            node, ready = stack.pop()
            if node in self._expansions:
                continue
            indices = self._by_target.get(node, [])
            if not ready:
                stack.append((node, True))
                for idx in indices:
                    src = (node[0], self.transforms[idx].source)
                    if src not in self._expansions:
                        stack.append((src, False))
                continue
            expansion: Dict[int, Scalar] = {node[1]: 1}
            for idx in indices:
                t = self.transforms[idx]
                for c, v in self._expansions[(node[0], t.source)].items():
                    new = expansion.get(c, 0) - t.q * v
                    if self.field.is_zero(new):
                        expansion.pop(c, None)
                    else:
                        expansion[c] = new
            self._expansions[node] = expansion
        return dict(self._expansions[key])

    # Consistency checks

    def _compose(self, k: int, cell: int) -> Dict[int, Scalar]:
        acc: Dict[int, Scalar] = {}
        for facet, c in self._boundary[k][cell].items():
            for ridge, d in self._boundary[k - 1][facet].items():
                acc[ridge] = acc.get(ridge, 0) + c * d
        return {r: v for r, v in acc.items() if not self.field.is_zero(v)}

    def _check_element(self, k: int, cell: int) -> None:
        if k < 2:
            return
        residue = self._compose(k, cell)
        if residue:
            raise BoundarySquaredError(
                f"Boundary of boundary of {k}-element {cell} is {residue}"
            )

    def check_boundary_squared(self) -> bool:
        """True when every live element of dimension >= 2 satisfies dd = 0."""
        for k in range(2, self.top + 1):
            for cell in self.live(k):
                if self._compose(k, cell):
                    return False
        return True
