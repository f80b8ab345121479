import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from typing import (
    Any,
    Dict,
    Hashable,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Protocol,
    Tuple,
)

import numpy as np

from .errors import DimensionMismatchError, InconsistentError, UnknownIndexError

logger = logging.getLogger(__name__)

Scalar = Any


class ScalarField(Protocol):
    name: str
    exact: bool

    def coerce(self, value: Any) -> Scalar: ...

    def div(self, a: Scalar, b: Scalar) -> Scalar: ...

    def is_zero(self, a: Scalar) -> bool: ...


class RationalField:
    """Exact arithmetic on ints and Fractions. Integral results stay ints."""

    name = "rational"
    exact = True

    def coerce(self, value: Any) -> Scalar:
        if isinstance(value, (int, np.integer)):
            return int(value)
        value = Fraction(value)
        return value.numerator if value.denominator == 1 else value

    def div(self, a: Scalar, b: Scalar) -> Scalar:
        if isinstance(a, int) and isinstance(b, int) and a % b == 0:
            return a // b
        q = Fraction(a) / b
        return q.numerator if q.denominator == 1 else q

    def is_zero(self, a: Scalar) -> bool:
        return a == 0


class FloatField:
    """
    Floating-point arithmetic with an absolute zero threshold.

    Args:
        tol: magnitudes at or below tol count as zero.
    """

    name = "float"
    exact = False

    def __init__(self, tol: float = 1e-12):
        if tol < 0:
            raise ValueError(f"tol must be non-negative, got {tol}")
        self.tol = tol

    def coerce(self, value: Any) -> Scalar:
        return float(value)

    def div(self, a: Scalar, b: Scalar) -> Scalar:
        return float(a) / float(b)

    def is_zero(self, a: Scalar) -> bool:
        return abs(a) <= self.tol


RATIONAL = RationalField()


def make_field(name: str, tol: float = 1e-12) -> ScalarField:
    if name == "rational":
        return RATIONAL
    if name == "float":
        return FloatField(tol)
    raise ValueError(f"Unknown field: '{name}'. Valid options: ['rational', 'float']")


class Cochain:
    """
    Coefficients indexed by the ids of k-dimensional basis elements.

    Values live in a numpy object array so that ints and Fractions keep
    their exact type.
    """

    def __init__(
        self,
        k: int,
        ids: Iterable[Hashable],
        values: Optional[Iterable[Scalar]] = None,
    ):
        self.k = k
        self.ids: Tuple[Hashable, ...] = tuple(ids)
        self._index = {cid: pos for pos, cid in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise ValueError("Cochain ids must be unique")
        if values is None:
            self.values = np.zeros(len(self.ids), dtype=object)
        else:
            self.values = np.empty(len(self.ids), dtype=object)
            values = list(values)
            if len(values) != len(self.ids):
                raise DimensionMismatchError(
                    f"Got {len(values)} values for {len(self.ids)} ids"
                )
            self.values[:] = values

    @classmethod
    def zeros(cls, k: int, ids: Iterable[Hashable]) -> "Cochain":
        return cls(k, ids)

    @classmethod
    def from_dict(
        cls, k: int, ids: Iterable[Hashable], mapping: Mapping[Hashable, Scalar]
    ) -> "Cochain":
        """Missing ids are zero; keys outside ids raise UnknownIndexError."""
        cochain = cls(k, ids)
        for cid, value in mapping.items():
            cochain[cid] = value
        return cochain

    def _pos(self, cid: Hashable) -> int:
        try:
            return self._index[cid]
        except KeyError:
            raise UnknownIndexError(
                f"Id {cid!r} is not in the index set of this {self.k}-cochain"
            ) from None

    def __getitem__(self, cid: Hashable) -> Scalar:
        return self.values[self._pos(cid)]

    def __setitem__(self, cid: Hashable, value: Scalar) -> None:
        self.values[self._pos(cid)] = value

    def __contains__(self, cid: Hashable) -> bool:
        return cid in self._index

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[Hashable]:
        return iter(self.ids)

    def get(self, cid: Hashable, default: Scalar = 0) -> Scalar:
        pos = self._index.get(cid)
        return default if pos is None else self.values[pos]

    def items(self) -> Iterator[Tuple[Hashable, Scalar]]:
        return zip(self.ids, self.values)

    def to_dict(self) -> Dict[Hashable, Scalar]:
        return dict(self.items())

    def support(self) -> List[Hashable]:
        return [cid for cid, v in self.items() if v != 0]

    def is_zero(self) -> bool:
        return not self.support()

    def subvector(self, ids: Iterable[Hashable]) -> "Cochain":
        ids = list(ids)
        return Cochain(self.k, ids, [self[cid] for cid in ids])

    def copy(self) -> "Cochain":
        return Cochain(self.k, self.ids, self.values)

    def _check_compatible(self, other: "Cochain") -> None:
        if self.k != other.k or self.ids != other.ids:
            raise DimensionMismatchError(
                f"Cannot combine a {self.k}-cochain on {len(self.ids)} ids "
                f"with a {other.k}-cochain on {len(other.ids)} ids"
            )

    def __add__(self, other: "Cochain") -> "Cochain":
        self._check_compatible(other)
        return Cochain(self.k, self.ids, self.values + other.values)

    def __sub__(self, other: "Cochain") -> "Cochain":
        self._check_compatible(other)
        return Cochain(self.k, self.ids, self.values - other.values)

    def __neg__(self) -> "Cochain":
        return Cochain(self.k, self.ids, -self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cochain):
            return NotImplemented
        return (
            self.k == other.k
            and set(self.ids) == set(other.ids)
            and all(other[cid] == v for cid, v in self.items())
        )

    def __repr__(self) -> str:
        return f"Cochain(k={self.k}, n={len(self.ids)}, support={len(self.support())})"


class SignedSparseMatrix:
    """
    Sparse matrix keyed by arbitrary row and column ids.

    Entries are stored twice, row-major and column-major, and explicit
    zeros are never kept. Ids are preserved by block extraction.
    """

    def __init__(
        self,
        row_ids: Iterable[Hashable],
        col_ids: Iterable[Hashable],
        entries: Optional[Iterable[Tuple[Hashable, Hashable, Scalar]]] = None,
        row_dim: Optional[int] = None,
        col_dim: Optional[int] = None,
    ):
        self.row_ids: Tuple[Hashable, ...] = tuple(row_ids)
        self.col_ids: Tuple[Hashable, ...] = tuple(col_ids)
        self._row_pos = {r: i for i, r in enumerate(self.row_ids)}
        self._col_pos = {c: i for i, c in enumerate(self.col_ids)}
        if len(self._row_pos) != len(self.row_ids):
            raise ValueError("Row ids must be unique")
        if len(self._col_pos) != len(self.col_ids):
            raise ValueError("Column ids must be unique")
        self.row_dim = row_dim
        self.col_dim = col_dim
        self._rows: Dict[Hashable, Dict[Hashable, Scalar]] = {}
        self._cols: Dict[Hashable, Dict[Hashable, Scalar]] = {}
        for r, c, v in entries or ():
            self.add(r, c, v)

    def _check(self, r: Hashable, c: Hashable) -> None:
        if r not in self._row_pos:
            raise UnknownIndexError(f"Row id {r!r} is not in the matrix")
        if c not in self._col_pos:
            raise UnknownIndexError(f"Column id {c!r} is not in the matrix")

    def add(self, r: Hashable, c: Hashable, value: Scalar) -> None:
        """Accumulate value into entry (r, c), dropping it if it cancels."""
        self._check(r, c)
        new = self._rows.get(r, {}).get(c, 0) + value
        if new == 0:
            self._rows.get(r, {}).pop(c, None)
            self._cols.get(c, {}).pop(r, None)
        else:
            self._rows.setdefault(r, {})[c] = new
            self._cols.setdefault(c, {})[r] = new

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.row_ids), len(self.col_ids)

    @property
    def nnz(self) -> int:
        return sum(len(row) for row in self._rows.values())

    def entry(self, r: Hashable, c: Hashable) -> Scalar:
        self._check(r, c)
        return self._rows.get(r, {}).get(c, 0)

    def row(self, r: Hashable) -> Dict[Hashable, Scalar]:
        if r not in self._row_pos:
            raise UnknownIndexError(f"Row id {r!r} is not in the matrix")
        return dict(self._rows.get(r, {}))

    def col(self, c: Hashable) -> Dict[Hashable, Scalar]:
        if c not in self._col_pos:
            raise UnknownIndexError(f"Column id {c!r} is not in the matrix")
        return dict(self._cols.get(c, {}))

    def entries(self) -> Iterator[Tuple[Hashable, Hashable, Scalar]]:
        for r in self.row_ids:
            for c, v in self._rows.get(r, {}).items():
                yield r, c, v

    def block(
        self, rows: Iterable[Hashable], cols: Iterable[Hashable]
    ) -> "SignedSparseMatrix":
        rows = list(rows)
        cols = list(cols)
        for r in rows:
            if r not in self._row_pos:
                raise UnknownIndexError(f"Row id {r!r} is not in the matrix")
        for c in cols:
            if c not in self._col_pos:
                raise UnknownIndexError(f"Column id {c!r} is not in the matrix")
        col_set = set(cols)
        entries = (
            (r, c, v)
            for r in rows
            for c, v in self._rows.get(r, {}).items()
            if c in col_set
        )
        return SignedSparseMatrix(rows, cols, entries, self.row_dim, self.col_dim)

    def apply(self, v: Cochain) -> Cochain:
        if len(v.ids) != len(self.col_ids) or set(v.ids) != set(self.col_ids):
            raise DimensionMismatchError(
                f"Cochain on {len(v.ids)} ids does not match the "
                f"{len(self.col_ids)} columns of the matrix"
            )
        k = self.row_dim if self.row_dim is not None else v.k + 1
        out = Cochain(k, self.row_ids)
        for r, row in self._rows.items():
            acc = 0
            for c, a in row.items():
                x = v[c]
                if x != 0:
                    acc += a * x
            out[r] = acc
        return out

    def matmul(self, other: "SignedSparseMatrix") -> "SignedSparseMatrix":
        if set(self.col_ids) != set(other.row_ids):
            raise DimensionMismatchError(
                "Column ids of the left factor differ from row ids of the right factor"
            )
        result = SignedSparseMatrix(
            self.row_ids, other.col_ids, row_dim=self.row_dim, col_dim=other.col_dim
        )
        for r, row in self._rows.items():
            for mid, a in row.items():
                for c, b in other._rows.get(mid, {}).items():
                    result.add(r, c, a * b)
        return result

    def __matmul__(self, other: "SignedSparseMatrix") -> "SignedSparseMatrix":
        return self.matmul(other)

    def transpose(self) -> "SignedSparseMatrix":
        return SignedSparseMatrix(
            self.col_ids,
            self.row_ids,
            ((c, r, v) for r, c, v in self.entries()),
            self.col_dim,
            self.row_dim,
        )

    def is_zero(self) -> bool:
        return self.nnz == 0

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape, dtype=object)
        for r, c, v in self.entries():
            dense[self._row_pos[r], self._col_pos[c]] = v
        return dense

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignedSparseMatrix):
            return NotImplemented
        return (
            self.row_ids == other.row_ids
            and self.col_ids == other.col_ids
            and {r: row for r, row in self._rows.items() if row}
            == {r: row for r, row in other._rows.items() if row}
        )

    def __repr__(self) -> str:
        return f"SignedSparseMatrix(shape={self.shape}, nnz={self.nnz})"


def block(
    M: SignedSparseMatrix, rows: Iterable[Hashable], cols: Iterable[Hashable]
) -> SignedSparseMatrix:
    return M.block(rows, cols)


def subvector(v: Cochain, ids: Iterable[Hashable]) -> Cochain:
    return v.subvector(ids)


def apply(M: SignedSparseMatrix, v: Cochain) -> Cochain:
    return M.apply(v)


@dataclass
class EliminationResult:
    solution: Cochain
    rank: int
    pivots: List[Tuple[Hashable, Hashable]] = field(default_factory=list)


def _normalize(row: Dict[Hashable, Scalar], rhs: Scalar) -> Scalar:
    """Divide an all-integer row and its rhs by their common gcd."""
    values = list(row.values())
    if not all(isinstance(v, int) for v in values) or not isinstance(rhs, int):
        return rhs
    g = 0
    for v in values:
        g = gcd(g, v)
        if g == 1:
            return rhs
    g = gcd(g, rhs)
    if g > 1:
        for c in row:
            row[c] //= g
        rhs //= g
    return rhs


def exact_eliminate_solve(
    A: SignedSparseMatrix,
    b: Cochain,
    field: Optional[ScalarField] = None,
) -> EliminationResult:
    """
    Solve A x = b by sparse Gaussian elimination.

    Pivots minimize the Markowitz cost (row_nnz - 1) * (col_nnz - 1), ties
    going to the earliest row then column. In the exact field, rows are
    combined fraction-free (p * r2 - a * r) and integer rows are reduced by
    their gcd. Variables that never become pivots are set to zero.

    Args:
        A: coefficient matrix.
        b: right-hand side indexed by A's rows.
        field: scalar field, rational by default.

    Returns:
        EliminationResult with one solution, the rank of A and the pivots.

    Raises:
        DimensionMismatchError: b is not indexed by the rows of A.
        InconsistentError: b is not in the range of A.
    """
    field = field or RATIONAL
    if len(b.ids) != len(A.row_ids) or set(b.ids) != set(A.row_ids):
        raise DimensionMismatchError(
            f"Right-hand side on {len(b.ids)} ids does not match the "
            f"{len(A.row_ids)} rows of the matrix"
        )

    row_order = {r: i for i, r in enumerate(A.row_ids)}
    col_order = {c: i for i, c in enumerate(A.col_ids)}
    rows: Dict[Hashable, Dict[Hashable, Scalar]] = {
        r: dict(A._rows.get(r, {})) for r in A.row_ids
    }
    rhs: Dict[Hashable, Scalar] = {r: field.coerce(b[r]) for r in A.row_ids}
    col_rows: Dict[Hashable, set] = {c: set(A._cols.get(c, {})) for c in A.col_ids}
    active = set(A.row_ids)
    pivots: List[Tuple[Hashable, Hashable]] = []
    pivot_rows: List[Tuple[Hashable, Dict[Hashable, Scalar], Scalar]] = []

    def check_empty(r: Hashable) -> None:
        if not rows[r]:
            active.discard(r)
            if not field.is_zero(rhs[r]):
                logger.error(f"Row {r!r} reduced to 0 = {rhs[r]}")
                raise InconsistentError(
                    f"Right-hand side is not in the range of the matrix (row {r!r})",
                    rows=[r],
                )

    for r in A.row_ids:
        check_empty(r)

    while active:
        best = None
        for r in A.row_ids:
            if r not in active:
                continue
            row_cost = len(rows[r]) - 1
            for c in sorted(rows[r], key=col_order.__getitem__):
                cost = row_cost * (len(col_rows[c]) - 1)
                if best is None or cost < best[0]:
                    best = (cost, r, c)
                    if cost == 0:
                        break
            if best is not None and best[0] == 0:
                break
        _, pr, pc = best
        prow = rows[pr]
        p = prow[pc]
        active.discard(pr)
        for c in prow:
            col_rows[c].discard(pr)

        for r2 in sorted(col_rows[pc], key=row_order.__getitem__):
            row2 = rows[r2]
            a = row2[pc]
            if field.exact:
                for c in row2:
                    row2[c] = p * row2[c]
                rhs[r2] = p * rhs[r2] - a * rhs[pr]
                scale = a
            else:
                scale = field.div(a, p)
                rhs[r2] = rhs[r2] - scale * rhs[pr]
            for c, v in prow.items():
                new = row2.get(c, 0) - scale * v
                if c == pc or field.is_zero(new):
                    if c in row2:
                        del row2[c]
                        col_rows[c].discard(r2)
                else:
                    if c not in row2:
                        col_rows[c].add(r2)
                    row2[c] = new
            if field.exact:
                rhs[r2] = _normalize(row2, rhs[r2])
            check_empty(r2)
        col_rows[pc] = set()
        pivots.append((pr, pc))
        pivot_rows.append((pc, dict(prow), rhs[pr]))

    x: Dict[Hashable, Scalar] = {c: 0 for c in A.col_ids}
    for pc, prow, value in reversed(pivot_rows):
        acc = value
        for c, v in prow.items():
            if c != pc and x[c] != 0:
                acc -= v * x[c]
        x[pc] = field.div(acc, prow[pc])

    logger.debug(f"Eliminated {A!r}: rank {len(pivots)}")
    k = A.col_dim if A.col_dim is not None else b.k - 1
    solution = Cochain(k, A.col_ids, [x[c] for c in A.col_ids])
    return EliminationResult(solution=solution, rank=len(pivots), pivots=pivots)


def rank_of(A: SignedSparseMatrix, field: Optional[ScalarField] = None) -> int:
    zero = Cochain(A.row_dim if A.row_dim is not None else 0, A.row_ids)
    return exact_eliminate_solve(A, zero, field).rank
