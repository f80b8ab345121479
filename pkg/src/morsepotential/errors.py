"""Exceptions and warnings raised by morsepotential."""

from typing import Any, Iterable, List, Optional


class MorsePotentialError(Exception):
    """Base class for every error raised by the package."""


# Input / precondition errors


class MeshError(MorsePotentialError, ValueError):
    """Raised when a tetrahedral mesh cannot be turned into a cell complex."""


class DuplicateTetError(MeshError):
    pass


class DanglingVertexIdError(MeshError):
    pass


class DegenerateTetError(MeshError):
    pass


class UnknownIndexError(MorsePotentialError, KeyError):
    """Raised when a row, column or cochain id is not part of the index set."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class DimensionMismatchError(MorsePotentialError, ValueError):
    pass


class InconsistentError(MorsePotentialError, ValueError):
    """Raised when a right-hand side is not in the range of the matrix."""

    def __init__(self, message: str, rows: Optional[Iterable[Any]] = None):
        super().__init__(message)
        self.rows: List[Any] = list(rows) if rows is not None else []


class NotIncidentError(MorsePotentialError, ValueError):
    pass


class NotLiveError(MorsePotentialError, ValueError):
    pass


class MissingValueError(MorsePotentialError, ValueError):
    pass


class NotSolenoidalError(InconsistentError):
    """Raised when a face cochain has nonzero divergence (D i != 0)."""


class NotCurlFreeError(InconsistentError):
    """Raised when an edge cochain has nonzero curl (C w != 0)."""


class DisconnectedGraphError(MorsePotentialError, ValueError):
    pass


class NonManifoldFaceError(MeshError):
    pass


class NotASpanningTreeError(MorsePotentialError, ValueError):
    pass


class InconsistentInputError(InconsistentError):
    """Raised by STT when a fully determined face disagrees with its rhs."""


class InvalidPathError(MorsePotentialError, ValueError):
    pass


class TopologyBrokenError(MeshError):
    pass


class ParseError(MorsePotentialError, ValueError):
    """Raised by the text readers; `line` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# Internal invariant breaches


class ZeroBlockViolationError(MorsePotentialError, RuntimeError):
    pass


class BoundarySquaredError(MorsePotentialError, RuntimeError):
    pass


class ResidualNotZeroError(MorsePotentialError, RuntimeError):
    """A computed potential fails the exact check C h = i."""


class TopologyWarning(UserWarning):
    """Emitted when a complex does not look like a 3-ball (Euler != 1)."""
