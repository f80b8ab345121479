__version__ = "0.1.0"

from .algebra import Cochain, FloatField, RationalField, SignedSparseMatrix, exact_eliminate_solve
from .complex import CellComplex, build_from_tetrahedra, incidence_matrix, validate
from .generators import cube_grid, furch_ball, random_solenoidal_field, trefoil_path
from .matching import (
    Matching,
    Pair,
    greedy_matching,
    spanning_tree_matching_0,
    spanning_tree_matching_2,
    stt_run,
    verify_acyclic,
)
from .solver import (
    VectorPotentialSolver,
    greedy_spanning_tree,
    solve_divergence_potential,
    solve_gradient_potential,
    solve_vector_potential,
)

__all__ = [
    "CellComplex",
    "build_from_tetrahedra",
    "incidence_matrix",
    "validate",
    "Cochain",
    "SignedSparseMatrix",
    "RationalField",
    "FloatField",
    "exact_eliminate_solve",
    "Matching",
    "Pair",
    "greedy_matching",
    "spanning_tree_matching_0",
    "spanning_tree_matching_2",
    "stt_run",
    "verify_acyclic",
    "VectorPotentialSolver",
    "solve_vector_potential",
    "solve_gradient_potential",
    "solve_divergence_potential",
    "greedy_spanning_tree",
    "cube_grid",
    "furch_ball",
    "trefoil_path",
    "random_solenoidal_field",
]
