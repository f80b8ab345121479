import os
import sys
import unittest
from unittest.mock import patch

import numpy as np

# Ensure src is in path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from morsepotential.algebra import Cochain  # noqa: E402
from morsepotential.complex import (  # noqa: E402
    CellComplex,
    build_from_tetrahedra,
    incidence_matrix,
)
from morsepotential.errors import (  # noqa: E402
    DimensionMismatchError,
    MissingValueError,
    MorsePotentialError,
    NotASpanningTreeError,
    NotCurlFreeError,
    NotSolenoidalError,
    ResidualNotZeroError,
    ZeroBlockViolationError,
)
from morsepotential.generators import (  # noqa: E402
    cube_grid,
    furch_ball,
    random_solenoidal_field,
    trefoil_path,
)
from morsepotential.ledger import BasisLedger  # noqa: E402
from morsepotential.matching import (  # noqa: E402
    Matching,
    Pair,
    PairKind,
    greedy_matching,
    spanning_tree_matching_0,
    spanning_tree_matching_2,
    stt_run,
)
from morsepotential.solver import (  # noqa: E402
    TERMINAL_ACTIONS,
    VectorPotentialSolver,
    back_substitution,
    check_triangular,
    collapse_pair,
    greedy_spanning_tree,
    solve_divergence_potential,
    solve_gradient_potential,
    solve_vector_potential,
    solve_with_eliminator,
    split_residual,
)


def single_tet() -> CellComplex:
    return build_from_tetrahedra(4, [(0, 1, 2, 3)])


class TestVectorPotential(unittest.TestCase):
    def assertSolves(self, K, h, i):
        residual = incidence_matrix(K, 1).apply(h) - i
        self.assertTrue(residual.is_zero(), f"C h - i nonzero on {residual.support()[:5]}")

    def test_single_tet(self):
        K = single_tet()
        for seed in range(5):
            i = random_solenoidal_field(K, seed=seed, magnitude=10)
            h, trace = solve_vector_potential(K, i)
            self.assertSolves(K, h, i)
            self.assertEqual(trace.terminal_action, "complete-matching")
            self.assertEqual(trace.depth, 0)
            # the three critical edges carry the gauge
            for e in (2, 4, 5):
                self.assertEqual(h[e], 0)

    def test_grid_is_exact(self):
        for n in (1, 2, 3):
            K = cube_grid(n)
            i = random_solenoidal_field(K, seed=n, magnitude=10)
            h, trace = solve_vector_potential(K, i)
            self.assertSolves(K, h, i)
            self.assertIn(trace.terminal_action, TERMINAL_ACTIONS)
            self.assertTrue(trace.m2_complete)

    def test_seeded_orders(self):
        K = cube_grid(2)
        i = random_solenoidal_field(K, seed=9, magnitude=4)
        for seed in (1, 2, 3):
            h, _ = solve_vector_potential(K, i, seed=seed)
            self.assertSolves(K, h, i)

    def test_debug_mode(self):
        K = cube_grid(2)
        i = random_solenoidal_field(K, seed=0, magnitude=3)
        h, _ = solve_vector_potential(K, i, debug=True, seed=5)
        self.assertSolves(K, h, i)

    def test_depth_cap_on_collapsible_grid(self):
        """A grid clears on the first level, so max_depth=0 changes nothing."""
        K = cube_grid(3)
        i = random_solenoidal_field(K, seed=4, magnitude=6)
        h, trace = solve_vector_potential(K, i, max_depth=0)
        self.assertSolves(K, h, i)
        self.assertEqual(trace.depth, 0)
        self.assertEqual(trace.terminal_action, "complete-matching")

    def test_debug_checks_residual(self):
        K = single_tet()
        i = random_solenoidal_field(K, seed=1, magnitude=5)
        with patch("morsepotential.solver.back_substitution", return_value={}):
            with self.assertRaises(ResidualNotZeroError) as ctx:
                solve_vector_potential(K, i, debug=True)
        self.assertIsInstance(ctx.exception, MorsePotentialError)

    def test_stalled_volume_matching_uses_dual_tree(self):
        K = cube_grid(2)
        i = random_solenoidal_field(K, seed=8, magnitude=10)

        def edges_only(ledger, k, *args, **kwargs):
            if k == 2:
                return Matching(2)
            return greedy_matching(ledger, k, *args, **kwargs)

        with patch("morsepotential.solver.greedy_matching", side_effect=edges_only):
            factorization = VectorPotentialSolver().factorize(K)
        self.assertFalse(factorization.trace.m2_complete)
        self.assertEqual(len(factorization.m2), K.n_volumes)
        self.assertTrue(all(p.kind is PairKind.TREE for p in factorization.m2))
        self.assertEqual(factorization.ledger.live(3), [])
        self.assertSolves(K, factorization.solve(i), i)

    def test_float_field(self):
        K = cube_grid(2)
        i = random_solenoidal_field(K, seed=3, magnitude=10)
        h, _ = solve_vector_potential(K, i, field="float")
        residual = incidence_matrix(K, 1).apply(h) - i
        np.testing.assert_allclose(residual.values.astype(float), 0.0, atol=1e-8)

    def test_zero_field(self):
        K = cube_grid(2)
        h, _ = solve_vector_potential(K, Cochain(2, range(K.n_faces)))
        self.assertTrue(h.is_zero())

    def test_factorization_is_reusable(self):
        K = cube_grid(2)
        factorization = VectorPotentialSolver(seed=2).factorize(K)
        for seed in (10, 11):
            i = random_solenoidal_field(K, seed=seed, magnitude=7)
            self.assertSolves(K, factorization.solve(i), i)

    def test_two_dimensional_complex(self):
        """No volumes means no divergence check and no k=2 matching."""
        K = CellComplex.from_simplices(4, [(0, 1, 2), (0, 2, 3)])
        i = Cochain(2, range(2), [3, -2])
        h, trace = solve_vector_potential(K, i)
        self.assertSolves(K, h, i)
        self.assertEqual(h[0], 1)
        self.assertEqual(h[1], -2)

    def test_not_solenoidal(self):
        K = single_tet()
        i = Cochain(2, range(4), [1, 0, 0, 0])
        with self.assertRaises(NotSolenoidalError) as ctx:
            solve_vector_potential(K, i)
        self.assertEqual(ctx.exception.rows, [0])

    def test_wrong_cochain(self):
        K = single_tet()
        with self.assertRaises(DimensionMismatchError):
            solve_vector_potential(K, Cochain(2, range(3)))
        with self.assertRaises(DimensionMismatchError):
            solve_vector_potential(K, Cochain(1, range(4)))

    def test_invalid_options(self):
        with self.assertRaises(ValueError):
            VectorPotentialSolver(seed=-1)
        with self.assertRaises(ValueError):
            VectorPotentialSolver(max_depth=-2)
        with self.assertRaises(ValueError):
            VectorPotentialSolver(field="modular")

    def test_trace_dict(self):
        K = cube_grid(2)
        i = random_solenoidal_field(K, seed=1, magnitude=2)
        _, trace = solve_vector_potential(K, i)
        data = trace.to_dict()
        self.assertEqual(data["depth"], trace.depth)
        self.assertEqual(len(data["levels"]), len(trace.levels))
        level = data["levels"][0]
        self.assertEqual(level["m2"], K.n_volumes)
        self.assertEqual(level["free"] + level["flat"], level["m1"])

    def test_eliminator_agrees_on_consistency(self):
        K = cube_grid(2)
        i = random_solenoidal_field(K, seed=6, magnitude=5)
        self.assertSolves(K, solve_with_eliminator(K, i), i)
        with self.assertRaises(NotSolenoidalError):
            solve_with_eliminator(single_tet(), Cochain(2, range(4), [0, 0, 0, 2]))


class TestKnottedBallRecursion(unittest.TestCase):
    """The trefoil ball does not clear on the first level."""

    @classmethod
    def setUpClass(cls):
        cls.K = furch_ball(12, trefoil_path(12))
        cls.i = random_solenoidal_field(cls.K, seed=1, magnitude=10)

    def assertSolves(self, h):
        residual = incidence_matrix(self.K, 1).apply(h) - self.i
        self.assertTrue(residual.is_zero(), f"C h - i nonzero on {residual.support()[:5]}")

    def test_recursion_goes_deeper(self):
        h, trace = solve_vector_potential(self.K, self.i, seed=1)
        self.assertSolves(h)
        self.assertGreaterEqual(trace.depth, 1)
        self.assertGreater(trace.first_residual_faces, 0)

    def test_depth_cap_falls_back(self):
        for seed in (1, 2, 3):
            h, trace = solve_vector_potential(self.K, self.i, seed=seed, max_depth=0)
            self.assertSolves(h)
            self.assertEqual(trace.depth, 0)
            self.assertEqual(trace.terminal_action, "fallback-solver")
            self.assertGreater(trace.levels[0].critical_faces, 0)


class TestGreedySpanningTree(unittest.TestCase):
    def test_single_tet(self):
        K = single_tet()
        tree = greedy_spanning_tree(K)
        self.assertEqual(tree.edge_ids, {2, 4, 5})
        self.assertIsNone(tree.parent[0])

    def test_grid_tree_runs_stt(self):
        K = cube_grid(3)
        tree = greedy_spanning_tree(K)
        self.assertEqual(len(tree.edge_ids), K.n_vertices - 1)
        i = random_solenoidal_field(K, seed=6, magnitude=5)
        result = stt_run(K, tree, i)
        self.assertTrue(result.terminated)
        residual = incidence_matrix(K, 1).apply(result.h) - i
        self.assertTrue(residual.is_zero())

    def test_incomplete_free_phase(self):
        # a closed surface has no free edge
        K = CellComplex.from_simplices(4, [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)])
        with self.assertRaises(NotASpanningTreeError):
            greedy_spanning_tree(K)


class TestBuildingBlocks(unittest.TestCase):
    def test_collapse_pair_classifies(self):
        K = CellComplex.from_simplices(4, [(0, 1, 2), (0, 2, 3)])
        ledger = BasisLedger(K)
        self.assertEqual(collapse_pair(ledger, 1, 1).kind.value, "flat")
        self.assertEqual(collapse_pair(ledger, 0, 0).kind.value, "free")

    def test_back_substitution_needs_values(self):
        matching = Matching(1, [Pair(0, 0, boundary={0: 1, 1: 1})])
        with self.assertRaises(MissingValueError):
            back_substitution(matching, {0: 1}, {})
        with self.assertRaises(MissingValueError):
            back_substitution(matching, {}, {1: 0})
        self.assertEqual(back_substitution(matching, {0: 5}, {1: 2}), {0: 3})

    def test_check_triangular(self):
        K = cube_grid(2)
        ledger = BasisLedger(K)
        greedy_matching(ledger, 2, exhaust=True)
        self.assertEqual(check_triangular(greedy_matching(ledger, 1)), [])
        self.assertEqual(check_triangular(spanning_tree_matching_0(K)), [])
        self.assertEqual(check_triangular(spanning_tree_matching_2(K)), [])

        bad = Matching(
            1,
            [
                Pair(0, 0, boundary={0: 1}),
                Pair(1, 1, boundary={1: 1, 0: 1}),
                Pair(2, 2, boundary={3: 1}),
            ],
        )
        self.assertEqual(check_triangular(bad), [(1, 0), (2, 2)])

    def test_split_residual_detects_nonzero_block(self):
        K = CellComplex.from_simplices(4, [(0, 1, 2), (0, 2, 3)])
        ledger = BasisLedger(K)
        pair = collapse_pair(ledger, 0, 0)
        matching = Matching(1, [pair])
        system = split_residual(ledger, matching, {0: 0, 1: 4})
        self.assertEqual(system.matrix.row_ids, (1,))
        self.assertEqual(system.rhs[1], 4)
        self.assertEqual(system.coupling.row_ids, (0,))

        ledger._boundary[2][1][0] = 1
        with self.assertRaises(ZeroBlockViolationError):
            split_residual(ledger, matching)


class TestScalarAndDivergencePotentials(unittest.TestCase):
    def test_gradient_on_path(self):
        K = CellComplex.from_simplices(4, [(0, 1), (1, 2), (2, 3)])
        w = Cochain(1, range(3), [2, -1, 5])
        v = solve_gradient_potential(K, w)
        self.assertEqual(list(v.values), [0, 2, 1, 6])

    def test_gradient_on_grid(self):
        K = cube_grid(2)
        rng = np.random.default_rng(0)
        v0 = Cochain(0, range(K.n_vertices), [int(x) for x in rng.integers(-9, 10, K.n_vertices)])
        w = incidence_matrix(K, 0).apply(v0)
        v = solve_gradient_potential(K, w)
        self.assertEqual(v[0], 0)
        self.assertTrue((incidence_matrix(K, 0).apply(v) - w).is_zero())

    def test_gradient_rejects_curl(self):
        K = single_tet()
        w = Cochain(1, range(6), [1, 0, 0, 0, 0, 0])
        with self.assertRaises(NotCurlFreeError):
            solve_gradient_potential(K, w)

    def test_divergence_single_tet(self):
        K = single_tet()
        v = solve_divergence_potential(K, Cochain(3, range(1), [7]))
        self.assertEqual(v[0], -7)
        self.assertEqual(v.support(), [0])

    def test_divergence_on_grid(self):
        K = cube_grid(2)
        q = Cochain(3, range(K.n_volumes), list(range(K.n_volumes)))
        v = solve_divergence_potential(K, q)
        self.assertTrue((incidence_matrix(K, 2).apply(v) - q).is_zero())

    def test_divergence_wrong_dimension(self):
        with self.assertRaises(DimensionMismatchError):
            solve_divergence_potential(single_tet(), Cochain(2, range(4)))


if __name__ == "__main__":
    unittest.main()
