import json
import os
import shutil
import sys
import tempfile
import unittest
from fractions import Fraction

# Ensure src is in path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from morsepotential.algebra import Cochain  # noqa: E402
from morsepotential.complex import build_from_tetrahedra  # noqa: E402
from morsepotential.errors import (  # noqa: E402
    DimensionMismatchError,
    DuplicateTetError,
    NotASpanningTreeError,
    ParseError,
)
from morsepotential.generators import KnotPath, cube_grid  # noqa: E402
from morsepotential.io import (  # noqa: E402
    Report,
    read_cochain,
    read_knot_path,
    read_matching,
    read_mesh,
    read_tree,
    write_cochain,
    write_knot_path,
    write_matching,
    write_mesh,
    write_tree,
)
from morsepotential.ledger import BasisLedger  # noqa: E402
from morsepotential.matching import bfs_tree, greedy_matching  # noqa: E402


class TestFiles(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def path(self, name: str) -> str:
        return os.path.join(self.test_dir, name)

    def write_text(self, name: str, text: str) -> str:
        target = self.path(name)
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
        return target


class TestMeshFiles(TestFiles):
    def test_grid_survives_a_file(self):
        K = cube_grid(2)
        write_mesh(K, self.path("grid.mesh"))
        again = read_mesh(self.path("grid.mesh"))
        self.assertEqual(again, K)
        self.assertEqual(again.coordinates.shape, (27, 3))

    def test_comments_and_missing_coordinates(self):
        target = self.write_text(
            "tet.mesh",
            "# one tet\nvertices 4 tets 1\n- - -\n- - -\n\n- - -\n- - -  # last\n0 1 2 3\n",
        )
        K = read_mesh(target)
        self.assertEqual(K.counts, (4, 6, 4, 1))
        self.assertIsNone(K.coordinates)

    def test_bad_header(self):
        target = self.write_text("bad.mesh", "verts 4 tets 1\n")
        with self.assertRaises(ParseError) as ctx:
            read_mesh(target)
        self.assertEqual(ctx.exception.line, 1)

    def test_truncated_file_reports_line(self):
        """The line after the last one read is reported."""
        target = self.write_text("short.mesh", "vertices 4 tets 1\n0 0 0\n1 0 0\n")
        with self.assertRaises(ParseError) as ctx:
            read_mesh(target)
        self.assertEqual(ctx.exception.line, 4)

    def test_mixed_coordinates(self):
        target = self.write_text(
            "mixed.mesh", "vertices 4 tets 1\n0 0 0\n- - -\n0 1 0\n0 0 1\n0 1 2 3\n"
        )
        with self.assertRaises(ParseError):
            read_mesh(target)

    def test_trailing_content(self):
        target = self.write_text(
            "extra.mesh", "vertices 4 tets 1\n- - -\n- - -\n- - -\n- - -\n0 1 2 3\n0 1 2 3\n"
        )
        with self.assertRaises(ParseError) as ctx:
            read_mesh(target)
        self.assertEqual(ctx.exception.line, 7)

    def test_mesh_errors_propagate(self):
        target = self.write_text(
            "dup.mesh", "vertices 4 tets 2\n- - -\n- - -\n- - -\n- - -\n0 1 2 3\n3 2 1 0\n"
        )
        with self.assertRaises(DuplicateTetError):
            read_mesh(target)


class TestCochainFiles(TestFiles):
    def setUp(self):
        super().setUp()
        self.K = build_from_tetrahedra(4, [(0, 1, 2, 3)])

    def test_exact_values(self):
        h = Cochain(1, range(6), [0, Fraction(-1, 3), 2, 0, 0, 5])
        write_cochain(h, self.path("h.cochain"))
        with open(self.path("h.cochain"), encoding="utf-8") as fh:
            self.assertIn("1 -1/3\n", fh.read())
        self.assertEqual(read_cochain(self.path("h.cochain"), self.K, 1), h)

    def test_missing_entries_are_zero(self):
        target = self.write_text("i.cochain", "cochain 2 1\n3 4\n")
        i = read_cochain(target, self.K, 2)
        self.assertEqual(i[3], 4)
        self.assertIsInstance(i[3], int)
        self.assertEqual(i.support(), [3])

    def test_wrong_dimension(self):
        target = self.write_text("i.cochain", "cochain 1 0\n")
        with self.assertRaises(DimensionMismatchError):
            read_cochain(target, self.K, 2)

    def test_unknown_cell(self):
        target = self.write_text("i.cochain", "cochain 2 1\n4 1\n")
        with self.assertRaises(DimensionMismatchError):
            read_cochain(target, self.K, 2)

    def test_duplicate_entry(self):
        target = self.write_text("i.cochain", "cochain 2 2\n1 1\n1 2\n")
        with self.assertRaises(ParseError) as ctx:
            read_cochain(target, self.K, 2)
        self.assertEqual(ctx.exception.line, 3)

    def test_bad_value(self):
        target = self.write_text("i.cochain", "cochain 2 1\n1 1/0\n")
        with self.assertRaises(ParseError):
            read_cochain(target, self.K, 2)


class TestMatchingAndTreeFiles(TestFiles):
    def test_matching_file_keeps_order(self):
        K = cube_grid(1)
        ledger = BasisLedger(K)
        greedy_matching(ledger, 2, exhaust=True)
        m1 = greedy_matching(ledger, 1)
        write_matching(m1, self.path("m1.txt"))
        again = read_matching(self.path("m1.txt"), K)
        self.assertEqual(again.k, 1)
        self.assertEqual(again.pairs, m1.pairs)
        self.assertEqual(again.pairs[0].boundary, dict(K.boundary(2, m1.pairs[0].tau)))

    def test_bad_pair_kind(self):
        target = self.write_text("m.txt", "pair 1 0 0 sideways 0\n")
        with self.assertRaises(ParseError):
            read_matching(target)

    def test_tree_file(self):
        K = cube_grid(1)
        tree = bfs_tree(K)
        write_tree(tree, self.path("tree.txt"))
        again = read_tree(self.path("tree.txt"), K)
        self.assertEqual(again.edge_ids, tree.edge_ids)
        self.assertEqual(again.root, 0)

    def test_tree_file_must_span(self):
        K = build_from_tetrahedra(4, [(0, 1, 2, 3)])
        target = self.write_text("tree.txt", "tree root 0 edges 2\n1 0 0\n2 0 1\n")
        with self.assertRaises(NotASpanningTreeError):
            read_tree(target, K)

    def test_knot_path_file(self):
        path = KnotPath(((2, 2, 3), (2, 2, 2)), "stub")
        write_knot_path(path, self.path("knot.txt"))
        again = read_knot_path(self.path("knot.txt"), "stub")
        self.assertEqual(again, path)


class TestReport(TestFiles):
    def test_report_json(self):
        K = cube_grid(1)
        report = Report(mesh=Report.mesh_stats(K), residual_zero=True)
        report.seconds["solve"] = 0.5
        report.write(self.path("report.json"))
        with open(self.path("report.json"), encoding="utf-8") as fh:
            data = json.load(fh)
        self.assertEqual(data["mesh"]["volumes"], 6)
        self.assertTrue(data["residual_zero"])
        self.assertEqual(data["seconds"]["solve"], 0.5)


if __name__ == "__main__":
    unittest.main()
