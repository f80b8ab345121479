import csv
import io
import json
import os
import shutil
import sys
import tempfile
import unittest
from contextlib import redirect_stdout
from unittest.mock import patch

# Ensure src is in path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from morsepotential.cli import main  # noqa: E402
from morsepotential.complex import build_from_tetrahedra, incidence_matrix  # noqa: E402
from morsepotential.generators import cube_grid, random_solenoidal_field  # noqa: E402
from morsepotential.io import read_cochain, read_mesh, write_cochain, write_mesh  # noqa: E402


class TestCli(unittest.TestCase):
    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        if os.path.exists(self.test_dir):
            shutil.rmtree(self.test_dir)

    def path(self, name: str) -> str:
        return os.path.join(self.test_dir, name)

    def run_cli(self, *argv: str):
        out = io.StringIO()
        with redirect_stdout(out):
            code = main(list(argv))
        return code, out.getvalue()

    def test_gen_writes_a_mesh(self):
        code, out = self.run_cli("gen", "--grid", "2", "--out", self.path("g.mesh"))
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["validation"]["ok"])
        self.assertEqual(read_mesh(self.path("g.mesh")), cube_grid(2))

    def test_solve_grid(self):
        code, out = self.run_cli(
            "solve",
            "--grid", "2",
            "--seed", "3",
            "--out", self.path("h.cochain"),
            "--report", self.path("report.json"),
        )
        self.assertEqual(code, 0)
        report = json.loads(out)
        self.assertTrue(report["residual_zero"])
        self.assertIn("depth", report["trace"])
        self.assertTrue(report["validation"]["ok"])
        self.assertEqual(report["validation"]["euler"], 1)

        K = cube_grid(2)
        h = read_cochain(self.path("h.cochain"), K, 1)
        i = random_solenoidal_field(K, seed=3, magnitude=10)
        self.assertTrue((incidence_matrix(K, 1).apply(h) - i).is_zero())
        with open(self.path("report.json"), encoding="utf-8") as fh:
            self.assertEqual(json.load(fh)["mesh"]["volumes"], 48)

    def test_solve_with_eliminator(self):
        code, out = self.run_cli("solve", "--grid", "1", "--method", "eliminate")
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["residual_zero"])

    def test_solve_rejects_divergent_field(self):
        K = build_from_tetrahedra(4, [(0, 1, 2, 3)])
        write_mesh(K, self.path("tet.mesh"))
        with open(self.path("i.cochain"), "w", encoding="utf-8") as fh:
            fh.write("cochain 2 1\n0 1\n")
        code, _ = self.run_cli(
            "solve", "--mesh", self.path("tet.mesh"), "--field", self.path("i.cochain")
        )
        self.assertEqual(code, 2)

    def test_debug_residual_failure_exits_with_error(self):
        with patch("morsepotential.solver.back_substitution", return_value={}):
            code, _ = self.run_cli("solve", "--grid", "2", "--debug")
        self.assertEqual(code, 1)

    def test_missing_mesh_file(self):
        code, _ = self.run_cli("solve", "--mesh", self.path("nope.mesh"))
        self.assertEqual(code, 1)

    def test_matching_dump(self):
        code, _ = self.run_cli(
            "solve", "--grid", "1", "--matching-out", self.path("m1")
        )
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(self.path("m1.0")))

    def test_stt_single_tet(self):
        K = build_from_tetrahedra(4, [(0, 1, 2, 3)])
        write_mesh(K, self.path("tet.mesh"))
        write_cochain(random_solenoidal_field(K, 5, 4), self.path("i.cochain"))
        code, out = self.run_cli(
            "stt",
            "--mesh", self.path("tet.mesh"),
            "--field", self.path("i.cochain"),
            "--tree-out", self.path("tree.txt"),
            "--out", self.path("h.cochain"),
        )
        self.assertEqual(code, 0)
        self.assertTrue(json.loads(out)["extra"]["terminated"])
        self.assertTrue(os.path.exists(self.path("tree.txt")))

        code, _ = self.run_cli(
            "stt",
            "--mesh", self.path("tet.mesh"),
            "--field", self.path("i.cochain"),
            "--tree", "file:" + self.path("tree.txt"),
        )
        self.assertEqual(code, 0)

    def test_stt_tree_from_matching(self):
        code, out = self.run_cli("stt", "--grid", "3", "--tree", "from-matching")
        self.assertEqual(code, 0)
        extra = json.loads(out)["extra"]
        self.assertTrue(extra["terminated"])
        self.assertEqual(extra["tree_edges"], 63)

    def test_stt_exit_code_is_defined(self):
        code, out = self.run_cli("stt", "--grid", "2", "--tree", "random", "--seed", "4")
        self.assertIn(code, (0, 3))
        self.assertEqual(json.loads(out)["extra"]["terminated"], code == 0)

    def test_stt_knotted_tree_needs_a_knot(self):
        code, _ = self.run_cli("stt", "--grid", "2", "--tree", "knotted")
        self.assertEqual(code, 1)

    def test_stt_unknown_tree(self):
        code, _ = self.run_cli("stt", "--grid", "1", "--tree", "spiral")
        self.assertEqual(code, 1)

    def test_bench_csv(self):
        code, _ = self.run_cli(
            "bench", "--sizes", "1", "2", "--runs", "2", "--out", self.path("bench.csv")
        )
        self.assertEqual(code, 0)
        with open(self.path("bench.csv"), newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        self.assertEqual([row["n"] for row in rows], ["1", "2"])
        self.assertEqual(rows[0]["ratio"], "")
        self.assertEqual(rows[1]["tets"], "48")
        self.assertEqual(rows[1]["runs"], "2")

    def test_usage_errors(self):
        with redirect_stdout(io.StringIO()), self.assertRaises(SystemExit) as ctx:
            main(["solve"])
        self.assertEqual(ctx.exception.code, 2)


if __name__ == "__main__":
    unittest.main()
