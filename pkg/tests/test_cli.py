import contextlib
import io
import json
import os
import tempfile
import unittest

import pandas as pd

import run_gridfire
from tests import data_utils


DDU = {
    "gamma": 0.001,
    "beta": 1.0,
    "k_budget": 1,
    "expansion_step": 0.01,
    "expansion_digits": 7,
}


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        self.instance = self._write("three_bus.json", data_utils.three_bus_doc())
        self.loop = self._write("loop.json", data_utils.loop_doc())
        self.ddu = self._write("ddu.json", DDU)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, doc):
        path = os.path.join(self.dir, name)
        with open(path, "w") as fp:
            json.dump(doc, fp)
        return path

    def _run(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = run_gridfire.cli(list(argv) + ["--quiet"])
        return code, out.getvalue(), err.getvalue()

    def _solve(self, out_name="solve"):
        out = os.path.join(self.dir, out_name)
        code, _, _ = self._run(
            "solve", "--instance", self.instance, "--ddu", self.ddu, "--out", out,
        )
        return code, out

    def test_solve(self):
        code, out = self._solve()
        self.assertEqual(code, run_gridfire.EXIT_OK)
        with open(os.path.join(out, "solution.json")) as fp:
            doc = json.load(fp)
        self.assertTrue(doc["converged"])
        self.assertEqual(doc["switching"], {"1": 1, "2": 1})
        self.assertEqual(doc["actions"], [{"line_id": 2, "initial": 0, "final": 1}])
        self.assertAlmostEqual(doc["costs"]["total"], 2.0, places=4)
        self.assertIn("config_hash", doc)
        iterations = pd.read_csv(os.path.join(out, "iterations.csv"), comment="#")
        self.assertEqual(len(iterations), doc["iterations"])
        with open(os.path.join(out, "cuts.json")) as fp:
            cuts = json.load(fp)
        self.assertEqual(cuts["config_hash"], doc["config_hash"])

    def test_warm_start(self):
        _, first = self._solve("first")
        out = os.path.join(self.dir, "warm")
        code, _, _ = self._run(
            "solve", "--instance", self.instance, "--ddu", self.ddu,
            "--warm_start", os.path.join(first, "cuts.json"), "--out", out,
        )
        self.assertEqual(code, run_gridfire.EXIT_OK)

    def test_oracle(self):
        out = os.path.join(self.dir, "oracle")
        code, _, _ = self._run(
            "oracle", "--instance", self.instance, "--ddu", self.ddu, "--out", out,
        )
        self.assertEqual(code, run_gridfire.EXIT_OK)
        with open(os.path.join(out, "oracle.json")) as fp:
            doc = json.load(fp)
        self.assertTrue(doc["within_tolerance"])
        self.assertAlmostEqual(doc["oracle"], 2.0, places=4)

    def test_simulate_from_solution(self):
        _, solved = self._solve()
        out = os.path.join(self.dir, "mc")
        code, _, _ = self._run(
            "simulate", "--instance", self.instance, "--ddu", self.ddu,
            "--solution", os.path.join(solved, "solution.json"),
            "--samples", "50", "--seed", "3", "--out", out,
        )
        self.assertEqual(code, run_gridfire.EXIT_OK)
        with open(os.path.join(out, "summary.json")) as fp:
            summary = json.load(fp)
        self.assertEqual(summary["samples"], 50)
        self.assertEqual(summary["seed"], 3)

    def test_simulate_explicit_switching(self):
        out = os.path.join(self.dir, "mc")
        code, _, _ = self._run(
            "simulate", "--instance", self.instance, "--ddu", self.ddu,
            "--z", "2=0", "--samples", "20", "--out", out,
        )
        self.assertEqual(code, run_gridfire.EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(out, "scenarios.csv")))

    def test_simulate_without_switching(self):
        code, _, err = self._run(
            "simulate", "--instance", self.instance, "--ddu", self.ddu,
            "--out", os.path.join(self.dir, "mc"),
        )
        self.assertEqual(code, run_gridfire.EXIT_USAGE)
        self.assertEqual(json.loads(err.strip().splitlines()[-1])["error"],
                         "ConfigurationError")

    def test_solution_for_other_instance(self):
        _, solved = self._solve()
        code, _, err = self._run(
            "simulate", "--instance", self.loop, "--ddu", self.ddu,
            "--solution", os.path.join(solved, "solution.json"),
            "--out", os.path.join(self.dir, "mc"),
        )
        self.assertEqual(code, run_gridfire.EXIT_ERROR)
        self.assertIn("SignatureMismatchError", err)

    def test_rules(self):
        out = os.path.join(self.dir, "rules")
        code, stdout, _ = self._run(
            "rules", "--instance", self.loop, "--out", out, "--rewrite",
        )
        self.assertEqual(code, run_gridfire.EXIT_OK)
        self.assertEqual(json.loads(stdout.strip()), [[3, 4]])
        with open(os.path.join(out, "loop.json")) as fp:
            self.assertEqual(json.load(fp)["forbidden_patterns"], [[3, 4]])

    def test_missing_ddu(self):
        code, _, err = self._run(
            "solve", "--instance", self.instance, "--out", self.dir,
        )
        self.assertEqual(code, run_gridfire.EXIT_USAGE)
        self.assertIn("UsageError", err)

    def test_bad_ddu(self):
        bad = self._write("bad.json", dict(DDU, k_budget=9))
        code, _, _ = self._run(
            "solve", "--instance", self.instance, "--ddu", bad, "--out", self.dir,
        )
        self.assertEqual(code, run_gridfire.EXIT_USAGE)

    def test_missing_instance(self):
        code, _, _ = self._run(
            "solve", "--instance", os.path.join(self.dir, "nope.json"),
            "--ddu", self.ddu, "--out", self.dir,
        )
        self.assertEqual(code, run_gridfire.EXIT_USAGE)

    def test_unknown_mode(self):
        err = io.StringIO()
        with contextlib.redirect_stderr(err):
            with self.assertRaises(SystemExit) as cm:
                run_gridfire.cli(["train", "--instance", self.instance,
                                  "--out", self.dir])
        self.assertEqual(cm.exception.code, run_gridfire.EXIT_USAGE)
        self.assertEqual(json.loads(err.getvalue())["error"], "UsageError")

    def test_flags_use_underscores(self):
        out = os.path.join(self.dir, "preset")
        code, _, _ = self._run(
            "solve", "--instance", self.instance, "--ddu", self.ddu, "--out", out,
            "--config_preset", "enumerate", "--log_level", "WARNING",
        )
        self.assertEqual(code, run_gridfire.EXIT_OK)
        err = io.StringIO()
        with contextlib.redirect_stderr(err):
            with self.assertRaises(SystemExit) as cm:
                run_gridfire.cli(["solve", "--instance", self.instance,
                                  "--warm-start", "cuts.json", "--out", self.dir])
        self.assertEqual(cm.exception.code, run_gridfire.EXIT_USAGE)


if __name__ == "__main__":
    unittest.main()
