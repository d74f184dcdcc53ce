import json
import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from gridfire import config, errors
from gridfire.evaluation import montecarlo
from gridfire.utils.seed import make_generator
from tests import data_utils


def _quiet_config():
    return config.run_config(quiet=True)


class TestHelpers(unittest.TestCase):
    def test_probabilities_are_clipped(self):
        g = data_utils.three_bus_instance()
        cfg = data_utils.ddu_config(g, gamma=0.5, beta=2.0)
        p = montecarlo.line_failure_probabilities(cfg, np.array([-0.5, 0.1]))
        np.testing.assert_allclose(p, [1.0, 0.7])

    def test_tail_mean(self):
        values = np.arange(1.0, 11.0)
        self.assertAlmostEqual(montecarlo.tail_mean(values, 0.8), 9.5)
        self.assertAlmostEqual(montecarlo.tail_mean(values, 0.95), 10.0)
        self.assertAlmostEqual(montecarlo.tail_mean(values, 0.0), 5.5)

    def test_switching_map(self):
        g = data_utils.loop_instance()
        self.assertEqual(montecarlo.switching_map(g, {3: 0}), {3: 0, 4: 0})
        with self.assertRaises(errors.PreconditionError):
            montecarlo.switching_map(g, [0, 1, 1, 0])
        with self.assertRaises(errors.PreconditionError):
            montecarlo.switching_map(g, [1, 1, 2, 0])

    def test_frozen_flows(self):
        g = data_utils.three_bus_instance()
        fs = montecarlo.frozen_flow_solve(g, {2: 0})
        self.assertAlmostEqual(fs.f_p[1], 0.5, places=6)
        self.assertAlmostEqual(fs.f_p[2], 0.0, places=6)

    def test_forbidden_switching(self):
        g = data_utils.loop_instance()
        self.assertEqual(g.forbidden_patterns, ((3, 4),))
        with self.assertRaises(errors.PreconditionError):
            montecarlo.frozen_flow_solve(g, {3: 1, 4: 1})


class TestSimulate(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.g = data_utils.three_bus_instance()
        cls.cfg = data_utils.ddu_config(cls.g, gamma=0.001, beta=0.4)
        cls.report = montecarlo.simulate(
            cls.g, cls.cfg, {2: 0}, n=2000, seed=7, run_cfg=_quiet_config(),
        )

    def test_probabilities(self):
        np.testing.assert_allclose(self.report.probabilities, [0.201, 0.001])

    def test_frequencies(self):
        p = self.report.probabilities
        sigma = np.sqrt(p * (1 - p) / self.report.samples)
        self.assertTrue(np.all(
            np.abs(self.report.empirical_frequencies - p) <= 3 * sigma + 1e-12
        ))

    def test_golden_values(self):
        # Replays the seed-7 stream: line 1 fails where its uniform is below 0.201.
        r = self.report
        uniforms = make_generator(7).random((2000, 2))
        share = float(np.mean(uniforms[:, 0] < r.probabilities[0]))
        self.assertAlmostEqual(r.mean_pct, 100.0 * share, places=6)
        # Intact or bypass-only outage costs 0.5; islanding bus 2 costs 50.
        self.assertAlmostEqual(r.mean_cost, 0.5 + 49.5 * share, places=5)
        self.assertAlmostEqual(r.cvar_pct, 100.0, places=6)
        self.assertAlmostEqual(r.cvar_cost, 50.0, places=5)
        sigma_pct = 100.0 * np.sqrt(0.201 * 0.799 / 2000)
        self.assertLessEqual(abs(r.mean_pct - 20.1), 3 * sigma_pct)
        self.assertLessEqual(abs(r.mean_cost - (0.5 + 49.5 * 0.201)),
                             3 * 0.495 * sigma_pct)

    def test_loss_follows_line_one(self):
        # Bus 2 is islanded exactly when line 1 fails.
        loss = self.report.loss_of_load_pct
        self.assertTrue(np.all(np.isin(np.round(loss, 6), [0.0, 100.0])))
        self.assertAlmostEqual(
            self.report.mean_pct, 100.0 * self.report.empirical_frequencies[0],
            places=5,
        )
        self.assertLessEqual(self.report.unique_scenarios, 4)

    def test_cvar_and_inverse_cdf(self):
        r = self.report
        self.assertGreaterEqual(r.cvar_pct, r.mean_pct)
        self.assertGreaterEqual(r.cvar_cost, r.mean_cost)
        self.assertAlmostEqual(r.cvar_pct, 100.0)
        self.assertEqual(len(r.inverse_cdf), r.samples)
        self.assertAlmostEqual(r.inverse_cdf[-1][0], 1.0)
        losses = [v for _, v in r.inverse_cdf]
        self.assertEqual(losses, sorted(losses, reverse=True))

    def test_reproducible(self):
        again = montecarlo.simulate(
            self.g, self.cfg, {2: 0}, n=2000, seed=7, run_cfg=_quiet_config(),
        )
        np.testing.assert_array_equal(
            again.loss_of_load_pct, self.report.loss_of_load_pct,
        )

    def test_single_sample(self):
        r = montecarlo.simulate(self.g, self.cfg, {2: 1}, n=1, seed=0,
                                run_cfg=_quiet_config())
        self.assertEqual(r.samples, 1)
        self.assertEqual(len(r.inverse_cdf), 1)
        self.assertAlmostEqual(r.cvar_pct, r.mean_pct)

    def test_sample_count(self):
        with self.assertRaises(errors.PreconditionError):
            montecarlo.simulate(self.g, self.cfg, {2: 0}, n=0)

    def test_write_report(self):
        header = {"config_hash": "0123", "instance_topology_hash": "abcd"}
        with tempfile.TemporaryDirectory() as d:
            paths = montecarlo.write_report(self.report, self.g, d, header)
            self.assertEqual(
                set(paths),
                {"scenarios.csv", "inverse_cdf.csv", "lines.csv", "summary.json"},
            )
            scenarios = pd.read_csv(paths["scenarios.csv"], comment="#")
            self.assertEqual(len(scenarios), self.report.samples)
            with open(paths["lines.csv"]) as fp:
                self.assertEqual(fp.readline().strip(), "# config_hash=0123")
            with open(paths["summary.json"]) as fp:
                summary = json.load(fp)
        self.assertEqual(summary["config_hash"], "0123")
        self.assertEqual(summary["samples"], 2000)
        self.assertEqual(summary["generator"], "PCG64")
        self.assertAlmostEqual(summary["probabilities"]["1"], 0.201)


if __name__ == "__main__":
    unittest.main()
