import json
import os
import tempfile
import unittest

import numpy as np

from gridfire import config, errors
from gridfire.evaluation import montecarlo
from gridfire.model import ambiguity, driver, master
from gridfire.utils.seed import make_generator
from tests import data_utils


# Open bypass costs 1 + 49.5 (0.001 + 0.5 beta); closing it costs 2.
THRESHOLD_BETA = (1.0 / 49.5 - 0.001) / 0.5


class TestThreeBusRegimes(unittest.TestCase):
    def setUp(self):
        self.g = data_utils.three_bus_instance()

    def test_no_decision_dependence_keeps_bypass_open(self):
        cfg = data_utils.ddu_config(self.g, beta=0.0)
        result = driver.solve_ddro(self.g, cfg)
        self.assertTrue(result.converged)
        self.assertEqual(result.solution.first_stage.z_sw, {2: 0})
        self.assertAlmostEqual(result.objective, 1.0 + 49.5 * 0.001, places=4)
        self.assertAlmostEqual(result.worst_case_expected_value, 0.5 + 49.5 * 0.001,
                               places=4)

    def test_heavy_decision_dependence_closes_bypass(self):
        cfg = data_utils.ddu_config(self.g, beta=1.0)
        result = driver.solve_ddro(self.g, cfg)
        self.assertTrue(result.converged)
        fs = result.solution.first_stage
        self.assertEqual(fs.switching_actions(self.g), [(2, 0, 1)])
        self.assertAlmostEqual(result.objective, 2.0, places=4)
        self.assertAlmostEqual(fs.f_p[1], 0.25, places=6)
        self.assertAlmostEqual(fs.f_p[2], 0.25, places=6)

    def test_either_side_of_threshold(self):
        below = driver.solve_ddro(
            self.g, data_utils.ddu_config(self.g, beta=0.9 * THRESHOLD_BETA))
        above = driver.solve_ddro(
            self.g, data_utils.ddu_config(self.g, beta=1.1 * THRESHOLD_BETA))
        self.assertEqual(below.solution.first_stage.z_sw, {2: 0})
        self.assertEqual(above.solution.first_stage.z_sw, {2: 1})

    def test_log(self):
        cfg = data_utils.ddu_config(self.g, beta=1.0)
        result = driver.solve_ddro(self.g, cfg)
        self.assertEqual([e.iteration for e in result.log],
                         list(range(result.iterations)))
        self.assertIsNone(result.log[-1].scenario_added)
        best = [e.best_ub for e in result.log]
        self.assertEqual(best, sorted(best, reverse=True))
        lbs = [e.lb for e in result.log]
        self.assertEqual(lbs, sorted(lbs))
        self.assertLessEqual(result.gap, cfg.epsilon)

    def test_zero_budget_converges_after_one_cut(self):
        cfg = data_utils.ddu_config(self.g, beta=1.0, k_budget=0)
        result = driver.solve_ddro(self.g, cfg)
        self.assertTrue(result.converged)
        self.assertEqual(result.log[-1].iteration, 1)
        self.assertEqual(len(result.cuts), 1)
        self.assertAlmostEqual(result.objective, 1.0, places=5)

    def test_iteration_cap(self):
        cfg = data_utils.ddu_config(self.g, beta=1.0)
        run_cfg = config.run_config()
        run_cfg.driver.max_iterations = 1
        result = driver.solve_ddro(self.g, cfg, run_cfg=run_cfg)
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 1)
        self.assertGreater(result.gap, cfg.epsilon)
        self.assertIsNotNone(result.solution)

    def test_iteration_cap_below_one(self):
        cfg = data_utils.ddu_config(self.g, beta=1.0)
        run_cfg = config.run_config()
        run_cfg.driver.max_iterations = 0
        with self.assertRaises(errors.ConfigurationError):
            driver.solve_ddro(self.g, cfg, run_cfg=run_cfg)


# Six-bus feeders: open costs 1.4 + 49.5 (0.001 + 0.5 beta), closed costs 2.4.
SIX_BUS_THRESHOLD = (2.4 - 1.4 - 49.5 * 0.001) / (49.5 * 0.5)


class TestSixBusRegimes(unittest.TestCase):
    def setUp(self):
        self.g = data_utils.six_bus_instance()

    def _oracle_total(self, beta, z):
        cfg = data_utils.six_bus_ddu(self.g, beta)
        fs = montecarlo.frozen_flow_solve(self.g, z)
        oracle = ambiguity.worst_case_expectation_oracle(
            self.g, cfg, fs.z_vector(self.g), fs.f_p_vector(self.g),
        )
        return fs.operating_cost + oracle.value

    def test_oracle_values(self):
        self.assertEqual(self.g.forbidden_patterns, ())
        self.assertAlmostEqual(
            self._oracle_total(0.2, {5: 0}), 1.4 + 49.5 * (0.001 + 0.1), places=5,
        )
        self.assertAlmostEqual(self._oracle_total(0.2, {5: 1}), 2.4, places=5)

    def test_threshold_by_bisection(self):
        lo, hi = 0.0, 1.0
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if self._oracle_total(mid, {5: 0}) < self._oracle_total(mid, {5: 1}):
                lo = mid
            else:
                hi = mid
        self.assertAlmostEqual(0.5 * (lo + hi), SIX_BUS_THRESHOLD, places=5)

    def test_either_side_of_threshold(self):
        below = driver.solve_ddro(
            self.g, data_utils.six_bus_ddu(self.g, 0.9 * SIX_BUS_THRESHOLD))
        above = driver.solve_ddro(
            self.g, data_utils.six_bus_ddu(self.g, 1.1 * SIX_BUS_THRESHOLD))
        self.assertTrue(below.converged and above.converged)
        self.assertEqual(below.solution.first_stage.z_sw, {5: 0})
        self.assertAlmostEqual(
            below.objective,
            1.4 + 49.5 * (0.001 + 0.45 * SIX_BUS_THRESHOLD),
            delta=1e-3,
        )
        fs = above.solution.first_stage
        self.assertEqual(fs.switching_actions(self.g), [(5, 0, 1)])
        self.assertAlmostEqual(above.objective, 2.4, delta=1e-3)
        # Equal voltage references force the loop flows to split 0.4 / 0.3.
        self.assertAlmostEqual(fs.f_p[1], 0.4, places=5)
        self.assertAlmostEqual(fs.f_p[3], 0.3, places=5)


class TestAgainstOracle(unittest.TestCase):
    def test_random_corpus(self):
        rng = make_generator(29)
        corpus = data_utils.random_corpus(seed=3, max_buses=10)
        for i, g in enumerate(corpus):
            k = min(i % 3, g.num_lines)
            cfg = data_utils.ddu_config(
                g, gamma=0.002, beta=data_utils.mixed_beta(rng, g), k_budget=k,
            )
            result = driver.solve_ddro(g, cfg)
            self.assertTrue(result.converged, f"instance {i}")
            fs = result.solution.first_stage
            oracle = ambiguity.worst_case_expectation_oracle(
                g, cfg, fs.z_vector(g), fs.f_p_vector(g),
            )
            total = fs.operating_cost + oracle.value
            self.assertLessEqual(total, result.best_ub + 1e-6 * (1 + abs(total)))
            self.assertLessEqual(
                abs(result.objective - total) / max(abs(result.objective), 1.0),
                cfg.epsilon + 1e-6,
                f"instance {i}, K={k}",
            )


class TestWarmStart(unittest.TestCase):
    def setUp(self):
        self.rng = make_generator(31)
        self.corpus = [data_utils.loop_instance()] + data_utils.random_corpus(
            seed=23, max_buses=7,
        )

    def test_baseline_cuts_stay_valid(self):
        for i, g in enumerate(self.corpus):
            base_cfg = data_utils.ddu_config(g, gamma=0.01, beta=0.0)
            baseline = driver.solve_ddro(g, base_cfg)

            beta = 0.3 if i == 0 else data_utils.mixed_beta(self.rng, g, high=0.3)
            cfg = data_utils.ddu_config(g, gamma=0.01, beta=beta)
            cold = driver.solve_ddro(g, cfg)
            warm = driver.solve_ddro(g, cfg, warm_cuts=baseline.cuts)
            self.assertAlmostEqual(
                cold.objective, warm.objective,
                delta=2 * cfg.epsilon * max(abs(cold.objective), 1.0),
                msg=f"instance {i}",
            )
            sol = warm.solution
            z = sol.first_stage.z_vector(g)
            for cut in baseline.cuts:
                rhs = master.evaluate_cut(g, cut, z, sol.psi)
                self.assertLessEqual(rhs, sol.phi + 1e-6 * (1 + abs(rhs)))
            ids = [cut.id for cut in warm.cuts]
            self.assertEqual(len(ids), len(set(ids)))

    def test_monotone_in_beta(self):
        for i, g in enumerate(self.corpus):
            base = np.full(g.num_lines, 0.2) if i == 0 else data_utils.mixed_beta(
                self.rng, g, high=0.2,
            )
            objectives = []
            for scale in (0.0, 0.5, 1.0, 2.0):
                cfg = data_utils.ddu_config(g, gamma=0.01, beta=base * scale)
                objectives.append(driver.solve_ddro(g, cfg).objective)
            for lo, hi in zip(objectives, objectives[1:]):
                self.assertLessEqual(lo, hi + 2e-4 * max(abs(hi), 1.0), f"instance {i}")


class TestCutCache(unittest.TestCase):
    def setUp(self):
        self.g = data_utils.three_bus_instance()
        cfg = data_utils.ddu_config(self.g, beta=1.0)
        self.cuts = driver.solve_ddro(self.g, cfg).cuts
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "cuts.json")

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load(self):
        driver.save_cuts(self.cuts, self.path, self.g, extra={"config_hash": "abc"})
        with open(self.path) as fp:
            doc = json.load(fp)
        self.assertEqual(doc["format"], driver.CUT_FILE_FORMAT)
        self.assertEqual(doc["config_hash"], "abc")
        loaded = driver.load_cuts(self.path, self.g)
        self.assertEqual([c.id for c in loaded], [c.id for c in self.cuts])
        self.assertEqual([c.scenario for c in loaded], [c.scenario for c in self.cuts])
        for a, b in zip(loaded, self.cuts):
            const_a, coef_a = a.coefficients(self.g)
            const_b, coef_b = b.coefficients(self.g)
            self.assertAlmostEqual(const_a, const_b)
            self.assertEqual(coef_a.tolist(), coef_b.tolist())

    def test_other_instance_rejected(self):
        driver.save_cuts(self.cuts, self.path, self.g)
        with self.assertRaises(errors.SignatureMismatchError):
            driver.load_cuts(self.path, data_utils.loop_instance())

    def test_not_a_cut_cache(self):
        with open(self.path, "w") as fp:
            json.dump({"format": "something-else"}, fp)
        with self.assertRaises(errors.ConfigurationError):
            driver.load_cuts(self.path, self.g)


class TestGap(unittest.TestCase):
    def test_relative_gap(self):
        self.assertAlmostEqual(driver.relative_gap(9.0, 10.0), 0.1)
        self.assertAlmostEqual(driver.relative_gap(0.1, 0.5), 0.4)
        self.assertAlmostEqual(driver.relative_gap(0.1, 0.5, floor=0.1), 0.8)


if __name__ == "__main__":
    unittest.main()
