import types
import unittest

import numpy as np

from gridfire import config, errors
from gridfire.model import recourse, subproblem
from gridfire.model.recourse import ContingencyScenario
from gridfire.utils.seed import make_generator
from tests import data_utils


def _run_cfg(mode, **subproblem_overrides):
    run_cfg = config.run_config()
    run_cfg.subproblem.mode = mode
    for k, v in subproblem_overrides.items():
        run_cfg.subproblem[k] = v
    return run_cfg


class TestThreeBus(unittest.TestCase):
    def setUp(self):
        self.g = data_utils.three_bus_instance()
        self.cfg = data_utils.ddu_config(self.g)
        # Rewards failing line 1 through its lower moment weight.
        self.psi = np.array([0.0, 0.0, 10.0, 0.0])

    def test_modes_find_islanding_outage(self):
        for mode in ("milp", "enumerate"):
            sol = subproblem.solve_subproblem(
                self.g, self.cfg, {2: 0}, self.psi, _run_cfg(mode),
            )
            self.assertEqual(sol.scenario.failed, (0,))
            self.assertAlmostEqual(sol.recourse_cost, 50.0, places=5)
            self.assertAlmostEqual(sol.objective, 60.0, places=5)

    def test_ties_pick_smallest_failed_set(self):
        # With the bypass closed every scenario costs 0.5.
        sol = subproblem.solve_subproblem(
            self.g, self.cfg, {2: 1}, np.zeros(4), _run_cfg("enumerate"),
        )
        self.assertEqual(sol.scenario.failed, ())
        self.assertAlmostEqual(sol.objective, 0.5, places=6)

    def test_tight_dual_bounds(self):
        cfg = data_utils.ddu_config(self.g, dual_big_m=1e-6)
        with self.assertRaises(errors.CalibrationError):
            subproblem.solve_subproblem(
                self.g, cfg, {2: 0}, self.psi,
                _run_cfg("milp", max_recalibrations=0),
            )

    def test_recalibration_recovers_worst_case(self):
        cfg = data_utils.ddu_config(self.g, dual_big_m=1e-6)
        with self.assertLogs(level="WARNING") as logs:
            sol = subproblem.solve_subproblem(
                self.g, cfg, {2: 0}, self.psi,
                _run_cfg("milp", max_recalibrations=6, recalibration_factor=100.0),
            )
        self.assertTrue(any("Dual bounds" in line for line in logs.output))
        self.assertEqual(sol.scenario.failed, (0,))
        self.assertAlmostEqual(sol.objective, 60.0, places=5)

    def test_enumeration_check_rejects_missed_scenario(self):
        cfg = data_utils.ddu_config(self.g, dual_big_m=1e-6)
        with self.assertRaises(errors.CalibrationError):
            subproblem.solve_subproblem(
                self.g, cfg, {2: 0}, self.psi,
                _run_cfg("milp", max_recalibrations=1, verify_support_max=256),
            )

    def test_saturated_rows(self):
        program = recourse.build_recourse_program(self.g)
        bounds = {"voltage": 1.0, "flow": 1.0}
        gated = [r.name for r in program.rows if r.a_line is not None]
        values = {f"eta:{name}": 0.0 for name in gated}
        values[f"eta:{gated[0]}"] = 1.0
        result = types.SimpleNamespace(value=lambda name: values[name])
        self.assertEqual(
            subproblem._saturated_rows(result, program, bounds, 1e-6), [gated[0]],
        )

    def test_psi_shape(self):
        with self.assertRaises(errors.PreconditionError):
            subproblem.solve_subproblem(self.g, self.cfg, {2: 0}, np.zeros(2))

    def test_unknown_mode(self):
        with self.assertRaises(errors.ConfigurationError):
            subproblem.solve_subproblem(
                self.g, self.cfg, {2: 0}, np.zeros(4), _run_cfg("bogus"),
            )


class TestPenalty(unittest.TestCase):
    def test_psi_penalty(self):
        psi = np.array([1.0, 2.0, 4.0, 0.5, 0.0, 1.0, 0.0, 0.0])
        s = ContingencyScenario.from_failed(4, [0, 3])
        self.assertAlmostEqual(subproblem.psi_penalty(psi, s), 1.0 + 0.5)

    def test_default_bounds_positive(self):
        g = data_utils.loop_instance()
        bounds = subproblem.default_dual_bounds(g)
        self.assertEqual(set(bounds), {"voltage", "flow"})
        self.assertTrue(all(v > 0 for v in bounds.values()))
        cfg = data_utils.ddu_config(g, dual_big_m={"flow": 7.0})
        self.assertEqual(subproblem.default_dual_bounds(g, cfg)["flow"], 7.0)


class TestMilpAgreesWithEnumeration(unittest.TestCase):
    def test_random_corpus(self):
        rng = make_generator(11)
        corpus = data_utils.random_corpus(n=min(data_utils.corpus_size(), 8), seed=5)
        for g in corpus:
            n = g.num_lines
            k = int(rng.integers(1, 3))
            cfg = data_utils.ddu_config(g, k_budget=min(k, n))
            z = {l.id: int(l.initial_closed) for l in g.lines if l.switchable}
            psi = np.concatenate([rng.uniform(0, 20, n), np.zeros(n)])
            milp = subproblem.solve_subproblem(g, cfg, z, psi, _run_cfg("milp"))
            enum = subproblem.solve_subproblem(g, cfg, z, psi, _run_cfg("enumerate"))
            self.assertAlmostEqual(
                milp.objective, enum.objective,
                delta=1e-5 * (1 + abs(enum.objective)),
            )
            self.assertLessEqual(milp.scenario.num_failed, cfg.k_budget)


if __name__ == "__main__":
    unittest.main()
