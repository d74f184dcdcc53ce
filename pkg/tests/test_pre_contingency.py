import math
import unittest

from gridfire import errors
from gridfire.grid import parsing
from gridfire.model import pre_contingency
from gridfire.solvers import base
from gridfire.solvers.model_builder import ModelBuilder
from gridfire.utils.seed import make_generator
from tests import data_utils


def solve_first_stage(g, z=None):
    m = ModelBuilder("first_stage")
    h = pre_contingency.build_first_stage(g, m)
    if z is not None:
        pre_contingency.fix_switching(g, m, h, z)
    return pre_contingency.extract_first_stage(base.solve(m), h)


class TestOctagon(unittest.TestCase):
    def test_vertices_on_circle(self):
        f_max = 1.3
        for k in range(8):
            angle = k * math.pi / 4
            self.assertTrue(pre_contingency.in_octagon(
                f_max * math.cos(angle), f_max * math.sin(angle), f_max,
            ))

    def test_between_inner_and_outer_circle(self):
        f_max = 0.8
        rng = make_generator(0)
        inner = f_max * math.cos(math.pi / 8)
        for angle in rng.uniform(0, 2 * math.pi, size=200):
            c, s = math.cos(angle), math.sin(angle)
            self.assertTrue(pre_contingency.in_octagon(
                0.999 * inner * c, 0.999 * inner * s, f_max,
            ))
            self.assertFalse(pre_contingency.in_octagon(
                1.001 * f_max * c, 1.001 * f_max * s, f_max,
            ))

    def test_eight_rows(self):
        self.assertEqual(len(pre_contingency.octagon_rows(1.0)), 8)


class TestFirstStage(unittest.TestCase):
    def test_two_bus_dispatch(self):
        g = data_utils.two_bus_instance(demand=0.3, power_factor=0.8)
        fs = solve_first_stage(g)
        self.assertAlmostEqual(fs.f_p[1], 0.3)
        self.assertAlmostEqual(fs.f_q[1], 0.225)
        self.assertAlmostEqual(fs.p_tr[1], 0.3)
        self.assertAlmostEqual(fs.v_sq[1], 1.0)
        self.assertAlmostEqual(fs.v_sq[2], 1.0 - 2 * (0.01 * 0.3 + 0.01 * 0.225))
        self.assertAlmostEqual(fs.cost_energy, 0.3)
        self.assertAlmostEqual(fs.cost_shed, 0.0)
        self.assertAlmostEqual(fs.operating_cost, 0.3)
        self.assertEqual(fs.z_vector(g).tolist(), [1])

    def test_keeps_initial_statuses_without_incentive(self):
        g = data_utils.loop_instance()
        fs = solve_first_stage(g)
        self.assertEqual(fs.z_sw, {3: 1, 4: 0})
        self.assertEqual(fs.switching_actions(g), [])
        self.assertAlmostEqual(fs.cost_switch, 0.0)
        self.assertAlmostEqual(fs.f_p[3], 0.15)
        self.assertAlmostEqual(fs.f_p[4], 0.0)

    def test_fixed_switching_and_actions(self):
        g = data_utils.loop_instance()
        fs = solve_first_stage(g, {3: 0, 4: 1})
        self.assertEqual(fs.switching_actions(g), [(3, 1, 0), (4, 0, 1)])
        self.assertAlmostEqual(fs.cost_switch, 1.0)
        self.assertAlmostEqual(fs.f_p[3], 0.0)
        self.assertAlmostEqual(fs.f_p[2], 0.25)
        self.assertAlmostEqual(fs.f_p[4], 0.15)

    def test_forbidden_pattern_is_infeasible(self):
        g = data_utils.loop_instance()
        with self.assertRaises(errors.SolverError):
            solve_first_stage(g, {3: 1, 4: 1})

    def test_shed_when_capacity_is_short(self):
        doc = data_utils.two_bus_doc(demand=0.3)
        doc["substations"][0]["p_max"] = 0.2
        g = parsing.from_dict(doc)
        fs = solve_first_stage(g)
        self.assertAlmostEqual(fs.shed_p_minus[2], 0.1)
        self.assertAlmostEqual(fs.cost_shed, 10.0)

    def test_flows_respect_octagon(self):
        for g in data_utils.random_corpus(n=5, seed=2):
            fs = solve_first_stage(g)
            for l in g.lines:
                self.assertTrue(pre_contingency.in_octagon(
                    fs.f_p[l.id], fs.f_q[l.id], l.f_max, tol=1e-7,
                ))


if __name__ == "__main__":
    unittest.main()
