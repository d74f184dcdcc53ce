import os

import numpy as np

from gridfire.grid import parsing
from gridfire.grid.synthetic import random_instance
from gridfire.model.ambiguity import make_ddu_config
from gridfire.utils.seed import make_generator


def corpus_size(default=20):
    return int(os.environ.get("GRIDFIRE_TEST_CORPUS", default))


def two_bus_doc(demand=0.3, power_factor=1.0, energy_cost=1.0, loss_cost=100.0):
    return {
        "base_mva": 1.0,
        "loss_cost": loss_cost,
        "buses": [
            {"id": 1, "demand_p": 0.0, "power_factor": 1.0,
             "v_min": 0.9, "v_max": 1.1, "is_substation": True},
            {"id": 2, "demand_p": demand, "power_factor": power_factor,
             "v_min": 0.9, "v_max": 1.1},
        ],
        "lines": [
            {"id": 1, "from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.01,
             "f_max": 1.27},
        ],
        "substations": [
            {"bus": 1, "p_max": 1.0, "q_min": -1.0, "q_max": 1.0,
             "energy_cost": energy_cost, "v_ref": 1.0},
        ],
    }


def two_bus_instance(**kwargs):
    return parsing.from_dict(two_bus_doc(**kwargs))


def three_bus_doc():
    """Two substations feeding one load.

    Line 1 (1 -> 2) is fixed and exposed to wildfire; line 2 (3 -> 2) is an
    open switchable bypass with switch cost 1. With K = 1 and gamma = 0.001
    the open topology costs 1 + 49.5 * mu_1 and the closed one costs 2.
    """
    return {
        "base_mva": 1.0,
        "loss_cost": 100.0,
        "buses": [
            {"id": 1, "demand_p": 0.0, "power_factor": 1.0,
             "v_min": 0.9, "v_max": 1.1, "is_substation": True},
            {"id": 2, "demand_p": 0.5, "power_factor": 1.0,
             "v_min": 0.9, "v_max": 1.1},
            {"id": 3, "demand_p": 0.0, "power_factor": 1.0,
             "v_min": 0.9, "v_max": 1.1, "is_substation": True},
        ],
        "lines": [
            {"id": 1, "from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.01,
             "f_max": 1.27},
            {"id": 2, "from_bus": 3, "to_bus": 2, "r": 0.01, "x": 0.01,
             "f_max": 1.27, "switchable": True, "initial_closed": False,
             "switch_cost": 1.0},
        ],
        "substations": [
            {"bus": 1, "p_max": 1.0, "q_min": 0.0, "q_max": 0.0,
             "energy_cost": 1.0, "v_ref": 1.0},
            {"bus": 3, "p_max": 1.0, "q_min": 0.0, "q_max": 0.0,
             "energy_cost": 1.0, "v_ref": 1.0},
        ],
    }


def three_bus_instance():
    return parsing.from_dict(three_bus_doc())


def loop_doc():
    """A 4-bus feeder whose two switchable ties would close one loop together."""
    return {
        "base_mva": 1.0,
        "loss_cost": 100.0,
        "buses": [
            {"id": 1, "demand_p": 0.0, "power_factor": 1.0,
             "v_min": 0.9, "v_max": 1.1, "is_substation": True},
            {"id": 2, "demand_p": 0.2, "power_factor": 0.95,
             "v_min": 0.9, "v_max": 1.1},
            {"id": 3, "demand_p": 0.1, "power_factor": 0.95,
             "v_min": 0.9, "v_max": 1.1},
            {"id": 4, "demand_p": 0.15, "power_factor": 0.95,
             "v_min": 0.9, "v_max": 1.1},
        ],
        "lines": [
            {"id": 1, "from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.02,
             "f_max": 1.0},
            {"id": 2, "from_bus": 1, "to_bus": 3, "r": 0.01, "x": 0.02,
             "f_max": 1.0},
            {"id": 3, "from_bus": 2, "to_bus": 4, "r": 0.01, "x": 0.02,
             "f_max": 1.0, "switchable": True, "initial_closed": True,
             "switch_cost": 0.5},
            {"id": 4, "from_bus": 3, "to_bus": 4, "r": 0.01, "x": 0.02,
             "f_max": 1.0, "switchable": True, "initial_closed": False,
             "switch_cost": 0.5},
        ],
        "substations": [
            {"bus": 1, "p_max": 1.0, "q_min": -1.0, "q_max": 1.0,
             "energy_cost": 1.0, "v_ref": 1.0},
        ],
    }


def loop_instance():
    return parsing.from_dict(loop_doc())


def six_bus_doc():
    """Two feeders joined by one open bypass.

    Feeder A: substation 1 -> 2 -> 3 over lines 1 and 2. Feeder B:
    substation 6 -> 4 -> 5 over lines 3 and 4. Line 5 (3 -> 5) is the
    switchable bypass with switch cost 1. Only line 1 is exposed to wildfire
    (see six_bus_ddu). Open, losing line 1 sheds buses 2 and 3; closed,
    feeder B picks them up.
    """
    def bus(bid, demand, sub=False):
        return {"id": bid, "demand_p": demand, "power_factor": 1.0,
                "v_min": 0.9, "v_max": 1.1, "is_substation": sub}

    def line(lid, fr, to, **kwargs):
        return dict({"id": lid, "from_bus": fr, "to_bus": to, "r": 0.01,
                     "x": 0.01, "f_max": 1.0}, **kwargs)

    return {
        "base_mva": 1.0,
        "loss_cost": 100.0,
        "buses": [bus(1, 0.0, True), bus(2, 0.2), bus(3, 0.3), bus(4, 0.1),
                  bus(5, 0.1), bus(6, 0.0, True)],
        "lines": [
            line(1, 1, 2), line(2, 2, 3), line(3, 6, 4), line(4, 4, 5),
            line(5, 3, 5, switchable=True, initial_closed=False, switch_cost=1.0),
        ],
        "substations": [
            {"bus": b, "p_max": 1.0, "q_min": 0.0, "q_max": 0.0,
             "energy_cost": 1.0, "v_ref": 1.0}
            for b in (1, 6)
        ],
    }


def six_bus_instance():
    return parsing.from_dict(six_bus_doc())


def six_bus_ddu(g, beta, **kwargs):
    return ddu_config(
        g,
        gamma={"default": 0.0, "lines": {1: 0.001}},
        beta={"default": 0.0, "lines": {1: beta}},
        **kwargs,
    )


def ddu_config(g, gamma=0.001, beta=0.0, k_budget=1, digits=7, **kwargs):
    return make_ddu_config(
        g,
        gamma=gamma,
        beta=beta,
        k_budget=k_budget,
        expansion_step=0.01,
        expansion_digits=digits,
        **kwargs,
    )


def random_corpus(n=None, seed=0, min_buses=4, max_buses=7, single_substation=False,
                  switchable_share=0.3):
    """Random radial instances with 0.01-quantized demands and flow limits <= 1.27.

    About switchable_share of the tree lines are switchable and start closed.
    """
    n = corpus_size() if n is None else n
    rng = make_generator(seed)
    out = []
    for _ in range(n):
        n_buses = int(rng.integers(min_buses, max_buses + 1))
        two = (not single_substation) and bool(rng.random() < 0.3)
        out.append(random_instance(
            rng,
            n_buses,
            n_ties=int(rng.integers(0, 3)),
            two_substations=two,
            f_max_range=(0.4, 1.27),
            switchable_share=switchable_share,
        ))
    return out


def random_availability(rng, num_lines, k):
    failed = rng.permutation(num_lines)[:int(rng.integers(0, k + 1))]
    a = np.ones(num_lines, dtype=np.int64)
    a[failed] = 0
    return tuple(int(v) for v in a)


def mixed_beta(rng, g, high=0.1):
    """Per-line beta with roughly a third of the lines decision-independent."""
    beta = rng.uniform(0.0, high, g.num_lines)
    beta[rng.random(g.num_lines) < 1 / 3] = 0.0
    return beta
