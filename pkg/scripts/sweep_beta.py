import argparse
import logging
import os
import time

import sys
sys.path.append(".") # an innocent hack to get this to run from the top level

import numpy as np
import pandas as pd

from gridfire import config
from gridfire.grid.parsing import load_instance
from gridfire.model import ambiguity, driver


logging.basicConfig(level=logging.INFO)


def run_setup(g, cfg, run_cfg, warm_cuts=None):
    t = time.perf_counter()
    result = driver.solve_ddro(g, cfg, warm_cuts=warm_cuts, run_cfg=run_cfg)
    wall_time = time.perf_counter() - t
    fs = result.solution.first_stage
    row = {
        "energy": fs.cost_energy,
        "switching": fs.cost_switch,
        "deficit": fs.cost_shed,
        "worst_case_expected_value": result.worst_case_expected_value,
        "objective": result.objective,
        "iterations": result.iterations,
        "wall_time": wall_time,
        "switching_actions": len(fs.switching_actions(g)),
        "converged": result.converged,
    }
    return row, result


def main(args):
    run_cfg = config.run_config(args.config_preset, threads=args.threads)
    g = load_instance(args.instance)
    base_cfg = ambiguity.load_ddu(args.ddu, g)

    # beta = 0 is shared by every level; its cuts seed the warm runs.
    baseline, baseline_result = run_setup(
        g, base_cfg.with_beta(np.zeros(g.num_lines)), run_cfg,
    )

    rows = []
    for level in args.levels:
        beta = ambiguity.beta_from_max_probability(
            g, level, base_cfg.gamma, args.at_risk_lines,
        )
        cfg = base_cfg.with_beta(beta)
        cold, _ = run_setup(g, cfg, run_cfg)
        warm, _ = run_setup(g, cfg, run_cfg, warm_cuts=baseline_result.cuts)
        for setup, row in (("no_ddu", baseline), ("ddu", cold), ("ddu_warm", warm)):
            rows.append({"max_failure_probability": level, "setup": setup, **row})
        logging.info(
            f"Level {level}: objective {cold['objective']:.4f} cold, "
            f"{warm['objective']:.4f} warm in {warm['iterations']} iterations"
        )

    os.makedirs(os.path.dirname(os.path.abspath(args.output_path)), exist_ok=True)
    pd.DataFrame(rows).to_csv(args.output_path, index=False)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "instance", type=str, help="Grid instance JSON file"
    )
    parser.add_argument(
        "ddu", type=str,
        help="DDU file supplying gamma, K and the expansion; its beta is ignored"
    )
    parser.add_argument(
        "output_path", type=str, help="Path for .csv output"
    )
    parser.add_argument(
        "--levels", type=float, nargs="+", default=[0.01, 0.02, 0.05, 0.1],
        help="Maximum failure probabilities gamma + beta * f_max to sweep"
    )
    parser.add_argument(
        "--at_risk_lines", type=int, nargs="*", default=None,
        help="Line ids exposed to wildfire risk; all lines by default"
    )
    parser.add_argument(
        "--threads", type=int, default=1,
    )
    parser.add_argument(
        "--config_preset", type=str, default="default",
    )

    args = parser.parse_args()

    main(args)
