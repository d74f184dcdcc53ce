import argparse
import json
import logging
import os

import sys
sys.path.append(".") # an innocent hack to get this to run from the top level

from gridfire.grid.parsing import save_instance
from gridfire.grid.synthetic import random_instance
from gridfire.utils.seed import make_generator


logging.basicConfig(level=logging.INFO)


def main(args):
    rng = make_generator(args.seed)
    os.makedirs(args.output_dir, exist_ok=True)
    for i in range(args.count):
        n_buses = int(rng.integers(args.min_buses, args.max_buses + 1))
        g = random_instance(
            rng,
            n_buses,
            n_ties=args.n_ties,
            two_substations=bool(rng.random() < args.two_substation_fraction),
            loss_cost=args.loss_cost,
            switchable_share=args.switchable_share,
        )
        name = f"synthetic_{i:03d}"
        save_instance(g, os.path.join(args.output_dir, f"{name}.json"))

        ddu = {
            "gamma": args.gamma,
            "beta": args.beta,
            "k_budget": args.k_budget,
            "expansion_step": 0.01,
            "expansion_digits": 8,
        }
        with open(os.path.join(args.output_dir, f"{name}.ddu.json"), "w") as fp:
            fp.write(json.dumps(ddu, indent=4))
        logging.info(
            f"Wrote {name}: {g.num_buses} buses, {g.num_lines} lines, "
            f"{len(g.forbidden_patterns)} rules"
        )


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "output_dir", type=str,
        help="Directory in which to write instance and DDU files"
    )
    parser.add_argument(
        "--count", type=int, default=20,
    )
    parser.add_argument(
        "--min_buses", type=int, default=4,
    )
    parser.add_argument(
        "--max_buses", type=int, default=10,
    )
    parser.add_argument(
        "--n_ties", type=int, default=2,
        help="Switchable tie lines per instance, initially open"
    )
    parser.add_argument(
        "--switchable_share", type=float, default=0.3,
        help="Probability that a tree line is switchable (initially closed)"
    )
    parser.add_argument(
        "--two_substation_fraction", type=float, default=0.3,
    )
    parser.add_argument(
        "--loss_cost", type=float, default=100.0,
    )
    parser.add_argument(
        "--gamma", type=float, default=0.0011,
        help="Decision-independent failure probability of every line"
    )
    parser.add_argument(
        "--beta", type=float, default=0.05,
    )
    parser.add_argument(
        "--k_budget", type=int, default=1,
    )
    parser.add_argument(
        "--seed", type=int, default=0,
    )

    args = parser.parse_args()

    main(args)
