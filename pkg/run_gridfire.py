# Copyright 2024 The gridfire Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import argparse
import dataclasses
import json
import logging
import os
import sys

import pandas as pd

from gridfire import config, errors
from gridfire.evaluation import montecarlo
from gridfire.grid import radiality
from gridfire.grid.parsing import load_instance, save_instance
from gridfire.model import ambiguity, driver
from gridfire.utils import provenance


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_ITERATION_CAP = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report_error("UsageError", message)
        sys.exit(EXIT_USAGE)


def _report_error(name, message):
    sys.stderr.write(json.dumps({"error": name, "message": message}) + "\n")


def _with_rules(g):
    if g.forbidden_patterns or not g.switchable_positions:
        return g
    logging.info("Instance carries no radiality rules; generating them")
    return dataclasses.replace(
        g, forbidden_patterns=radiality.generate_radiality_rules(g)
    )


def _provenance(g, cfg, run_cfg):
    payload = {"run": run_cfg.to_dict()}
    if cfg is not None:
        payload["ddu"] = cfg.to_dict(g)
    signature = provenance.instance_signature(g)
    return {
        "config_hash": provenance.config_hash(payload),
        "instance_topology_hash": signature["topology_hash"],
        "num_buses": signature["num_buses"],
        "num_lines": signature["num_lines"],
    }


def _write_json(path, doc):
    with open(path, "w") as fp:
        fp.write(json.dumps(doc, indent=4))


def _solution_doc(g, cfg, result, header):
    fs = result.solution.first_stage
    f_p = fs.f_p_vector(g)
    mu = ambiguity.mean_bound(cfg, f_p).mu_upper
    z = fs.z_vector(g)
    return {
        **header,
        "converged": result.converged,
        "iterations": result.iterations,
        "lb": result.lb,
        "best_ub": result.best_ub,
        "gap": result.gap,
        "costs": {
            "energy": fs.cost_energy,
            "switching": fs.cost_switch,
            "deficit": fs.cost_shed,
            "worst_case_expected_value": result.worst_case_expected_value,
            "total": result.objective,
        },
        "switching": {str(l.id): int(z[i]) for i, l in enumerate(g.lines)},
        "actions": [
            {"line_id": lid, "initial": init, "final": final}
            for lid, init, final in fs.switching_actions(g)
        ],
        "flows": [
            {
                "line_id": l.id,
                "f_p": fs.f_p[l.id],
                "f_q": fs.f_q[l.id],
                "mu_upper": float(mu[i]),
            }
            for i, l in enumerate(g.lines)
        ],
        "psi": result.solution.psi.tolist(),
        "phi": result.solution.phi,
    }


def _write_iterations(path, log, header):
    df = pd.DataFrame([
        {
            "iteration": e.iteration,
            "lb": e.lb,
            "ub": e.ub,
            "best_ub": e.best_ub,
            "gap": e.gap,
            "failed_positions": (
                " ".join(str(i) for i in e.scenario_added.failed)
                if e.scenario_added is not None else ""
            ),
            "wall_time": e.wall_time,
        }
        for e in log
    ])
    with open(path, "w") as fp:
        fp.write(provenance.header_lines(header))
        df.to_csv(fp, index=False)


def cmd_solve(args, run_cfg):
    g = _with_rules(load_instance(args.instance))
    cfg = ambiguity.load_ddu(args.ddu, g)
    warm = driver.load_cuts(args.warm_start, g) if args.warm_start else None
    result = driver.solve_ddro(g, cfg, warm_cuts=warm, run_cfg=run_cfg)

    header = _provenance(g, cfg, run_cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(
        os.path.join(args.out, "solution.json"),
        _solution_doc(g, cfg, result, header),
    )
    _write_iterations(os.path.join(args.out, "iterations.csv"), result.log, header)
    driver.save_cuts(
        result.cuts, os.path.join(args.out, "cuts.json"), g,
        extra={"config_hash": header["config_hash"]},
    )
    actions = result.solution.first_stage.switching_actions(g)
    logging.info(
        "Objective %.6f with %d switching actions, written to %s",
        result.objective, len(actions), args.out,
    )
    return EXIT_OK if result.converged else EXIT_ITERATION_CAP


def cmd_oracle(args, run_cfg):
    g = _with_rules(load_instance(args.instance))
    cfg = ambiguity.load_ddu(args.ddu, g)
    size = ambiguity.support_size(g.num_lines, cfg.k_budget)
    if size > run_cfg.ambiguity.support_cap:
        raise errors.SupportTooLargeError(
            f"Support has {size} scenarios, above the cap of "
            f"{run_cfg.ambiguity.support_cap}; the oracle refuses to enumerate it"
        )
    warm = driver.load_cuts(args.warm_start, g) if args.warm_start else None
    result = driver.solve_ddro(g, cfg, warm_cuts=warm, run_cfg=run_cfg)
    fs = result.solution.first_stage
    oracle = ambiguity.worst_case_expectation_oracle(
        g, cfg, fs.z_vector(g), fs.f_p_vector(g), run_cfg,
    )
    oracle_value = fs.operating_cost + oracle.value
    difference = result.objective - oracle_value
    relative = abs(difference) / max(abs(oracle_value), run_cfg.driver.gap_floor)
    within = relative <= cfg.epsilon

    header = _provenance(g, cfg, run_cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "oracle.json"), {
        **header,
        "decomposition": result.objective,
        "oracle": oracle_value,
        "difference": difference,
        "relative_difference": relative,
        "epsilon": cfg.epsilon,
        "within_tolerance": within,
        "converged": result.converged,
        "worst_distribution": [
            {"failed_lines": [g.lines[i].id for i in s.failed], "probability": q}
            for s, q in sorted(oracle.worst_q.items(), key=lambda kv: kv[0].failed)
        ],
    })
    if not within:
        logging.error(
            "Decomposition %.8f and oracle %.8f differ by %.3e relative",
            result.objective, oracle_value, relative,
        )
        return EXIT_ERROR
    return EXIT_OK if result.converged else EXIT_ITERATION_CAP


def _parse_z(text):
    z = {}
    for item in text.split(","):
        try:
            lid, status = item.split("=")
            z[int(lid)] = int(status)
        except ValueError:
            raise errors.ConfigurationError(
                f"--z expects id=status pairs, got '{item}'"
            )
    return z


def _switching_from_solution(path, g):
    with open(path, "r") as fp:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as e:
            raise errors.ConfigurationError(f"{path} is not valid JSON: {e}")
    if doc.get("instance_topology_hash") != provenance.instance_signature(g)["topology_hash"]:
        raise errors.SignatureMismatchError(
            f"{path} was written for a different instance"
        )
    return {
        l.id: int(doc["switching"][str(l.id)]) for l in g.lines if l.switchable
    }


def cmd_simulate(args, run_cfg):
    g = _with_rules(load_instance(args.instance))
    cfg = ambiguity.load_ddu(args.ddu, g)
    if args.solution:
        z = _switching_from_solution(args.solution, g)
    elif args.z:
        z = _parse_z(args.z)
    else:
        raise errors.ConfigurationError("simulate needs --solution or --z")

    report = montecarlo.simulate(g, cfg, z, n=args.samples, seed=args.seed,
                                 run_cfg=run_cfg)
    header = _provenance(g, cfg, run_cfg)
    montecarlo.write_report(report, g, args.out, header)
    return EXIT_OK


def cmd_rules(args, run_cfg):
    g = load_instance(args.instance)
    rules = radiality.generate_radiality_rules(g)
    print(json.dumps([list(r) for r in rules]))
    header = _provenance(g, None, run_cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "rules.json"), {
        **header,
        "forbidden_patterns": [list(r) for r in rules],
    })
    if args.rewrite:
        save_instance(
            dataclasses.replace(g, forbidden_patterns=rules),
            os.path.join(args.out, os.path.basename(args.instance)),
        )
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "rules": cmd_rules,
}


def main(args):
    run_cfg = config.run_config(
        args.config_preset, threads=args.threads, quiet=args.quiet,
    )
    if args.samples is None:
        args.samples = run_cfg.montecarlo.samples
    if args.seed is None:
        args.seed = run_cfg.montecarlo.seed
    return COMMANDS[args.mode](args, run_cfg)


def build_parser():
    parser = _Parser(prog="gridfire")
    parser.add_argument(
        "mode", type=str, choices=tuple(COMMANDS),
    )
    parser.add_argument(
        "--instance", type=str, required=True,
        help="""Path to the grid instance JSON file"""
    )
    parser.add_argument(
        "--ddu", type=str, default=None,
        help="""Path to the DDU parameter file (JSON or YAML). Required by
             solve, oracle and simulate"""
    )
    parser.add_argument(
        "--warm_start", type=str, default=None,
        help="""Cut cache from an earlier run on the same instance, typically
             the beta = 0 run"""
    )
    parser.add_argument(
        "--solution", type=str, default=None,
        help="""solution.json whose switching decisions simulate evaluates"""
    )
    parser.add_argument(
        "--z", type=str, default=None,
        help="""Explicit switching for simulate as id=status pairs, e.g.
             7=1,8=0"""
    )
    parser.add_argument(
        "--seed", type=int, default=None,
    )
    parser.add_argument(
        "--samples", type=int, default=None,
    )
    parser.add_argument(
        "--threads", type=int, default=None,
        help="""Worker processes for scenario evaluation"""
    )
    parser.add_argument(
        "--out", type=str, required=True,
        help="""Directory in which to write the artifacts"""
    )
    parser.add_argument(
        "--rewrite", action="store_true", default=False,
        help="""With rules, also write the instance with its rules embedded"""
    )
    parser.add_argument(
        "--config_preset", type=str, default="default",
        choices=("default", "enumerate", "cbc", "fast"),
    )
    parser.add_argument(
        "--log_level", type=str, default="INFO",
    )
    parser.add_argument(
        "--quiet", action="store_true", default=False,
        help="""Disable progress bars"""
    )
    return parser


def cli(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.mode != "rules" and args.ddu is None:
        _report_error("UsageError", f"{args.mode} needs --ddu")
        return EXIT_USAGE
    try:
        return main(args)
    except errors.ConfigurationError as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_USAGE
    except errors.Error as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_ERROR
    except OSError as e:
        _report_error(type(e).__name__, str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(cli())
