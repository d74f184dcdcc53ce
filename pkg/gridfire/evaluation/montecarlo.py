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

"""Out-of-sample evaluation of a fixed switching decision.

The switching is frozen, the first stage re-solved for its flows, and the
flow-dependent outage probabilities min(1, gamma + beta |f_p|) sampled as
independent Bernoulli trials over all lines. Simultaneous failures are not
limited by the K budget here.
"""
import dataclasses
import json
import logging
import math
import os
from typing import Any, Dict, List, Mapping, Optional, Tuple

import ml_collections as mlc
import numpy as np
import pandas as pd

from gridfire import config, errors
from gridfire.grid import radiality
from gridfire.grid.instance import GridInstance, reactive_demand, total_demand
from gridfire.model.ambiguity import DduConfig
from gridfire.model.pre_contingency import (
    FirstStageSolution,
    build_first_stage,
    extract_first_stage,
    fix_switching,
)
from gridfire.model.recourse import (
    ContingencyScenario,
    SwitchingLike,
    as_switching_vector,
    evaluate_scenarios,
)
from gridfire.solvers import base
from gridfire.solvers.model_builder import ModelBuilder
from gridfire.solvers.utils import timing
from gridfire.utils import provenance
from gridfire.utils.seed import GENERATOR, make_generator


@dataclasses.dataclass(frozen=True)
class OutOfSampleReport:
    # Per line position.
    probabilities: np.ndarray
    empirical_frequencies: np.ndarray
    samples: int
    seed: int
    cvar_level: float
    # Per scenario.
    loss_of_load_pct: np.ndarray
    reactive_loss_pct: np.ndarray
    costs: np.ndarray
    mean_pct: float
    cvar_pct: float
    mean_reactive_pct: float
    mean_cost: float
    cvar_cost: float
    # (probability, loss %) with loss nonincreasing.
    inverse_cdf: List[Tuple[float, float]]
    unique_scenarios: int
    first_stage: FirstStageSolution

    def summary(self) -> Dict[str, Any]:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "generator": GENERATOR,
            "cvar_level": self.cvar_level,
            "mean_loss_pct": self.mean_pct,
            "cvar_loss_pct": self.cvar_pct,
            "mean_reactive_loss_pct": self.mean_reactive_pct,
            "mean_cost": self.mean_cost,
            "cvar_cost": self.cvar_cost,
            "unique_scenarios": self.unique_scenarios,
        }


def switching_map(g: GridInstance, z: SwitchingLike) -> Dict[int, int]:
    """Validates z and returns it keyed by switchable line id."""
    vec = as_switching_vector(g, z)
    for i, l in enumerate(g.lines):
        if not l.switchable and vec[i] != 1:
            raise errors.PreconditionError(f"line {l.id} is not switchable")
        if vec[i] not in (0, 1):
            raise errors.PreconditionError(f"line {l.id}: status {vec[i]} is not 0/1")
    return {l.id: int(vec[i]) for i, l in enumerate(g.lines) if l.switchable}


def frozen_flow_solve(
    g: GridInstance,
    z: SwitchingLike,
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> FirstStageSolution:
    """First-stage optimum with the switching pinned to z."""
    if run_cfg is None:
        run_cfg = config.run_config()
    z_sw = switching_map(g, z)
    violated = radiality.violated_patterns(g.forbidden_patterns, z_sw)
    if violated:
        raise errors.PreconditionError(
            f"Switching closes forbidden patterns {violated}"
        )
    m = ModelBuilder("frozen_flow")
    h = build_first_stage(g, m)
    fix_switching(g, m, h, z_sw)
    result = base.solve(m, config.solver_params(run_cfg))
    return extract_first_stage(result, h)


def line_failure_probabilities(cfg: DduConfig, f_p: np.ndarray) -> np.ndarray:
    p = cfg.gamma + cfg.beta * np.abs(np.asarray(f_p, dtype=np.float64))
    return np.clip(p, 0.0, 1.0)


def tail_mean(values: np.ndarray, level: float) -> float:
    """Mean of the worst ceil((1 - level) n) values."""
    n = len(values)
    k = max(1, math.ceil(round((1.0 - level) * n, 9)))
    return float(np.sort(values)[::-1][:k].mean())


def simulate(
    g: GridInstance,
    cfg: DduConfig,
    z: SwitchingLike,
    n: Optional[int] = None,
    seed: Optional[int] = None,
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> OutOfSampleReport:
    """Samples n outage scenarios under z and reports loss of load.

    The same seed gives the same outage draws for any z with the same
    probabilities, so compared solutions share random numbers line by line.
    """
    if run_cfg is None:
        run_cfg = config.run_config()
    c = run_cfg.montecarlo
    n = c.samples if n is None else n
    seed = c.seed if seed is None else seed
    if n < 1:
        raise errors.PreconditionError(f"Sample count must be positive, got {n}")

    fs = frozen_flow_solve(g, z, run_cfg)
    probabilities = line_failure_probabilities(cfg, fs.f_p_vector(g))
    rng = make_generator(seed)
    failed = rng.random((n, g.num_lines)) < probabilities[None, :]

    index: Dict[Tuple[int, ...], int] = {}
    unique: List[ContingencyScenario] = []
    rows = []
    for draw in failed:
        a = tuple(int(v) for v in ~draw)
        if a not in index:
            index[a] = len(unique)
            unique.append(ContingencyScenario(a))
        rows.append(index[a])

    with timing(f"Monte-Carlo evaluation of {len(unique)} distinct scenarios"):
        solutions = evaluate_scenarios(
            g, fs.z_vector(g), unique,
            params=config.solver_params(run_cfg),
            threads=c.threads,
            progress=c.progress,
            chunksize=c.chunksize,
            desc="montecarlo",
        )

    d_p = total_demand(g)
    d_q = sum(reactive_demand(b) for b in g.buses)
    shed_p = np.array([sum(s.shed_p_minus.values()) for s in solutions])
    shed_q = np.array([sum(s.shed_q_minus.values()) for s in solutions])
    cost = np.array([s.cost for s in solutions])
    rows = np.array(rows, dtype=np.int64)
    loss = 100.0 * shed_p[rows] / d_p if d_p > 0 else np.zeros(n)
    reactive = 100.0 * shed_q[rows] / d_q if d_q > 0 else np.zeros(n)
    loss = np.clip(loss, 0.0, 100.0)
    costs = cost[rows]

    ordered = np.sort(loss)[::-1]
    inverse_cdf = [((i + 1) / n, float(v)) for i, v in enumerate(ordered)]
    report = OutOfSampleReport(
        probabilities=probabilities,
        empirical_frequencies=failed.mean(axis=0),
        samples=n,
        seed=seed,
        cvar_level=c.cvar_level,
        loss_of_load_pct=loss,
        reactive_loss_pct=reactive,
        costs=costs,
        mean_pct=float(loss.mean()),
        cvar_pct=tail_mean(loss, c.cvar_level),
        mean_reactive_pct=float(reactive.mean()),
        mean_cost=float(costs.mean()),
        cvar_cost=tail_mean(costs, c.cvar_level),
        inverse_cdf=inverse_cdf,
        unique_scenarios=len(unique),
        first_stage=fs,
    )
    logging.info(
        "Out-of-sample over %d samples: mean loss %.4f%%, CVaR %.4f%%, "
        "mean cost %.4f",
        n, report.mean_pct, report.cvar_pct, report.mean_cost,
    )
    return report


def write_report(
    report: OutOfSampleReport,
    g: GridInstance,
    out_dir: str,
    header: Mapping[str, Any],
) -> Dict[str, str]:
    """Writes scenario, inverse-CDF and per-line CSVs plus a JSON summary."""
    os.makedirs(out_dir, exist_ok=True)
    frames = {
        "scenarios.csv": pd.DataFrame({
            "scenario_id": np.arange(report.samples),
            "loss_pct": report.loss_of_load_pct,
            "reactive_loss_pct": report.reactive_loss_pct,
            "cost": report.costs,
        }),
        "inverse_cdf.csv": pd.DataFrame(
            report.inverse_cdf, columns=["probability", "loss_pct"],
        ),
        "lines.csv": pd.DataFrame({
            "line_id": list(g.line_ids),
            "f_p": report.first_stage.f_p_vector(g),
            "probability": report.probabilities,
            "empirical_frequency": report.empirical_frequencies,
        }),
    }
    paths = {}
    for name, df in frames.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as fp:
            fp.write(provenance.header_lines(header))
            df.to_csv(fp, index=False)
        paths[name] = path

    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fp:
        fp.write(json.dumps({
            **dict(header),
            **report.summary(),
            "probabilities": dict(zip(
                [str(i) for i in g.line_ids], report.probabilities.tolist()
            )),
        }, indent=4))
    paths["summary.json"] = path
    return paths
