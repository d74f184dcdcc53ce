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

"""Cutting-plane loop between the master and the worst-case subproblem."""
import dataclasses
import json
import logging
import time
from typing import Any, Dict, List, Optional, Sequence

import ml_collections as mlc
import numpy as np

from gridfire import config, errors
from gridfire.grid.instance import GridInstance
from gridfire.model.ambiguity import DduConfig, validate_ddu
from gridfire.model.master import MasterSolution, OptimalityCut, solve_master
from gridfire.model.recourse import ContingencyScenario, DualSolution
from gridfire.model.subproblem import solve_subproblem
from gridfire.utils import provenance


CUT_FILE_FORMAT = "gridfire-cuts"
CUT_FILE_VERSION = 1
ETA_CONVENTION = (
    "rows are A x <= rhs or A x == rhs with rhs affine in (z, a); "
    "eta = -dH/drhs, so inequality multipliers are nonnegative and "
    "H = -sum eta * rhs"
)


@dataclasses.dataclass(frozen=True)
class IterationLog:
    iteration: int
    lb: float
    ub: float
    best_ub: float
    gap: float
    scenario_added: Optional[ContingencyScenario]
    wall_time: float


@dataclasses.dataclass(frozen=True)
class DdroResult:
    solution: MasterSolution
    log: List[IterationLog]
    cuts: List[OptimalityCut]
    lb: float
    best_ub: float
    gap: float
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.log)

    @property
    def objective(self) -> float:
        return self.best_ub

    @property
    def worst_case_expected_value(self) -> float:
        """Best UB minus the first-stage operating cost of the incumbent."""
        return self.best_ub - self.solution.first_stage.operating_cost


def relative_gap(lb: float, ub: float, floor: float = 1.0) -> float:
    return (ub - lb) / max(abs(ub), floor)


def solve_ddro(
    g: GridInstance,
    cfg: DduConfig,
    warm_cuts: Optional[Sequence[OptimalityCut]] = None,
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> DdroResult:
    """Runs master/subproblem iterations until the relative gap is <= epsilon.

    Args:
      g: Grid instance.
      cfg: Ambiguity and decomposition parameters.
      warm_cuts: Cuts from an earlier run on the same instance, e.g. a run
        with beta = 0. Cuts do not depend on beta and stay valid.
      run_cfg: Run configuration (gridfire.config.run_config()).
    Returns:
      A DdroResult. When the iteration cap is hit first, converged is False
      and the best incumbent is returned with the gap it reached.
    """
    if run_cfg is None:
        run_cfg = config.run_config()
    validate_ddu(cfg, g)
    c = run_cfg.driver
    if int(c.max_iterations) < 1:
        raise errors.ConfigurationError(
            f"driver.max_iterations must be at least 1, got {c.max_iterations}"
        )

    cuts: List[OptimalityCut] = list(warm_cuts or [])
    next_id = max((cut.id for cut in cuts), default=-1) + 1
    log: List[IterationLog] = []
    best_ub = np.inf
    incumbent: Optional[MasterSolution] = None
    lb = -np.inf
    gap = np.inf
    converged = False
    tic = time.perf_counter()

    for it in range(c.max_iterations):
        master = solve_master(g, cfg, cuts, run_cfg)
        if master.objective < lb - c.bound_tol * (1 + abs(lb)):
            logging.warning(
                "Lower bound decreased from %.8f to %.8f", lb, master.objective
            )
        lb = max(lb, master.objective)
        sub = solve_subproblem(
            g, cfg, master.first_stage.z_vector(g), master.psi, run_cfg,
        )
        ub = master.objective - master.phi + sub.objective
        if ub < best_ub:
            best_ub = ub
            incumbent = master
        if lb > best_ub + c.bound_tol * (1 + abs(best_ub)):
            raise errors.ModelingError(
                f"Lower bound {lb:.8f} exceeds upper bound {best_ub:.8f}"
            )
        gap = relative_gap(lb, best_ub, c.gap_floor)
        converged = gap <= cfg.epsilon

        added = None
        if not converged:
            added = sub.scenario
            cuts.append(OptimalityCut(next_id, sub.scenario, sub.dual))
            next_id += 1
        entry = IterationLog(
            iteration=it,
            lb=lb,
            ub=ub,
            best_ub=best_ub,
            gap=gap,
            scenario_added=added,
            wall_time=time.perf_counter() - tic,
        )
        log.append(entry)
        logging.info(
            "Iteration %d: LB %.6f, UB %.6f, best UB %.6f, gap %.3e, "
            "failed lines %s, %.2f s",
            it, lb, ub, best_ub, gap,
            [g.lines[i].id for i in sub.scenario.failed], entry.wall_time,
        )
        if converged:
            break
    else:
        logging.warning(
            "Iteration cap of %d reached with gap %.3e (epsilon %.1e)",
            c.max_iterations, gap, cfg.epsilon,
        )

    return DdroResult(
        solution=incumbent,
        log=log,
        cuts=cuts,
        lb=lb,
        best_ub=best_ub,
        gap=gap,
        converged=converged,
    )


def _cut_to_dict(cut: OptimalityCut) -> Dict[str, Any]:
    return {
        "iteration": cut.id,
        "scenario": list(cut.scenario.a),
        "eta": {k: cut.dual.eta[k] for k in sorted(cut.dual.eta)},
    }


def save_cuts(
    cuts: Sequence[OptimalityCut],
    path: str,
    g: GridInstance,
    extra: Optional[Dict[str, Any]] = None,
) -> None:
    doc = {
        "format": CUT_FILE_FORMAT,
        "version": CUT_FILE_VERSION,
        "signature": provenance.instance_signature(g),
        "eta_convention": ETA_CONVENTION,
        **(extra or {}),
        "cuts": [_cut_to_dict(cut) for cut in cuts],
    }
    with open(path, "w") as fp:
        fp.write(json.dumps(doc, indent=4))


def load_cuts(path: str, g: GridInstance) -> List[OptimalityCut]:
    """Reads a cut cache, refusing caches written for another instance."""
    with open(path, "r") as fp:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as e:
            raise errors.ConfigurationError(f"{path} is not valid JSON: {e}")
    if doc.get("format") != CUT_FILE_FORMAT or doc.get("version") != CUT_FILE_VERSION:
        raise errors.ConfigurationError(f"{path} is not a version-1 cut cache")
    provenance.check_signature(g, doc.get("signature", {}), path)

    cuts = []
    for record in doc["cuts"]:
        a = tuple(int(v) for v in record["scenario"])
        if len(a) != g.num_lines or any(v not in (0, 1) for v in a):
            raise errors.SignatureMismatchError(
                f"{path}: cut {record['iteration']} has a malformed scenario"
            )
        cuts.append(OptimalityCut(
            id=int(record["iteration"]),
            scenario=ContingencyScenario(a),
            dual=DualSolution({k: float(v) for k, v in record["eta"].items()}),
        ))
    logging.info("Loaded %d cuts from %s", len(cuts), path)
    return cuts
