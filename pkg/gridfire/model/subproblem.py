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

"""Worst-case contingency for a fixed master point (z, psi).

Maximizes H(z, a) - sum_l (psi_l - psi_{L+l}) (1 - a_l) over the support.
The MILP path writes the dual of the recourse LP, whose objective
-sum_r eta_r (r0 + rz z + ra a) is bilinear in (eta, a) only through the
rows gated by availability. Each such product is replaced by w_r = a_l eta_r
with the McCormick envelope for 0 <= eta_r <= U_r. The enumeration path
evaluates every scenario directly.
"""
import dataclasses
import logging
import math
from typing import Dict, Mapping, Optional

import ml_collections as mlc
import numpy as np

from gridfire import config, errors
from gridfire.grid.instance import GridInstance, reactive_demand
from gridfire.model.ambiguity import DduConfig, enumerate_support, support_size
from gridfire.model.recourse import (
    AVAILABILITY_FLOW_LABELS,
    VOLTAGE_DROP_LABELS,
    ContingencyScenario,
    DualSolution,
    RecourseProgram,
    SwitchingLike,
    as_switching_vector,
    build_recourse_program,
    evaluate_recourse,
    evaluate_scenarios,
)
from gridfire.solvers import base
from gridfire.solvers.model_builder import (
    ModelBuilder,
    ObjectiveSense,
    Sense,
    Status,
)
from gridfire.solvers.utils import timing


@dataclasses.dataclass(frozen=True)
class SubproblemSolution:
    scenario: ContingencyScenario
    dual: DualSolution
    objective: float
    # H(z, scenario), the objective before the psi penalty.
    recourse_cost: float


def psi_penalty(psi: np.ndarray, scenario: ContingencyScenario) -> float:
    n = len(psi) // 2
    return float((psi[:n] - psi[n:]) @ (1 - scenario.as_array()))


def default_dual_bounds(g: GridInstance, cfg: Optional[DduConfig] = None) -> Dict[str, float]:
    """Envelope bounds U for the availability-gated multipliers.

    Flow-box multipliers are priced by the balance rows, which are worth at
    most the shedding cost plus the dearest energy. Voltage-drop multipliers
    convert into flow through the smallest impedance on the feeder.
    """
    cost_scale = g.loss_cost + max((s.energy_cost for s in g.substations), default=0.0)
    cost_scale = max(cost_scale, 1e-9)
    tan_max = max(
        (reactive_demand(b) / b.demand_p for b in g.buses if b.demand_p > 0),
        default=0.0,
    )
    impedances = [v for l in g.lines for v in (abs(l.r), abs(l.x)) if v > 0]
    z_min = min(impedances, default=1.0)
    z_max = max(impedances, default=1.0)
    bounds = {
        "voltage": 4.0 * cost_scale * (1.0 + tan_max) / (2.0 * z_min),
        "flow": 4.0 * cost_scale * (1.0 + tan_max) * (1.0 + z_max / z_min),
    }
    if cfg is not None and cfg.dual_big_m is not None:
        bounds.update(cfg.dual_big_m)
    return bounds


def _row_bound(label: int, bounds: Mapping[str, float]) -> float:
    if label in VOLTAGE_DROP_LABELS:
        return bounds["voltage"]
    if label in AVAILABILITY_FLOW_LABELS:
        return bounds["flow"]
    raise errors.ModelingError(f"No envelope bound for multiplier label {label}")


def build_subproblem_milp(
    program: RecourseProgram,
    z: np.ndarray,
    psi: np.ndarray,
    k_budget: int,
    bounds: Mapping[str, float],
    line_ids,
) -> ModelBuilder:
    n = program.num_lines
    psi_net = psi[:n] - psi[n:]
    m = ModelBuilder("subproblem")
    a = [m.add_binary(f"a[{lid}]") for lid in line_ids]

    eta, w = {}, {}
    objective: Dict[str, float] = {}
    for r in program.rows:
        gated = r.a_line is not None
        if r.sense is Sense.EQ:
            lb, ub = -math.inf, math.inf
        else:
            lb, ub = 0.0, (_row_bound(r.label, bounds) if gated else math.inf)
        eta[r.name] = m.add_var(f"eta:{r.name}", lb, ub)
        const = r.const
        if r.z_line is not None:
            const += r.z_coef * z[r.z_line]
        objective[eta[r.name]] = -const
        if gated:
            if r.sense is Sense.EQ:
                raise errors.ModelingError(f"Gated equality row {r.name}")
            u = ub
            w[r.name] = m.add_var(f"w:{r.name}", 0.0, u)
            al = a[r.a_line]
            m.add_constr(f"mc_a:{r.name}", {w[r.name]: 1.0, eta[r.name]: -1.0}, Sense.LE, 0.0)
            m.add_constr(f"mc_b:{r.name}", {w[r.name]: 1.0, al: -u}, Sense.LE, 0.0)
            m.add_constr(f"mc_c:{r.name}",
                         {w[r.name]: 1.0, eta[r.name]: -1.0, al: -u}, Sense.GE, -u)
            objective[w[r.name]] = -r.a_coef

    # c_j + sum_r A_rj eta_r = 0 for every (free) primal variable.
    columns: Dict[str, Dict[str, float]] = {v: {} for v in program.variables}
    for r in program.rows:
        for var, coef in r.coeffs:
            columns[var][eta[r.name]] = coef
    for var in program.variables:
        m.add_constr(f"dfeas:{var}", columns[var], Sense.EQ,
                     -program.costs.get(var, 0.0))

    m.add_constr("card", {x: 1.0 for x in a}, Sense.GE, n - k_budget)

    # -sum_l psi_net_l (1 - a_l)
    for i, x in enumerate(a):
        objective[x] = objective.get(x, 0.0) + float(psi_net[i])
    m.set_objective(objective, ObjectiveSense.MAXIMIZE, constant=-float(psi_net.sum()))
    return m


def _solve_by_enumeration(g, cfg, z, psi, run_cfg) -> SubproblemSolution:
    c = run_cfg.subproblem
    scenarios = enumerate_support(
        g.num_lines, cfg.k_budget, cap=run_cfg.ambiguity.support_cap,
    )
    solutions = evaluate_scenarios(
        g, z, scenarios,
        params=config.solver_params(run_cfg),
        threads=c.threads,
        progress=c.progress,
        desc="subproblem",
    )
    tol = c.calibration_tol
    best = None
    for s, sol in zip(scenarios, solutions):
        value = sol.cost - psi_penalty(psi, s)
        if best is None:
            best = (value, s, sol)
            continue
        margin = tol * (1 + abs(best[0]))
        # Ties go to the lexicographically smallest failed-line set.
        if value > best[0] + margin or (
            value >= best[0] - margin and s.failed < best[1].failed
        ):
            best = (value, s, sol)
    _, s, sol = best
    return SubproblemSolution(
        scenario=s,
        dual=sol.dual,
        objective=sol.cost - psi_penalty(psi, s),
        recourse_cost=sol.cost,
    )


def _saturated_rows(result, program, bounds, rel_tol) -> list:
    """Gated multipliers that ended on their envelope bound."""
    out = []
    for r in program.rows:
        if r.a_line is None or r.sense is Sense.EQ:
            continue
        u = _row_bound(r.label, bounds)
        if result.value(f"eta:{r.name}") >= u * (1.0 - rel_tol):
            out.append(r.name)
    return out


def _enumeration_reference(g, cfg, z, psi, run_cfg) -> Optional[SubproblemSolution]:
    limit = int(run_cfg.subproblem.verify_support_max)
    if support_size(g.num_lines, cfg.k_budget) > limit:
        return None
    return _solve_by_enumeration(g, cfg, z, psi, run_cfg)


def _solve_by_milp(g, cfg, z, psi, run_cfg) -> SubproblemSolution:
    c = run_cfg.subproblem
    program = build_recourse_program(g)
    bounds = default_dual_bounds(g, cfg)
    params = config.solver_params(run_cfg)
    reference = _enumeration_reference(g, cfg, z, psi, run_cfg)

    def rescale(reason):
        logging.warning(
            "Dual bounds %s too tight (%s); scaling by %g",
            bounds, reason, c.recalibration_factor,
        )
        return {k: v * c.recalibration_factor for k, v in bounds.items()}

    for attempt in range(c.max_recalibrations + 1):
        last = attempt == c.max_recalibrations
        m = build_subproblem_milp(program, z, psi, cfg.k_budget, bounds, g.line_ids)
        result = base.solve(m, params)
        if result.status is not Status.OPTIMAL:
            raise errors.SolverError(
                f"Subproblem ended with status {result.status.value}: {result.message}"
            )
        scenario = ContingencyScenario(tuple(
            int(round(result.value(f"a[{lid}]"))) for lid in g.line_ids
        ))
        h_part = result.objective_value + psi_penalty(psi, scenario)
        primal = evaluate_recourse(g, z, scenario, params=params, program=program)
        tol = c.calibration_tol * (1 + abs(primal.cost))
        if h_part > primal.cost + tol:
            raise errors.ModelingError(
                f"Subproblem dual value {h_part:.8g} exceeds H = {primal.cost:.8g} "
                f"at failed lines {[g.lines[i].id for i in scenario.failed]}"
            )
        if primal.cost - h_part > tol:
            bounds = rescale(f"dual {h_part:.8g} < H {primal.cost:.8g}")
            continue

        sol = SubproblemSolution(
            scenario=scenario,
            dual=primal.dual,
            objective=primal.cost - psi_penalty(psi, scenario),
            recourse_cost=primal.cost,
        )
        if reference is not None:
            margin = c.calibration_tol * (1 + abs(reference.objective))
            if reference.objective > sol.objective + margin:
                bounds = rescale(
                    f"missed scenario {[g.lines[i].id for i in reference.scenario.failed]} "
                    f"worth {reference.objective:.8g} > {sol.objective:.8g}"
                )
                continue
            return sol

        saturated = _saturated_rows(result, program, bounds, c.saturation_tol)
        if saturated and not last:
            bounds = rescale(f"{len(saturated)} multipliers on their bound")
            continue
        if saturated:
            logging.warning(
                "Accepting subproblem with %d multipliers on their bound",
                len(saturated),
            )
        return sol

    raise errors.CalibrationError(
        f"Subproblem dual bounds still too tight after {c.max_recalibrations} "
        f"recalibrations; set dual_big_m in the DDU file"
    )


def solve_subproblem(
    g: GridInstance,
    cfg: DduConfig,
    z: SwitchingLike,
    psi: np.ndarray,
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> SubproblemSolution:
    """Exact maximizer of H(z, a) - psi-penalty over the K-failure support.

    The MILP answer is re-solved with wider envelope bounds while it
    disagrees with the primal recourse value, while a gated multiplier sits
    on its bound, or while it falls short of full enumeration on supports of
    at most subproblem.verify_support_max scenarios.

    Raises:
      CalibrationError: The dual envelope bounds stayed too tight.
      ModelingError: The MILP and the primal re-evaluation disagree in the
        direction weak duality forbids.
    """
    if run_cfg is None:
        run_cfg = config.run_config()
    z = as_switching_vector(g, z)
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (2 * g.num_lines,):
        raise errors.PreconditionError(
            f"psi has shape {psi.shape}, expected ({2 * g.num_lines},)"
        )
    mode = run_cfg.subproblem.mode
    with timing(f"subproblem ({mode})"):
        if mode == "enumerate":
            sol = _solve_by_enumeration(g, cfg, z, psi, run_cfg)
        elif mode == "milp":
            sol = _solve_by_milp(g, cfg, z, psi, run_cfg)
        else:
            raise errors.ConfigurationError(f"Unknown subproblem mode '{mode}'")
    logging.info(
        "Worst case fails lines %s: H = %.6f, objective %.6f",
        [g.lines[i].id for i in sol.scenario.failed],
        sol.recourse_cost, sol.objective,
    )
    return sol
