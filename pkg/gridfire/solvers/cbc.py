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

"""COIN-OR CBC/CLP through python-mip. Optional: install with the `mip` extra."""
import logging
import math
from typing import Any, Mapping

from gridfire import errors
from gridfire.solvers import base, utils
from gridfire.solvers.model_builder import (
    ModelBuilder,
    ObjectiveSense,
    Sense,
    SolveResult,
    Status,
    VarType,
)

try:
    import mip
except ImportError:  # pragma: no cover
    mip = None


class CbcBackend(base.Backend):
    """python-mip wrapper. Duals come from CLP row prices and reduced costs."""

    name = "cbc"

    def __init__(self):
        if mip is None:
            raise errors.BackendUnavailableError(
                "The 'cbc' backend needs python-mip (pip install gridfire[mip])"
            )

    def solve(self, m: ModelBuilder, params: Mapping[str, Any]) -> SolveResult:
        sense = (
            mip.MAXIMIZE if m.objective_sense is ObjectiveSense.MAXIMIZE
            else mip.MINIMIZE
        )
        model = mip.Model(name=m.name, sense=sense, solver_name=mip.CBC)
        model.verbose = 0
        model.max_mip_gap = utils.param(params, "mip_rel_gap", 1e-9)
        model.infeas_tol = utils.param(params, "feasibility_tol", 1e-8)
        model.opt_tol = utils.param(params, "optimality_tol", 1e-8)
        threads = utils.param(params, "threads", 1)
        model.threads = int(threads)

        var = {}
        for v in m.variables:
            var[v.name] = model.add_var(
                name=v.name,
                lb=v.lb if math.isfinite(v.lb) else -mip.INF,
                ub=v.ub if math.isfinite(v.ub) else mip.INF,
                var_type=mip.BINARY if v.vtype is VarType.BINARY else mip.CONTINUOUS,
            )
        rows = {}
        for con in m.constraints:
            expr = mip.xsum(c * var[n] for n, c in con.coeffs)
            if con.sense is Sense.LE:
                rows[con.name] = model.add_constr(expr <= con.rhs, name=con.name)
            elif con.sense is Sense.GE:
                rows[con.name] = model.add_constr(expr >= con.rhs, name=con.name)
            else:
                rows[con.name] = model.add_constr(expr == con.rhs, name=con.name)
        model.objective = mip.xsum(c * var[n] for n, c in m.objective.items())

        time_limit = utils.param(params, "time_limit")
        if time_limit is not None:
            status = model.optimize(max_seconds=float(time_limit))
        else:
            status = model.optimize()

        if status == mip.OptimizationStatus.ERROR:
            raise errors.SolverError(f"CBC failed on {m.name}")
        if status == mip.OptimizationStatus.INFEASIBLE:
            return SolveResult(Status.INFEASIBLE, None, {})
        if status == mip.OptimizationStatus.UNBOUNDED:
            return SolveResult(Status.UNBOUNDED, None, {})
        if status not in (mip.OptimizationStatus.OPTIMAL, mip.OptimizationStatus.FEASIBLE):
            return SolveResult(Status.LIMIT, None, {}, message=str(status))

        primal = {n: float(v.x) for n, v in var.items()}
        objective = model.objective_value + m.objective_constant
        if status == mip.OptimizationStatus.FEASIBLE or m.is_mip:
            return SolveResult(
                Status.OPTIMAL if status == mip.OptimizationStatus.OPTIMAL else Status.LIMIT,
                objective,
                primal,
            )

        duals = {n: float(r.pi) for n, r in rows.items()}
        bound_duals = {}
        for v in m.variables:
            rc = float(var[v.name].rc)
            if rc == 0.0:
                continue
            at_lb = math.isfinite(v.lb) and abs(primal[v.name] - v.lb) <= 1e-9
            bound_duals[(v.name, "lb" if at_lb else "ub")] = rc

        # CLP reports prices in its internal minimization sense for some
        # builds; orient them so they rebuild the objective.
        result = SolveResult(Status.OPTIMAL, objective, primal, duals, bound_duals)
        rebuilt = result.dual_objective(m) - m.objective_constant
        target = objective - m.objective_constant
        if abs(rebuilt + target) < abs(rebuilt - target):
            logging.debug("Flipping CLP dual signs for %s", m.name)
            result = SolveResult(
                Status.OPTIMAL, objective, primal,
                {k: -d for k, d in duals.items()},
                {k: -d for k, d in bound_duals.items()},
            )
        return result


base.register_backend(CbcBackend.name, CbcBackend)
