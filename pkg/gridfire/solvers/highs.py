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

"""HiGHS through scipy.optimize: linprog for LPs, milp for MILPs."""
from typing import Any, Mapping

import numpy as np
from scipy import optimize, sparse

from gridfire import errors
from gridfire.solvers import base, utils
from gridfire.solvers.model_builder import ModelBuilder, SolveResult, Status


_LINPROG_STATUS = {
    0: Status.OPTIMAL,
    1: Status.LIMIT,
    2: Status.INFEASIBLE,
    3: Status.UNBOUNDED,
}
_MILP_STATUS = {
    0: Status.OPTIMAL,
    1: Status.LIMIT,
    2: Status.INFEASIBLE,
    3: Status.UNBOUNDED,
}


def _solve_without_variables(m: ModelBuilder) -> SolveResult:
    for con in m.constraints:
        ok = (
            (con.sense.value == "<=" and 0.0 <= con.rhs)
            or (con.sense.value == ">=" and 0.0 >= con.rhs)
            or (con.sense.value == "==" and con.rhs == 0.0)
        )
        if not ok:
            return SolveResult(Status.INFEASIBLE, None, {}, message="empty model")
    return SolveResult(
        Status.OPTIMAL,
        m.objective_constant,
        {},
        dual_values={con.name: 0.0 for con in m.constraints},
        bound_duals={},
        message="empty model",
    )


class HighsBackend(base.Backend):
    """scipy's bundled HiGHS solvers."""

    name = "highs"

    def solve(self, m: ModelBuilder, params: Mapping[str, Any]) -> SolveResult:
        if len(m.variables) == 0:
            return _solve_without_variables(m)
        if m.is_mip:
            return self._solve_milp(m, params)
        return self._solve_lp(m, params)

    def _solve_lp(self, m: ModelBuilder, params: Mapping[str, Any]) -> SolveResult:
        arrays, var_names, con_names = m.to_arrays()
        a = arrays.a.tocsr()

        eq = np.isfinite(arrays.row_lb) & (arrays.row_lb == arrays.row_ub)
        upper = np.isfinite(arrays.row_ub) & ~eq
        lower = np.isfinite(arrays.row_lb) & ~eq
        up_idx = np.flatnonzero(upper)
        lo_idx = np.flatnonzero(lower)
        eq_idx = np.flatnonzero(eq)

        a_ub = None
        b_ub = None
        if len(up_idx) + len(lo_idx) > 0:
            a_ub = sparse.vstack([a[up_idx], -a[lo_idx]]).tocsr()
            b_ub = np.concatenate([arrays.row_ub[up_idx], -arrays.row_lb[lo_idx]])
        a_eq = a[eq_idx] if len(eq_idx) > 0 else None
        b_eq = arrays.row_ub[eq_idx] if len(eq_idx) > 0 else None

        options = {
            "presolve": True,
            "primal_feasibility_tolerance": utils.param(params, "feasibility_tol", 1e-8),
            "dual_feasibility_tolerance": utils.param(params, "optimality_tol", 1e-8),
        }
        time_limit = utils.param(params, "time_limit")
        if time_limit is not None:
            options["time_limit"] = float(time_limit)

        res = optimize.linprog(
            arrays.c,
            A_ub=a_ub,
            b_ub=b_ub,
            A_eq=a_eq,
            b_eq=b_eq,
            bounds=np.column_stack([arrays.var_lb, arrays.var_ub]),
            method="highs",
            options=options,
        )
        if res.status not in _LINPROG_STATUS:
            raise errors.SolverError(
                f"HiGHS failed on {m.name} (status {res.status}): {res.message}"
            )
        status = _LINPROG_STATUS[res.status]
        if status is not Status.OPTIMAL:
            return SolveResult(status, None, {}, message=res.message)

        sign = arrays.objective_sign
        duals = np.zeros(len(con_names))
        ineq = res.ineqlin.marginals if a_ub is not None else np.zeros(0)
        duals[up_idx] += sign * ineq[:len(up_idx)]
        duals[lo_idx] -= sign * ineq[len(up_idx):]
        if a_eq is not None:
            duals[eq_idx] = sign * res.eqlin.marginals

        bound_duals = {}
        for j, n in enumerate(var_names):
            if np.isfinite(arrays.var_lb[j]):
                bound_duals[(n, "lb")] = sign * float(res.lower.marginals[j])
            if np.isfinite(arrays.var_ub[j]):
                bound_duals[(n, "ub")] = sign * float(res.upper.marginals[j])

        return SolveResult(
            Status.OPTIMAL,
            sign * float(res.fun) + m.objective_constant,
            {n: float(x) for n, x in zip(var_names, res.x)},
            dual_values={n: float(d) for n, d in zip(con_names, duals)},
            bound_duals=bound_duals,
            message=res.message,
        )

    def _solve_milp(self, m: ModelBuilder, params: Mapping[str, Any]) -> SolveResult:
        arrays, var_names, _ = m.to_arrays()
        constraints = None
        if arrays.a.shape[0] > 0:
            constraints = optimize.LinearConstraint(
                arrays.a, arrays.row_lb, arrays.row_ub
            )
        options = {
            "disp": False,
            "presolve": True,
            "mip_rel_gap": utils.param(params, "mip_rel_gap", 1e-9),
        }
        time_limit = utils.param(params, "time_limit")
        if time_limit is not None:
            options["time_limit"] = float(time_limit)

        res = optimize.milp(
            arrays.c,
            integrality=arrays.integrality,
            bounds=optimize.Bounds(arrays.var_lb, arrays.var_ub),
            constraints=constraints,
            options=options,
        )
        if res.status not in _MILP_STATUS:
            raise errors.SolverError(
                f"HiGHS failed on {m.name} (status {res.status}): {res.message}"
            )
        status = _MILP_STATUS[res.status]
        if res.x is None:
            return SolveResult(status, None, {}, message=res.message)

        x = np.asarray(res.x, dtype=float)
        # Snap binaries; HiGHS reports them within its integrality tolerance.
        binary = arrays.integrality == 1
        x[binary] = np.round(x[binary])
        return SolveResult(
            status,
            arrays.objective_sign * float(res.fun) + m.objective_constant,
            {n: float(v) for n, v in zip(var_names, x)},
            message=res.message,
        )


base.register_backend(HighsBackend.name, HighsBackend)
