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

"""Solver-independent declaration of linear and mixed-integer programs.

A ModelBuilder collects named variables, named linear constraints and a
linear objective. Backends turn it into arrays with `to_arrays` and report
back a SolveResult keyed by the same names.

Dual values follow one convention for every backend: the dual of a
constraint is the rate of change of the optimal objective (in the model's
own sense) per unit increase of its right-hand side. For `max x s.t. x <= 3`
the dual is +1.
"""
import dataclasses
import enum
import math
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from scipy import sparse

from gridfire import errors


class VarType(enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


class ObjectiveSense(enum.Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


@dataclasses.dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    vtype: VarType


@dataclasses.dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: Tuple[Tuple[str, float], ...]
    sense: Sense
    rhs: float


@dataclasses.dataclass(frozen=True)
class ModelArrays:
    """Dense-vector / sparse-matrix form of a model in minimization sense."""

    c: np.ndarray
    constant: float
    # Rows as lb_row <= A x <= ub_row.
    a: sparse.csr_matrix
    row_lb: np.ndarray
    row_ub: np.ndarray
    var_lb: np.ndarray
    var_ub: np.ndarray
    integrality: np.ndarray
    # +1 when the model minimizes, -1 when c was negated to minimize.
    objective_sign: float


class ModelBuilder:
    """Accumulates variables, constraints and an objective by name."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._variables: Dict[str, Variable] = {}
        self._constraints: Dict[str, Constraint] = {}
        self._objective: Dict[str, float] = {}
        self._objective_constant = 0.0
        self.objective_sense = ObjectiveSense.MINIMIZE

    @property
    def variables(self) -> List[Variable]:
        return list(self._variables.values())

    @property
    def constraints(self) -> List[Constraint]:
        return list(self._constraints.values())

    @property
    def objective(self) -> Dict[str, float]:
        return dict(self._objective)

    @property
    def objective_constant(self) -> float:
        return self._objective_constant

    @property
    def is_mip(self) -> bool:
        return any(v.vtype is VarType.BINARY for v in self._variables.values())

    def has_variable(self, name: str) -> bool:
        return name in self._variables

    def variable(self, name: str) -> Variable:
        return self._variables[name]

    def constraint(self, name: str) -> Constraint:
        return self._constraints[name]

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = math.inf,
        vtype: VarType = VarType.CONTINUOUS,
    ) -> str:
        if name in self._variables:
            raise errors.ModelingError(f"Duplicate variable name {name}")
        if vtype is VarType.BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise errors.ModelingError(f"Variable {name} has lb {lb} > ub {ub}")
        self._variables[name] = Variable(name, float(lb), float(ub), vtype)
        return name

    def add_binary(self, name: str) -> str:
        return self.add_var(name, 0.0, 1.0, VarType.BINARY)

    def fix_var(self, name: str, value: float) -> None:
        v = self._variables[name]
        self._variables[name] = dataclasses.replace(v, lb=float(value), ub=float(value))

    def add_constr(
        self,
        name: str,
        coeffs: Mapping[str, float],
        sense: Sense,
        rhs: float,
    ) -> str:
        if name in self._constraints:
            raise errors.ModelingError(f"Duplicate constraint name {name}")
        for var in coeffs:
            if var not in self._variables:
                raise errors.ModelingError(
                    f"Constraint {name} references undeclared variable {var}"
                )
        terms = tuple((k, float(v)) for k, v in coeffs.items() if v != 0.0)
        self._constraints[name] = Constraint(name, terms, sense, float(rhs))
        return name

    def set_objective(
        self,
        coeffs: Mapping[str, float],
        sense: ObjectiveSense = ObjectiveSense.MINIMIZE,
        constant: float = 0.0,
    ) -> None:
        self._objective = {}
        self._objective_constant = float(constant)
        self.objective_sense = sense
        self.add_objective_terms(coeffs)

    def add_objective_terms(
        self, coeffs: Mapping[str, float], constant: float = 0.0,
    ) -> None:
        for var, c in coeffs.items():
            if var not in self._variables:
                raise errors.ModelingError(
                    f"Objective references undeclared variable {var}"
                )
            self._objective[var] = self._objective.get(var, 0.0) + float(c)
        self._objective_constant += float(constant)

    def evaluate_objective(self, values: Mapping[str, float]) -> float:
        return self._objective_constant + sum(
            c * values[v] for v, c in self._objective.items()
        )

    def to_arrays(self) -> Tuple[ModelArrays, List[str], List[str]]:
        """Returns the model arrays plus variable and constraint name orders."""
        var_names = list(self._variables)
        con_names = list(self._constraints)
        col = {n: j for j, n in enumerate(var_names)}

        sign = 1.0 if self.objective_sense is ObjectiveSense.MINIMIZE else -1.0
        c = np.zeros(len(var_names))
        for v, coef in self._objective.items():
            c[col[v]] = sign * coef

        rows, cols, vals = [], [], []
        row_lb = np.full(len(con_names), -np.inf)
        row_ub = np.full(len(con_names), np.inf)
        for i, n in enumerate(con_names):
            con = self._constraints[n]
            for v, coef in con.coeffs:
                rows.append(i)
                cols.append(col[v])
                vals.append(coef)
            if con.sense is not Sense.GE:
                row_ub[i] = con.rhs
            if con.sense is not Sense.LE:
                row_lb[i] = con.rhs
        a = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(con_names), len(var_names))
        )

        variables = [self._variables[n] for n in var_names]
        arrays = ModelArrays(
            c=c,
            constant=sign * self._objective_constant,
            a=a,
            row_lb=row_lb,
            row_ub=row_ub,
            var_lb=np.array([v.lb for v in variables]),
            var_ub=np.array([v.ub for v in variables]),
            integrality=np.array(
                [1 if v.vtype is VarType.BINARY else 0 for v in variables]
            ),
            objective_sign=sign,
        )
        return arrays, var_names, con_names


@dataclasses.dataclass(frozen=True)
class SolveResult:
    """Outcome of one solve.

    dual_values is populated iff the model has no integer variables and the
    status is optimal. bound_duals holds the matching rates for finite
    variable bounds, keyed by (variable, "lb" | "ub").
    """

    status: Status
    objective_value: Optional[float]
    primal_values: Dict[str, float]
    dual_values: Optional[Dict[str, float]] = None
    bound_duals: Optional[Dict[Tuple[str, str], float]] = None
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def value(self, name: str) -> float:
        return self.primal_values[name]

    def values(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self.primal_values[n] for n in names])

    def dual_objective(self, m: ModelBuilder) -> float:
        """Objective rebuilt from duals; equals objective_value for optimal LPs."""
        if self.dual_values is None:
            raise errors.ModelingError("Dual values are only available for optimal LPs")
        total = m.objective_constant
        for con in m.constraints:
            total += self.dual_values[con.name] * con.rhs
        for (var, side), d in (self.bound_duals or {}).items():
            v = m.variable(var)
            total += d * (v.lb if side == "lb" else v.ub)
        return total
