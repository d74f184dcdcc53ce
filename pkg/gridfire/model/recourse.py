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

"""Post-contingency re-dispatch H(z, a) and its dual.

Every row of the recourse LP is stored as `A x <= rhs` or `A x == rhs` with
rhs affine in the first-stage switching z and the availability a:

    rhs = const + z_coef * z[z_line] + a_coef * a[a_line]

The dual multiplier of a row is eta = -dH/d(rhs), so inequality duals are
nonnegative and H = -sum_r eta_r * rhs_r(z, a). Each row also carries the
label (1..31) of the multiplier family it belongs to.
"""
import dataclasses
import math
import sys
from functools import partial
from multiprocessing import Pool
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from gridfire import errors
from gridfire.grid.instance import (
    GridInstance,
    full_switching,
    reactive_demand,
    voltage_big_m,
)
from gridfire.model.pre_contingency import OCTAGON
from gridfire.solvers import base
from gridfire.solvers.model_builder import (
    ModelBuilder,
    ObjectiveSense,
    Sense,
    Status,
)


# Row family -> multiplier label.
ETA_LABELS = {
    "bal_p_sub": 1,
    "bal_q_sub": 2,
    "bal_p": 3,
    "bal_q": 4,
    "vdrop_sw_hi": 5,
    "vdrop_sw_lo": 6,
    "vdrop_hi": 7,
    "vdrop_lo": 8,
    "v_lo": 9,
    "v_hi": 10,
    "fsw_p_lo": 11,
    "fsw_p_hi": 12,
    "fsw_q_lo": 13,
    "fsw_q_hi": 14,
    "fav_p_lo": 15,
    "fav_p_hi": 16,
    "fav_q_lo": 17,
    "fav_q_hi": 18,
    "oct_pos": 19,
    "oct_neg": 20,
    "ptr_lo": 21,
    "ptr_hi": 22,
    "qtr_lo": 23,
    "qtr_hi": 24,
    "v_ref": 25,
    "dp_plus_nn": 26,
    "dp_minus_nn": 27,
    "dq_plus_nn": 28,
    "dq_minus_nn": 29,
    "dp_minus_cap": 30,
    "dq_minus_cap": 31,
}
VOLTAGE_DROP_LABELS = (5, 6, 7, 8)
AVAILABILITY_FLOW_LABELS = (15, 16, 17, 18)


def row_name(family: str, key) -> str:
    return f"{family}[{key}]"


@dataclasses.dataclass(frozen=True)
class ContingencyScenario:
    """Line availability by position: 1 in service, 0 failed."""

    a: Tuple[int, ...]

    @classmethod
    def all_available(cls, num_lines: int) -> "ContingencyScenario":
        return cls(tuple([1] * num_lines))

    @classmethod
    def from_failed(cls, num_lines: int, failed: Iterable[int]) -> "ContingencyScenario":
        a = [1] * num_lines
        for l in failed:
            a[l] = 0
        return cls(tuple(a))

    @property
    def num_lines(self) -> int:
        return len(self.a)

    @property
    def failed(self) -> Tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.a) if v == 0)

    @property
    def num_failed(self) -> int:
        return len(self.a) - sum(self.a)

    def as_array(self) -> np.ndarray:
        return np.array(self.a, dtype=np.int64)

    def in_support(self, k: int) -> bool:
        return self.num_failed <= k


@dataclasses.dataclass(frozen=True)
class DualSolution:
    """Recourse multipliers keyed by row name."""

    eta: Mapping[str, float]

    def get(self, family: str, key) -> float:
        return self.eta.get(row_name(family, key), 0.0)

    def by_label(self, label: int) -> Dict[str, float]:
        return {
            name: v for name, v in self.eta.items()
            if ETA_LABELS[name.split("[", 1)[0]] == label
        }

    @classmethod
    def zeros(cls, program: "RecourseProgram") -> "DualSolution":
        return cls({r.name: 0.0 for r in program.rows})


@dataclasses.dataclass(frozen=True)
class RecourseRow:
    name: str
    label: int
    coeffs: Tuple[Tuple[str, float], ...]
    sense: Sense
    const: float
    z_line: Optional[int] = None
    z_coef: float = 0.0
    a_line: Optional[int] = None
    a_coef: float = 0.0

    def rhs(self, z: np.ndarray, a: np.ndarray) -> float:
        out = self.const
        if self.z_line is not None:
            out += self.z_coef * z[self.z_line]
        if self.a_line is not None:
            out += self.a_coef * a[self.a_line]
        return out


@dataclasses.dataclass(frozen=True)
class RecourseProgram:
    """The parameterized recourse LP of one instance."""

    variables: Tuple[str, ...]
    costs: Mapping[str, float]
    rows: Tuple[RecourseRow, ...]
    num_lines: int

    def dual_value(self, dual: DualSolution, z: np.ndarray, a: np.ndarray) -> float:
        """-sum_r eta_r rhs_r(z, a), the generic form of the dual objective."""
        return -sum(dual.eta.get(r.name, 0.0) * r.rhs(z, a) for r in self.rows)


@dataclasses.dataclass(frozen=True)
class RecourseSolution:
    cost: float
    dual: DualSolution
    # Per bus id.
    shed_p_minus: Mapping[int, float]
    shed_q_minus: Mapping[int, float]

    def __iter__(self):
        # Allows `cost, dual = evaluate_recourse(...)`.
        return iter((self.cost, self.dual))


def build_recourse_program(g: GridInstance) -> RecourseProgram:
    subs = g.substation_by_bus()
    variables: List[str] = []
    costs: Dict[str, float] = {}
    rows: List[RecourseRow] = []

    def add_row(family, key, coeffs, sense=Sense.LE, const=0.0, **gates):
        rows.append(RecourseRow(
            name=row_name(family, key),
            label=ETA_LABELS[family],
            coeffs=tuple((k, float(v)) for k, v in coeffs.items() if v != 0.0),
            sense=sense,
            const=float(const),
            **gates,
        ))

    for b in g.buses:
        if b.id in subs:
            variables += [f"p_tr[{b.id}]", f"q_tr[{b.id}]"]
            costs[f"p_tr[{b.id}]"] = subs[b.id].energy_cost
        variables.append(f"v[{b.id}]")
        for shed in ("dp_minus", "dp_plus", "dq_minus", "dq_plus"):
            variables.append(f"{shed}[{b.id}]")
            costs[f"{shed}[{b.id}]"] = g.loss_cost
    for l in g.lines:
        variables += [f"f_p[{l.id}]", f"f_q[{l.id}]"]

    inflow_p: Dict[int, Dict[str, float]] = {b.id: {} for b in g.buses}
    inflow_q: Dict[int, Dict[str, float]] = {b.id: {} for b in g.buses}
    for l in g.lines:
        inflow_p[l.to_bus][f"f_p[{l.id}]"] = 1.0
        inflow_p[l.from_bus][f"f_p[{l.id}]"] = -1.0
        inflow_q[l.to_bus][f"f_q[{l.id}]"] = 1.0
        inflow_q[l.from_bus][f"f_q[{l.id}]"] = -1.0

    for b in g.buses:
        d_p = b.demand_p
        d_q = reactive_demand(b)
        bal_p = dict(inflow_p[b.id])
        bal_p.update({f"dp_minus[{b.id}]": 1.0, f"dp_plus[{b.id}]": -1.0})
        bal_q = dict(inflow_q[b.id])
        bal_q.update({f"dq_minus[{b.id}]": 1.0, f"dq_plus[{b.id}]": -1.0})
        if b.id in subs:
            s = subs[b.id]
            p_max, q_min, q_max = s.post_limits
            bal_p[f"p_tr[{b.id}]"] = 1.0
            bal_q[f"q_tr[{b.id}]"] = 1.0
            add_row("bal_p_sub", b.id, bal_p, Sense.EQ, d_p)
            add_row("bal_q_sub", b.id, bal_q, Sense.EQ, d_q)
        else:
            add_row("bal_p", b.id, bal_p, Sense.EQ, d_p)
            add_row("bal_q", b.id, bal_q, Sense.EQ, d_q)

    for i, l in enumerate(g.lines):
        big_m = voltage_big_m(g, l)
        drop = {
            f"v[{l.from_bus}]": -1.0,
            f"v[{l.to_bus}]": 1.0,
            f"f_p[{l.id}]": 2.0 * l.r,
            f"f_q[{l.id}]": 2.0 * l.x,
        }
        neg_drop = {k: -v for k, v in drop.items()}
        if l.switchable:
            # rhs = (1 - a) M + (1 - z) M
            gates = dict(z_line=i, z_coef=-big_m, a_line=i, a_coef=-big_m)
            add_row("vdrop_sw_hi", l.id, drop, const=2.0 * big_m, **gates)
            add_row("vdrop_sw_lo", l.id, neg_drop, const=2.0 * big_m, **gates)
            zg = dict(z_line=i, z_coef=l.f_max)
            add_row("fsw_p_lo", l.id, {f"f_p[{l.id}]": -1.0}, **zg)
            add_row("fsw_p_hi", l.id, {f"f_p[{l.id}]": 1.0}, **zg)
            add_row("fsw_q_lo", l.id, {f"f_q[{l.id}]": -1.0}, **zg)
            add_row("fsw_q_hi", l.id, {f"f_q[{l.id}]": 1.0}, **zg)
        else:
            gates = dict(a_line=i, a_coef=-big_m)
            add_row("vdrop_hi", l.id, drop, const=big_m, **gates)
            add_row("vdrop_lo", l.id, neg_drop, const=big_m, **gates)
        ag = dict(a_line=i, a_coef=l.f_max)
        add_row("fav_p_lo", l.id, {f"f_p[{l.id}]": -1.0}, **ag)
        add_row("fav_p_hi", l.id, {f"f_p[{l.id}]": 1.0}, **ag)
        add_row("fav_q_lo", l.id, {f"f_q[{l.id}]": -1.0}, **ag)
        add_row("fav_q_hi", l.id, {f"f_q[{l.id}]": 1.0}, **ag)
        for e, (cot, cos, sin) in enumerate(OCTAGON, start=1):
            rhs = l.f_max * (sin - cot * cos)
            add_row("oct_pos", f"{l.id},{e}",
                    {f"f_q[{l.id}]": 1.0, f"f_p[{l.id}]": -cot}, const=rhs)
            add_row("oct_neg", f"{l.id},{e}",
                    {f"f_q[{l.id}]": -1.0, f"f_p[{l.id}]": -cot}, const=rhs)

    for b in g.buses:
        add_row("v_lo", b.id, {f"v[{b.id}]": -1.0}, const=-b.v_min ** 2)
        add_row("v_hi", b.id, {f"v[{b.id}]": 1.0}, const=b.v_max ** 2)
        if b.id in subs:
            s = subs[b.id]
            p_max, q_min, q_max = s.post_limits
            add_row("ptr_lo", b.id, {f"p_tr[{b.id}]": -1.0})
            add_row("ptr_hi", b.id, {f"p_tr[{b.id}]": 1.0}, const=p_max)
            add_row("qtr_lo", b.id, {f"q_tr[{b.id}]": -1.0}, const=-q_min)
            add_row("qtr_hi", b.id, {f"q_tr[{b.id}]": 1.0}, const=q_max)
            add_row("v_ref", b.id, {f"v[{b.id}]": 1.0}, Sense.EQ, s.v_ref ** 2)
        add_row("dp_plus_nn", b.id, {f"dp_plus[{b.id}]": -1.0})
        add_row("dp_minus_nn", b.id, {f"dp_minus[{b.id}]": -1.0})
        add_row("dq_plus_nn", b.id, {f"dq_plus[{b.id}]": -1.0})
        add_row("dq_minus_nn", b.id, {f"dq_minus[{b.id}]": -1.0})
        add_row("dp_minus_cap", b.id, {f"dp_minus[{b.id}]": 1.0}, const=b.demand_p)
        add_row("dq_minus_cap", b.id, {f"dq_minus[{b.id}]": 1.0},
                const=reactive_demand(b))

    return RecourseProgram(
        variables=tuple(variables),
        costs=costs,
        rows=tuple(rows),
        num_lines=g.num_lines,
    )


SwitchingLike = Union[np.ndarray, Sequence[int], Mapping[int, int]]


def as_switching_vector(g: GridInstance, z: SwitchingLike) -> np.ndarray:
    """Normalizes z to a 0/1 vector over line positions."""
    if isinstance(z, Mapping):
        return full_switching(g, z)
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (g.num_lines,):
        raise errors.PreconditionError(
            f"Switching vector has shape {z.shape}, expected ({g.num_lines},)"
        )
    return z


def build_recourse_model(
    program: RecourseProgram, z: np.ndarray, a: np.ndarray,
) -> ModelBuilder:
    m = ModelBuilder("recourse")
    for v in program.variables:
        m.add_var(v, lb=-math.inf, ub=math.inf)
    for r in program.rows:
        m.add_constr(r.name, dict(r.coeffs), r.sense, r.rhs(z, a))
    m.set_objective(program.costs, ObjectiveSense.MINIMIZE)
    return m


def evaluate_recourse(
    g: GridInstance,
    z: SwitchingLike,
    s: ContingencyScenario,
    params: Optional[Mapping] = None,
    program: Optional[RecourseProgram] = None,
) -> RecourseSolution:
    """Solves H(z, a) and returns its cost together with the multipliers.

    Args:
      g: Grid instance.
      z: First-stage switching, by position or as a map over switchable ids.
      s: Line availability.
      params: Solver parameters (see gridfire.config).
      program: A prebuilt program for g, to skip rebuilding the rows.
    Returns:
      A RecourseSolution whose dual rebuilds the cost through
      `RecourseProgram.dual_value`.
    Raises:
      ModelingError: The LP was not solved to optimality.
    """
    if program is None:
        program = build_recourse_program(g)
    z = as_switching_vector(g, z)
    a = s.as_array()
    if len(a) != g.num_lines:
        raise errors.PreconditionError(
            f"Scenario covers {len(a)} lines, instance has {g.num_lines}"
        )
    m = build_recourse_model(program, z, a)
    result = base.solve(m, params)
    if result.status is not Status.OPTIMAL:
        raise errors.ModelingError(
            f"Recourse LP ended with status {result.status.value} for failed "
            f"lines {[g.lines[i].id for i in s.failed]}: {result.message}"
        )
    eta = {name: -d for name, d in result.dual_values.items()}
    return RecourseSolution(
        cost=result.objective_value,
        dual=DualSolution(eta),
        shed_p_minus={b.id: result.value(f"dp_minus[{b.id}]") for b in g.buses},
        shed_q_minus={b.id: result.value(f"dq_minus[{b.id}]") for b in g.buses},
    )


def cut_coefficients(
    g: GridInstance, dual: DualSolution, s: ContingencyScenario,
) -> Tuple[float, np.ndarray]:
    """Closed form of the cut body as (constant, z coefficients by position).

    Term by term:
      demand        -D^p eta1 - D^q eta2 (substations), -D^p eta3 - D^q eta4
      voltage box   +Vmin^2 eta9 - Vmax^2 eta10
      injections    -Pmax eta22 + Qmin eta23 - Qmax eta24, reference -Vref^2 eta25
      shed caps     -D^p eta30 - D^q eta31
      voltage drop  -((1-a)M + (1-z)M)(eta5 + eta6), -(1-a)M(eta7 + eta8)
      flow boxes    -z Fmax (eta11..14), -a Fmax (eta15..18)
      octagon       +Fmax (cot cos - sin)(eta19 + eta20)
    """
    subs = g.substation_by_bus()
    a = s.as_array()
    const = 0.0
    coef = np.zeros(g.num_lines)

    for b in g.buses:
        d_p = b.demand_p
        d_q = reactive_demand(b)
        if b.id in subs:
            p_max, q_min, q_max = subs[b.id].post_limits
            v_ref = subs[b.id].v_ref
            const -= d_p * dual.get("bal_p_sub", b.id) + d_q * dual.get("bal_q_sub", b.id)
            const += (
                -p_max * dual.get("ptr_hi", b.id)
                + q_min * dual.get("qtr_lo", b.id)
                - q_max * dual.get("qtr_hi", b.id)
                - v_ref ** 2 * dual.get("v_ref", b.id)
            )
        else:
            const -= d_p * dual.get("bal_p", b.id) + d_q * dual.get("bal_q", b.id)
        const += b.v_min ** 2 * dual.get("v_lo", b.id) - b.v_max ** 2 * dual.get("v_hi", b.id)
        const -= d_p * dual.get("dp_minus_cap", b.id) + d_q * dual.get("dq_minus_cap", b.id)

    for i, l in enumerate(g.lines):
        big_m = voltage_big_m(g, l)
        if l.switchable:
            eta56 = dual.get("vdrop_sw_hi", l.id) + dual.get("vdrop_sw_lo", l.id)
            const -= ((1 - a[i]) * big_m + big_m) * eta56
            coef[i] += big_m * eta56
            coef[i] -= l.f_max * sum(
                dual.get(f, l.id)
                for f in ("fsw_p_lo", "fsw_p_hi", "fsw_q_lo", "fsw_q_hi")
            )
        else:
            eta78 = dual.get("vdrop_hi", l.id) + dual.get("vdrop_lo", l.id)
            const -= (1 - a[i]) * big_m * eta78
        const -= a[i] * l.f_max * sum(
            dual.get(f, l.id)
            for f in ("fav_p_lo", "fav_p_hi", "fav_q_lo", "fav_q_hi")
        )
        for e, (cot, cos, sin) in enumerate(OCTAGON, start=1):
            key = f"{l.id},{e}"
            const += l.f_max * (cot * cos - sin) * (
                dual.get("oct_pos", key) + dual.get("oct_neg", key)
            )
    return const, coef


def dual_objective(
    g: GridInstance, dual: DualSolution, z: SwitchingLike, s: ContingencyScenario,
) -> float:
    """Value of the cut body at z; equals H(z, s) for the dual of (z, s)."""
    const, coef = cut_coefficients(g, dual, s)
    return float(const + coef @ as_switching_vector(g, z))


def _evaluate_worker(a, g, z, params, program):
    return evaluate_recourse(
        g, z, ContingencyScenario(a), params=params, program=program,
    )


def evaluate_scenarios(
    g: GridInstance,
    z: SwitchingLike,
    scenarios: Sequence[ContingencyScenario],
    params: Optional[Mapping] = None,
    threads: int = 1,
    progress: bool = False,
    chunksize: int = 16,
    desc: str = "recourse",
) -> List[RecourseSolution]:
    """Evaluates H(z, a) for every scenario, in input order."""
    program = build_recourse_program(g)
    z = as_switching_vector(g, z)
    params = dict(params or {})
    fn = partial(_evaluate_worker, g=g, z=z, params=params, program=program)
    items = [s.a for s in scenarios]
    out = []
    disable = not progress or not sys.stderr.isatty()
    with tqdm(total=len(items), desc=desc, disable=disable) as pbar:
        if threads <= 1:
            for a in items:
                out.append(fn(a))
                pbar.update()
        else:
            with Pool(processes=threads) as p:
                for r in p.imap(fn, items, chunksize=chunksize):
                    out.append(r)
                    pbar.update()
    return out
