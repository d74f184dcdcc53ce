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

"""First-stage operation: balances, voltage drops, flow limits, switching."""
import dataclasses
import math
from typing import Dict, List, Mapping, Tuple

import numpy as np

from gridfire import errors
from gridfire.grid.instance import (
    GridInstance,
    full_switching,
    reactive_demand,
    voltage_big_m,
)
from gridfire.solvers.model_builder import (
    ModelBuilder,
    ObjectiveSense,
    Sense,
    SolveResult,
    Status,
)


# (cot((1/2 - e) pi/4), cos(e pi/4), sin(e pi/4)) for e = 1..4. The resulting
# octagon has its vertices on the circle of radius f_max.
OCTAGON = tuple(
    (
        1.0 / math.tan((0.5 - e) * math.pi / 4.0),
        math.cos(e * math.pi / 4.0),
        math.sin(e * math.pi / 4.0),
    )
    for e in range(1, 5)
)


def octagon_rows(f_max: float) -> List[Tuple[float, float, float]]:
    """The 8 half-planes c_p f_p + c_q f_q <= rhs as (c_p, c_q, rhs)."""
    rows = []
    for cot, cos, sin in OCTAGON:
        rhs = f_max * (sin - cot * cos)
        rows.append((-cot, 1.0, rhs))
        rows.append((-cot, -1.0, rhs))
    return rows


def in_octagon(f_p: float, f_q: float, f_max: float, tol: float = 1e-9) -> bool:
    return all(
        c_p * f_p + c_q * f_q <= rhs + tol
        for c_p, c_q, rhs in octagon_rows(f_max)
    )


@dataclasses.dataclass(frozen=True)
class FirstStageHandles:
    """Variable names of one first-stage block, keyed by bus or line id."""

    p_tr: Mapping[int, str]
    q_tr: Mapping[int, str]
    f_p: Mapping[int, str]
    f_q: Mapping[int, str]
    v_sq: Mapping[int, str]
    shed_p_minus: Mapping[int, str]
    shed_p_plus: Mapping[int, str]
    shed_q_minus: Mapping[int, str]
    shed_q_plus: Mapping[int, str]
    # Switchable lines only.
    z: Mapping[int, str]
    y: Mapping[int, str]
    energy_terms: Mapping[str, float]
    shed_terms: Mapping[str, float]
    switch_terms: Mapping[str, float]


@dataclasses.dataclass(frozen=True)
class FirstStageSolution:
    z_sw: Dict[int, int]
    y_sw: Dict[int, int]
    f_p: Dict[int, float]
    f_q: Dict[int, float]
    p_tr: Dict[int, float]
    q_tr: Dict[int, float]
    v_sq: Dict[int, float]
    shed_p_minus: Dict[int, float]
    shed_p_plus: Dict[int, float]
    shed_q_minus: Dict[int, float]
    shed_q_plus: Dict[int, float]
    cost_energy: float
    cost_shed: float
    cost_switch: float

    @property
    def operating_cost(self) -> float:
        return self.cost_energy + self.cost_shed + self.cost_switch

    def z_vector(self, g: GridInstance) -> np.ndarray:
        return full_switching(g, self.z_sw)

    def f_p_vector(self, g: GridInstance) -> np.ndarray:
        return np.array([self.f_p[l.id] for l in g.lines])

    def switching_actions(self, g: GridInstance) -> List[Tuple[int, int, int]]:
        """(line id, initial status, final status) for every changed line."""
        return [
            (l.id, int(l.initial_closed), self.z_sw[l.id])
            for l in g.lines
            if l.switchable and self.z_sw[l.id] != int(l.initial_closed)
        ]


def build_first_stage(g: GridInstance, m: ModelBuilder) -> FirstStageHandles:
    """Adds the first-stage variables, constraints and cost terms to m.

    Voltage, plain flow, injection and shed-cap boxes are variable bounds;
    everything else is a named row:

      bal_p[b], bal_q[b]            power balance per bus
      vdrop_hi[l], vdrop_lo[l]      big-M voltage drop, switchable lines
      vdrop[l]                      voltage drop equality, fixed lines
      v_ref[b]                      substation voltage
      flow_sw_{p,q}_{lo,hi}[l]      flows gated by z
      oct_pos[l,e], oct_neg[l,e]    apparent-power octagon
      switch_on[l], switch_off[l]   y >= |z - z0|
      forbid[k]                     forbidden switching patterns
    """
    subs = g.substation_by_bus()
    p_tr, q_tr, v_sq = {}, {}, {}
    shed = {k: {} for k in ("dp_minus", "dp_plus", "dq_minus", "dq_plus")}
    for b in g.buses:
        if b.id in subs:
            s = subs[b.id]
            p_tr[b.id] = m.add_var(f"p_tr[{b.id}]", 0.0, s.p_max)
            q_tr[b.id] = m.add_var(f"q_tr[{b.id}]", s.q_min, s.q_max)
        v_sq[b.id] = m.add_var(f"v[{b.id}]", b.v_min ** 2, b.v_max ** 2)
        shed["dp_minus"][b.id] = m.add_var(f"dp_minus[{b.id}]", 0.0, b.demand_p)
        shed["dp_plus"][b.id] = m.add_var(f"dp_plus[{b.id}]")
        shed["dq_minus"][b.id] = m.add_var(f"dq_minus[{b.id}]", 0.0, reactive_demand(b))
        shed["dq_plus"][b.id] = m.add_var(f"dq_plus[{b.id}]")

    f_p, f_q, z, y = {}, {}, {}, {}
    for l in g.lines:
        f_p[l.id] = m.add_var(f"f_p[{l.id}]", -l.f_max, l.f_max)
        f_q[l.id] = m.add_var(f"f_q[{l.id}]", -l.f_max, l.f_max)
        if l.switchable:
            z[l.id] = m.add_binary(f"z[{l.id}]")
            y[l.id] = m.add_binary(f"y[{l.id}]")

    flows_p: Dict[int, Dict[str, float]] = {b.id: {} for b in g.buses}
    flows_q: Dict[int, Dict[str, float]] = {b.id: {} for b in g.buses}
    for l in g.lines:
        flows_p[l.to_bus][f_p[l.id]] = 1.0
        flows_p[l.from_bus][f_p[l.id]] = -1.0
        flows_q[l.to_bus][f_q[l.id]] = 1.0
        flows_q[l.from_bus][f_q[l.id]] = -1.0
    for b in g.buses:
        row_p = dict(flows_p[b.id])
        row_p.update({shed["dp_minus"][b.id]: 1.0, shed["dp_plus"][b.id]: -1.0})
        row_q = dict(flows_q[b.id])
        row_q.update({shed["dq_minus"][b.id]: 1.0, shed["dq_plus"][b.id]: -1.0})
        if b.id in subs:
            row_p[p_tr[b.id]] = 1.0
            row_q[q_tr[b.id]] = 1.0
            m.add_constr(f"v_ref[{b.id}]", {v_sq[b.id]: 1.0}, Sense.EQ,
                         subs[b.id].v_ref ** 2)
        m.add_constr(f"bal_p[{b.id}]", row_p, Sense.EQ, b.demand_p)
        m.add_constr(f"bal_q[{b.id}]", row_q, Sense.EQ, reactive_demand(b))

    for l in g.lines:
        drop = {
            v_sq[l.from_bus]: 1.0,
            v_sq[l.to_bus]: -1.0,
            f_p[l.id]: -2.0 * l.r,
            f_q[l.id]: -2.0 * l.x,
        }
        if l.switchable:
            big_m = voltage_big_m(g, l)
            hi = dict(drop)
            hi[z[l.id]] = big_m
            lo = {k: -v for k, v in drop.items()}
            lo[z[l.id]] = big_m
            m.add_constr(f"vdrop_hi[{l.id}]", hi, Sense.LE, big_m)
            m.add_constr(f"vdrop_lo[{l.id}]", lo, Sense.LE, big_m)
            for flow, tag in ((f_p[l.id], "p"), (f_q[l.id], "q")):
                m.add_constr(f"flow_sw_{tag}_lo[{l.id}]",
                             {flow: -1.0, z[l.id]: -l.f_max}, Sense.LE, 0.0)
                m.add_constr(f"flow_sw_{tag}_hi[{l.id}]",
                             {flow: 1.0, z[l.id]: -l.f_max}, Sense.LE, 0.0)
            z0 = float(l.initial_closed)
            m.add_constr(f"switch_on[{l.id}]",
                         {y[l.id]: 1.0, z[l.id]: -1.0}, Sense.GE, -z0)
            m.add_constr(f"switch_off[{l.id}]",
                         {y[l.id]: 1.0, z[l.id]: 1.0}, Sense.GE, z0)
        else:
            m.add_constr(f"vdrop[{l.id}]", drop, Sense.EQ, 0.0)
        for e, (cot, cos, sin) in enumerate(OCTAGON, start=1):
            rhs = l.f_max * (sin - cot * cos)
            m.add_constr(f"oct_pos[{l.id},{e}]",
                         {f_q[l.id]: 1.0, f_p[l.id]: -cot}, Sense.LE, rhs)
            m.add_constr(f"oct_neg[{l.id},{e}]",
                         {f_q[l.id]: -1.0, f_p[l.id]: -cot}, Sense.LE, rhs)

    for k, pattern in enumerate(g.forbidden_patterns):
        m.add_constr(f"forbid[{k}]", {z[lid]: 1.0 for lid in pattern},
                     Sense.LE, len(pattern) - 1)

    energy = {p_tr[b]: subs[b].energy_cost for b in p_tr}
    shed_terms = {
        name: g.loss_cost for group in shed.values() for name in group.values()
    }
    switch = {y[l.id]: l.switch_cost for l in g.lines if l.switchable}
    m.add_objective_terms(energy)
    m.add_objective_terms(shed_terms)
    m.add_objective_terms(switch)
    m.objective_sense = ObjectiveSense.MINIMIZE

    return FirstStageHandles(
        p_tr=p_tr,
        q_tr=q_tr,
        f_p=f_p,
        f_q=f_q,
        v_sq=v_sq,
        shed_p_minus=shed["dp_minus"],
        shed_p_plus=shed["dp_plus"],
        shed_q_minus=shed["dq_minus"],
        shed_q_plus=shed["dq_plus"],
        z=z,
        y=y,
        energy_terms=energy,
        shed_terms=shed_terms,
        switch_terms=switch,
    )


def fix_switching(
    g: GridInstance, m: ModelBuilder, h: FirstStageHandles, z: Mapping[int, int],
) -> None:
    """Pins z (and the matching y) for every switchable line."""
    for l in g.lines:
        if not l.switchable:
            continue
        value = int(round(z.get(l.id, int(l.initial_closed))))
        m.fix_var(h.z[l.id], value)
        m.fix_var(h.y[l.id], abs(value - int(l.initial_closed)))


def extract_first_stage(
    result: SolveResult, h: FirstStageHandles,
) -> FirstStageSolution:
    if result.status is not Status.OPTIMAL:
        raise errors.SolverError(
            f"First-stage solve ended with status {result.status.value}: "
            f"{result.message}"
        )

    def values(names: Mapping[int, str]) -> Dict[int, float]:
        return {k: result.value(n) for k, n in names.items()}

    def cost(terms: Mapping[str, float]) -> float:
        return float(sum(c * result.value(n) for n, c in terms.items()))

    return FirstStageSolution(
        z_sw={k: int(round(result.value(n))) for k, n in h.z.items()},
        y_sw={k: int(round(result.value(n))) for k, n in h.y.items()},
        f_p=values(h.f_p),
        f_q=values(h.f_q),
        p_tr=values(h.p_tr),
        q_tr=values(h.q_tr),
        v_sq=values(h.v_sq),
        shed_p_minus=values(h.shed_p_minus),
        shed_p_plus=values(h.shed_p_plus),
        shed_q_minus=values(h.shed_q_minus),
        shed_q_plus=values(h.shed_q_plus),
        cost_energy=cost(h.energy_terms),
        cost_shed=cost(h.shed_terms),
        cost_switch=cost(h.switch_terms),
    )
