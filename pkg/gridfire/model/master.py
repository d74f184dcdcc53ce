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

"""Relaxed master problem of the cutting-plane loop.

The master is the first-stage model plus the dual weights of the inner
worst-case expectation:

    min  first-stage cost + sum_l (gamma_l psi_l + beta_l chi_l) + phi

where chi_l stands for psi_l |f_p_l|. |f_p_l| is written as a binary
expansion s * sum_e 2^(e-1) delta_le, so each product psi_l delta_le becomes
a big-M linearized rho_le. Every optimality cut reads

    phi + sum_l (psi_l - psi_{L+l}) (1 - a_l) - sum_l coef_l z_l >= const

with (const, coef) from recourse.cut_coefficients.
"""
import dataclasses
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import ml_collections as mlc
import numpy as np

from gridfire import config, errors
from gridfire.grid.instance import GridInstance, reactive_demand
from gridfire.model.ambiguity import DduConfig, validate_ddu
from gridfire.model.pre_contingency import (
    FirstStageHandles,
    FirstStageSolution,
    build_first_stage,
    extract_first_stage,
)
from gridfire.model.recourse import (
    ContingencyScenario,
    DualSolution,
    SwitchingLike,
    as_switching_vector,
    cut_coefficients,
)
from gridfire.solvers import base
from gridfire.solvers.model_builder import ModelBuilder, Sense, Status
from gridfire.solvers.utils import timing


@dataclasses.dataclass(frozen=True)
class OptimalityCut:
    id: int
    scenario: ContingencyScenario
    dual: DualSolution

    def coefficients(self, g: GridInstance) -> Tuple[float, np.ndarray]:
        return cut_coefficients(g, self.dual, self.scenario)


@dataclasses.dataclass(frozen=True)
class MasterHandles:
    first_stage: FirstStageHandles
    # By line position.
    psi_hi: Tuple[str, ...]
    psi_lo: Tuple[str, ...]
    phi: str
    # Expanded lines only, keyed by position.
    chi: Mapping[int, str]
    xi: Mapping[int, str]
    delta: Mapping[Tuple[int, int], str]
    rho: Mapping[Tuple[int, int], str]


@dataclasses.dataclass(frozen=True)
class MasterSolution:
    first_stage: FirstStageSolution
    # Upper moment rows then lower rows.
    psi: np.ndarray
    phi: float
    # By line position; zero on lines without expansion.
    chi: np.ndarray
    xi: Dict[int, int]
    delta: Dict[Tuple[int, int], int]
    rho: Dict[Tuple[int, int], float]
    objective: float
    solve_seconds: float = 0.0

    @property
    def psi_net(self) -> np.ndarray:
        """psi_l - psi_{L+l}, the weight the cuts put on each outage."""
        n = len(self.psi) // 2
        return self.psi[:n] - self.psi[n:]


def default_psi_big_m(g: GridInstance) -> float:
    """Bound on the spread of recourse costs, hence on optimal dual weights."""
    subs = g.substation_by_bus()
    shed = sum(b.demand_p + reactive_demand(b) for b in g.buses)
    forced = sum(
        max(s.post_limits[1], 0.0) + max(-s.post_limits[2], 0.0)
        for s in g.substations
    )
    energy = sum(s.energy_cost * s.post_limits[0] for s in subs.values())
    return max(g.loss_cost * (shed + forced) + energy, 1.0)


def decode_flow_magnitude(sol: MasterSolution, cfg: DduConfig, position: int) -> float:
    digits = int(cfg.expansion_digits[position])
    return cfg.expansion_step * sum(
        2 ** (e - 1) * sol.delta.get((position, e), 0) for e in range(1, digits + 1)
    )


def evaluate_cut(
    g: GridInstance, cut: OptimalityCut, z: SwitchingLike, psi: np.ndarray,
) -> float:
    """Right-hand side of the cut at (z, psi); the master requires phi >= it."""
    const, coef = cut.coefficients(g)
    z = as_switching_vector(g, z)
    n = g.num_lines
    psi = np.asarray(psi, dtype=np.float64)
    outage = 1 - cut.scenario.as_array()
    return float(const + coef @ z - (psi[:n] - psi[n:]) @ outage)


def build_master(
    g: GridInstance,
    cfg: DduConfig,
    cuts: Sequence[OptimalityCut],
    m: ModelBuilder,
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> MasterHandles:
    if run_cfg is None:
        run_cfg = config.run_config()
    validate_ddu(cfg, g)

    fs = build_first_stage(g, m)
    big_m = cfg.psi_big_m if cfg.psi_big_m is not None else default_psi_big_m(g)
    fix_lower = run_cfg.ambiguity.fix_psi_lower
    s = cfg.expansion_step

    psi_hi, psi_lo = [], []
    for l in g.lines:
        psi_hi.append(m.add_var(f"psi_hi[{l.id}]", 0.0, big_m))
        psi_lo.append(m.add_var(f"psi_lo[{l.id}]", 0.0, 0.0 if fix_lower else big_m))
    # Recourse costs are nonnegative, so phi >= 0 is valid before any cut.
    phi = m.add_var("phi", 0.0, math.inf)

    chi, xi, delta, rho = {}, {}, {}, {}
    objective = {phi: 1.0}
    for i, l in enumerate(g.lines):
        objective[psi_hi[i]] = float(cfg.gamma[i])
        if cfg.beta[i] == 0.0 and not run_cfg.master.expand_zero_beta_lines:
            continue
        f = fs.f_p[l.id]
        fpp = m.add_var(f"fpp[{l.id}]", 0.0, l.f_max)
        fpm = m.add_var(f"fpm[{l.id}]", 0.0, l.f_max)
        xi[i] = m.add_binary(f"xi[{l.id}]")
        m.add_constr(f"fsplit[{l.id}]", {f: 1.0, fpp: -1.0, fpm: 1.0}, Sense.EQ, 0.0)
        m.add_constr(f"fpp_cap[{l.id}]", {fpp: 1.0, xi[i]: -l.f_max}, Sense.LE, 0.0)
        m.add_constr(f"fpm_cap[{l.id}]", {fpm: 1.0, xi[i]: l.f_max}, Sense.LE, l.f_max)

        expansion = {fpp: 1.0, fpm: 1.0}
        chi[i] = m.add_var(f"chi[{l.id}]", -math.inf, math.inf)
        chi_def = {chi[i]: 1.0}
        for e in range(1, int(cfg.expansion_digits[i]) + 1):
            d = delta[(i, e)] = m.add_binary(f"delta[{l.id},{e}]")
            r = rho[(i, e)] = m.add_var(f"rho[{l.id},{e}]", -math.inf, math.inf)
            weight = s * 2 ** (e - 1)
            expansion[d] = -weight
            chi_def[r] = -weight
            p = psi_hi[i]
            key = f"{l.id},{e}"
            # rho = psi * delta
            m.add_constr(f"rho_a[{key}]", {p: 1.0, r: -1.0, d: big_m}, Sense.LE, big_m)
            m.add_constr(f"rho_b[{key}]", {p: 1.0, r: -1.0, d: -big_m}, Sense.GE, -big_m)
            m.add_constr(f"rho_c[{key}]", {r: 1.0, d: -big_m}, Sense.LE, 0.0)
            m.add_constr(f"rho_d[{key}]", {r: 1.0, d: big_m}, Sense.GE, 0.0)
        m.add_constr(f"bexp[{l.id}]", expansion, Sense.EQ, 0.0)
        m.add_constr(f"chi_def[{l.id}]", chi_def, Sense.EQ, 0.0)
        objective[chi[i]] = float(cfg.beta[i])
    m.add_objective_terms(objective)

    for cut in cuts:
        const, coef = cut.coefficients(g)
        row = {phi: 1.0}
        for i, l in enumerate(g.lines):
            if cut.scenario.a[i] == 0:
                row[psi_hi[i]] = row.get(psi_hi[i], 0.0) + 1.0
                row[psi_lo[i]] = row.get(psi_lo[i], 0.0) - 1.0
            if coef[i] != 0.0:
                if not l.switchable:
                    raise errors.ModelingError(
                        f"Cut {cut.id} has a switching term on fixed line {l.id}"
                    )
                row[fs.z[l.id]] = -coef[i]
        m.add_constr(f"cut[{cut.id}]", row, Sense.GE, const)

    return MasterHandles(
        first_stage=fs,
        psi_hi=tuple(psi_hi),
        psi_lo=tuple(psi_lo),
        phi=phi,
        chi=chi,
        xi=xi,
        delta=delta,
        rho=rho,
    )


def solve_master(
    g: GridInstance,
    cfg: DduConfig,
    cuts: Sequence[OptimalityCut],
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> MasterSolution:
    if run_cfg is None:
        run_cfg = config.run_config()
    m = ModelBuilder("master")
    with timing(f"master build with {len(cuts)} cuts", level=logging.DEBUG):
        h = build_master(g, cfg, cuts, m, run_cfg)
    with timing("master solve") as solve_time:
        result = base.solve(m, config.solver_params(run_cfg))
    if result.status is not Status.OPTIMAL:
        raise errors.SolverError(
            f"Master ended with status {result.status.value}: {result.message}"
        )

    chi = np.zeros(g.num_lines)
    for i, name in h.chi.items():
        chi[i] = result.value(name)
    return MasterSolution(
        first_stage=extract_first_stage(result, h.first_stage),
        psi=np.concatenate([result.values(h.psi_hi), result.values(h.psi_lo)]),
        phi=result.value(h.phi),
        chi=chi,
        xi={i: int(round(result.value(n))) for i, n in h.xi.items()},
        delta={k: int(round(result.value(n))) for k, n in h.delta.items()},
        rho={k: result.value(n) for k, n in h.rho.items()},
        objective=result.objective_value,
        solve_seconds=solve_time.seconds,
    )
