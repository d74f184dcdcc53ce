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

"""Flow-dependent ambiguity set over line outages.

The expected outage indicator of line l is bounded by

    mu_l = gamma_l + beta_l * |f_p_l|

and the support holds every availability vector with at most K failed lines.
This module parses the parameters, computes the bound, enumerates the
support and solves the inner worst-case expectation exactly on small
instances.
"""
import dataclasses
import itertools
import json
import logging
import math
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import ml_collections as mlc
import numpy as np
import yaml

from gridfire import config, errors
from gridfire.grid.instance import GridInstance, annual_rate_to_horizon_probability
from gridfire.model.recourse import (
    ContingencyScenario,
    SwitchingLike,
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


DEFAULT_DIGITS = 7
DEFAULT_EPSILON = 1e-4
DUAL_BIG_M_CLASSES = ("voltage", "flow")

_DDU_KEYS = {
    "gamma", "beta", "k_budget", "expansion_step", "expansion_digits",
    "epsilon", "psi_big_m", "dual_big_m",
}


@dataclasses.dataclass(frozen=True)
class DduConfig:
    """Ambiguity and decomposition parameters. Arrays run over line positions."""

    gamma: np.ndarray
    beta: np.ndarray
    k_budget: int
    expansion_step: float
    expansion_digits: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    # None selects the instance-derived default.
    psi_big_m: Optional[float] = None
    # Per class in DUAL_BIG_M_CLASSES; missing classes use the default.
    dual_big_m: Optional[Mapping[str, float]] = None

    @property
    def num_lines(self) -> int:
        return len(self.gamma)

    def with_beta(self, beta: np.ndarray) -> "DduConfig":
        return dataclasses.replace(self, beta=np.asarray(beta, dtype=np.float64))

    def to_dict(self, g: GridInstance) -> Dict[str, Any]:
        """Document form keyed by line id; ddu_from_dict reads it back."""
        ids = [str(lid) for lid in g.line_ids]
        out = {
            "gamma": {"lines": dict(zip(ids, self.gamma.tolist()))},
            "beta": {"lines": dict(zip(ids, self.beta.tolist()))},
            "k_budget": int(self.k_budget),
            "expansion_step": float(self.expansion_step),
            "expansion_digits": {
                "lines": dict(zip(ids, [int(e) for e in self.expansion_digits]))
            },
            "epsilon": float(self.epsilon),
        }
        if self.psi_big_m is not None:
            out["psi_big_m"] = float(self.psi_big_m)
        if self.dual_big_m is not None:
            out["dual_big_m"] = dict(self.dual_big_m)
        return out


@dataclasses.dataclass(frozen=True)
class MomentBound:
    mu_upper: np.ndarray

    @property
    def full(self) -> np.ndarray:
        """Upper rows followed by the zero lower rows, length 2|L|."""
        return np.concatenate([self.mu_upper, np.zeros_like(self.mu_upper)])


PerLine = Union[float, int, Mapping[Any, Any]]


def _per_line(g: GridInstance, spec: PerLine, field: str) -> np.ndarray:
    """Expands a scalar, {default, lines} or {id: value} spec over positions."""
    if isinstance(spec, bool):
        raise errors.ConfigurationError(f"'{field}' must be numeric")
    if isinstance(spec, np.ndarray):
        if spec.shape != (g.num_lines,):
            raise errors.ConfigurationError(
                f"'{field}' has shape {spec.shape}, instance has {g.num_lines} lines"
            )
        return spec.astype(np.float64)
    if isinstance(spec, (int, float, np.integer, np.floating)):
        return np.full(g.num_lines, float(spec))
    if not isinstance(spec, Mapping):
        raise errors.ConfigurationError(
            f"'{field}' must be a number or a mapping, got {type(spec).__name__}"
        )
    if set(spec) <= {"default", "lines"}:
        default = spec.get("default")
        overrides = spec.get("lines", {}) or {}
    else:
        default, overrides = None, spec

    pos = g.line_position()
    out = np.full(g.num_lines, np.nan)
    if default is not None:
        out[:] = float(default)
    for key, value in overrides.items():
        try:
            lid = int(key)
        except (TypeError, ValueError):
            raise errors.ConfigurationError(f"'{field}': bad line id {key!r}")
        if lid not in pos:
            raise errors.ConfigurationError(f"'{field}': unknown line {lid}")
        out[pos[lid]] = float(value)
    if np.isnan(out).any():
        missing = [g.lines[i].id for i in np.flatnonzero(np.isnan(out))]
        raise errors.ConfigurationError(
            f"'{field}' has no value for lines {missing} and no default"
        )
    return out


def default_expansion_step(g: GridInstance, digits: np.ndarray) -> float:
    """Smallest step whose expansion spans every line's flow limit."""
    return float(max(
        l.f_max / (2 ** int(e) - 1) for l, e in zip(g.lines, digits)
    ))


def validate_ddu(cfg: DduConfig, g: GridInstance) -> None:
    n = g.num_lines
    for field in ("gamma", "beta", "expansion_digits"):
        arr = getattr(cfg, field)
        if arr.shape != (n,):
            raise errors.ConfigurationError(
                f"'{field}' has shape {arr.shape}, instance has {n} lines"
            )
        if not np.all(np.isfinite(arr)):
            raise errors.ConfigurationError(f"'{field}' must be finite")
    if np.any(cfg.gamma < 0) or np.any(cfg.gamma > 1):
        raise errors.ConfigurationError("gamma must lie in [0, 1]")
    if np.any(cfg.beta < 0):
        raise errors.ConfigurationError("beta must be nonnegative")
    if int(cfg.k_budget) != cfg.k_budget or not (0 <= cfg.k_budget <= n):
        raise errors.ConfigurationError(
            f"k_budget must be an integer in [0, {n}], got {cfg.k_budget}"
        )
    if not (0 < cfg.epsilon < 1):
        raise errors.ConfigurationError(
            f"epsilon must lie in (0, 1), got {cfg.epsilon}"
        )
    if np.any(cfg.expansion_digits < 1):
        raise errors.ConfigurationError("expansion_digits must be at least 1")
    if not (cfg.expansion_step > 0):
        raise errors.ConfigurationError("expansion_step must be positive")
    for l, e in zip(g.lines, cfg.expansion_digits):
        span = cfg.expansion_step * (2 ** int(e) - 1)
        if span < l.f_max * (1 - 1e-12):
            raise errors.ConfigurationError(
                f"line {l.id}: expansion spans {span:.6g} < f_max {l.f_max:.6g}; "
                f"raise expansion_digits or expansion_step"
            )
    if cfg.psi_big_m is not None and not (cfg.psi_big_m > 0):
        raise errors.ConfigurationError("psi_big_m must be positive")
    if cfg.dual_big_m is not None:
        unknown = set(cfg.dual_big_m) - set(DUAL_BIG_M_CLASSES)
        if unknown:
            raise errors.ConfigurationError(
                f"dual_big_m has unknown classes {sorted(unknown)}"
            )
        if any(not (v > 0) for v in cfg.dual_big_m.values()):
            raise errors.ConfigurationError("dual_big_m values must be positive")


def make_ddu_config(
    g: GridInstance,
    gamma: PerLine,
    beta: PerLine,
    k_budget: int,
    expansion_step: Optional[float] = None,
    expansion_digits: PerLine = DEFAULT_DIGITS,
    epsilon: float = DEFAULT_EPSILON,
    psi_big_m: Optional[float] = None,
    dual_big_m: Optional[Union[float, Mapping[str, float]]] = None,
) -> DduConfig:
    """Builds and validates a DduConfig from scalars or per-line maps."""
    if isinstance(k_budget, bool) or int(k_budget) != k_budget:
        raise errors.ConfigurationError(f"k_budget must be an integer, got {k_budget!r}")
    digits = _per_line(g, expansion_digits, "expansion_digits")
    if np.any(digits != np.round(digits)):
        raise errors.ConfigurationError("expansion_digits must be integers")
    digits = digits.astype(np.int64)
    if expansion_step is None:
        expansion_step = default_expansion_step(g, digits)
    if isinstance(dual_big_m, (int, float)) and not isinstance(dual_big_m, bool):
        dual_big_m = {c: float(dual_big_m) for c in DUAL_BIG_M_CLASSES}
    cfg = DduConfig(
        gamma=_per_line(g, gamma, "gamma"),
        beta=_per_line(g, beta, "beta"),
        k_budget=int(k_budget),
        expansion_step=float(expansion_step),
        expansion_digits=digits,
        epsilon=float(epsilon),
        psi_big_m=None if psi_big_m is None else float(psi_big_m),
        dual_big_m=None if dual_big_m is None else dict(dual_big_m),
    )
    validate_ddu(cfg, g)
    return cfg


def _gamma_from_spec(g: GridInstance, spec) -> np.ndarray:
    if isinstance(spec, Mapping) and "failure_rate_per_year" in spec:
        unknown = set(spec) - {"failure_rate_per_year", "horizon_hours"}
        if unknown:
            raise errors.ConfigurationError(f"gamma: unknown keys {sorted(unknown)}")
        if "horizon_hours" not in spec:
            raise errors.ConfigurationError("gamma: missing 'horizon_hours'")
        rates = _per_line(g, spec["failure_rate_per_year"], "failure_rate_per_year")
        return np.array([
            annual_rate_to_horizon_probability(r, float(spec["horizon_hours"]))
            for r in rates
        ])
    return _per_line(g, spec, "gamma")


def beta_from_max_probability(
    g: GridInstance,
    p_max: PerLine,
    gamma: np.ndarray,
    at_risk_lines: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """beta such that gamma + beta * f_max reaches p_max on at-risk lines.

    Lines outside at_risk_lines (all lines when None) get beta = 0.
    """
    p_max = _per_line(g, p_max, "max_failure_probability")
    at_risk = set(g.line_ids) if at_risk_lines is None else {int(i) for i in at_risk_lines}
    beta = np.zeros(g.num_lines)
    for i, l in enumerate(g.lines):
        if l.id not in at_risk:
            continue
        if p_max[i] < gamma[i]:
            raise errors.ConfigurationError(
                f"line {l.id}: max_failure_probability {p_max[i]} is below "
                f"gamma {gamma[i]}"
            )
        beta[i] = (p_max[i] - gamma[i]) / l.f_max
    return beta


def _beta_from_spec(g: GridInstance, spec, gamma: np.ndarray) -> np.ndarray:
    if isinstance(spec, Mapping) and "max_failure_probability" in spec:
        unknown = set(spec) - {"max_failure_probability", "at_risk_lines"}
        if unknown:
            raise errors.ConfigurationError(f"beta: unknown keys {sorted(unknown)}")
        return beta_from_max_probability(
            g, spec["max_failure_probability"], gamma, spec.get("at_risk_lines"),
        )
    return _per_line(g, spec, "beta")


def ddu_from_dict(data: Mapping[str, Any], g: GridInstance) -> DduConfig:
    if not isinstance(data, Mapping):
        raise errors.ConfigurationError("DDU document must be a mapping")
    unknown = set(data) - _DDU_KEYS
    if unknown:
        raise errors.ConfigurationError(f"DDU document: unknown keys {sorted(unknown)}")
    for key in ("gamma", "beta", "k_budget"):
        if key not in data:
            raise errors.ConfigurationError(f"DDU document: missing '{key}'")
    gamma = _gamma_from_spec(g, data["gamma"])
    beta = _beta_from_spec(g, data["beta"], gamma)
    return make_ddu_config(
        g,
        gamma=gamma,
        beta=beta,
        k_budget=data["k_budget"],
        expansion_step=data.get("expansion_step"),
        expansion_digits=data.get("expansion_digits", DEFAULT_DIGITS),
        epsilon=data.get("epsilon", DEFAULT_EPSILON),
        psi_big_m=data.get("psi_big_m"),
        dual_big_m=data.get("dual_big_m"),
    )


def load_ddu(path: str, g: GridInstance) -> DduConfig:
    """Reads a DDU parameter file (JSON, or YAML for .yaml/.yml)."""
    ext = os.path.splitext(path)[-1].lower()
    with open(path, "r") as fp:
        try:
            if ext in (".yaml", ".yml"):
                data = yaml.safe_load(fp)
            else:
                data = json.load(fp)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise errors.ConfigurationError(f"{path} could not be parsed: {e}")
    cfg = ddu_from_dict(data, g)
    logging.info(
        "Loaded %s: K=%d, step %.4g, gamma in [%.4g, %.4g], %d lines with beta > 0",
        path, cfg.k_budget, cfg.expansion_step,
        cfg.gamma.min(), cfg.gamma.max(), int(np.count_nonzero(cfg.beta)),
    )
    return cfg


def mean_bound(cfg: DduConfig, f_p: np.ndarray) -> MomentBound:
    f_p = np.asarray(f_p, dtype=np.float64)
    return MomentBound(cfg.gamma + cfg.beta * np.abs(f_p))


def support_size(num_lines: int, k: int) -> int:
    return sum(math.comb(num_lines, j) for j in range(k + 1))


def enumerate_support(
    num_lines: int, k: int, cap: Optional[int] = None,
) -> List[ContingencyScenario]:
    """Every availability vector with at most k failures.

    Ordered by number of failures, then lexicographically by failed positions.
    """
    if not (0 <= k <= num_lines):
        raise errors.PreconditionError(
            f"Support budget must lie in [0, {num_lines}], got {k}"
        )
    size = support_size(num_lines, k)
    if cap is not None and size > cap:
        raise errors.SupportTooLargeError(
            f"Support has {size} scenarios, above the cap of {cap}"
        )
    return [
        ContingencyScenario.from_failed(num_lines, failed)
        for j in range(k + 1)
        for failed in itertools.combinations(range(num_lines), j)
    ]


@dataclasses.dataclass(frozen=True)
class OracleResult:
    value: float
    worst_q: Dict[ContingencyScenario, float]
    # Moment-row duals, upper rows then lower rows.
    psi: np.ndarray
    phi: float
    mu_full: np.ndarray
    scenarios: Tuple[ContingencyScenario, ...]
    costs: np.ndarray


def solve_moment_lp(
    costs: Sequence[float],
    scenarios: Sequence[ContingencyScenario],
    mu_upper: np.ndarray,
    params: Optional[Mapping] = None,
) -> OracleResult:
    """max sum_a H(a) q(a) s.t. 0 <= E_q[1 - a_l] <= mu_l, sum q = 1, q >= 0."""
    costs = np.asarray(costs, dtype=np.float64)
    n = len(mu_upper)
    m = ModelBuilder("moment_lp")
    q = [m.add_var(f"q[{i}]") for i in range(len(scenarios))]
    for l in range(n):
        outage = {q[i]: 1.0 for i, s in enumerate(scenarios) if s.a[l] == 0}
        m.add_constr(f"moment_hi[{l}]", outage, Sense.LE, float(mu_upper[l]))
        m.add_constr(f"moment_lo[{l}]", {k: -v for k, v in outage.items()},
                     Sense.LE, 0.0)
    m.add_constr("normalize", {name: 1.0 for name in q}, Sense.EQ, 1.0)
    m.set_objective(dict(zip(q, costs)), ObjectiveSense.MAXIMIZE)

    result = base.solve(m, params)
    if result.status is not Status.OPTIMAL:
        raise errors.ModelingError(
            f"Moment LP ended with status {result.status.value}: {result.message}"
        )
    psi = np.array(
        [result.dual_values[f"moment_hi[{l}]"] for l in range(n)]
        + [result.dual_values[f"moment_lo[{l}]"] for l in range(n)]
    )
    worst_q = {
        s: result.value(name) for s, name in zip(scenarios, q)
        if result.value(name) > 1e-12
    }
    return OracleResult(
        value=result.objective_value,
        worst_q=worst_q,
        psi=psi,
        phi=result.dual_values["normalize"],
        mu_full=np.concatenate([np.asarray(mu_upper, float), np.zeros(n)]),
        scenarios=tuple(scenarios),
        costs=costs,
    )


def worst_case_expectation_oracle(
    g: GridInstance,
    cfg: DduConfig,
    z: SwitchingLike,
    f_p: np.ndarray,
    run_cfg: Optional[mlc.ConfigDict] = None,
) -> OracleResult:
    """Exact sup of E[H(z, a)] over the ambiguity set, by enumeration."""
    if run_cfg is None:
        run_cfg = config.run_config()
    c = run_cfg.ambiguity
    scenarios = enumerate_support(g.num_lines, cfg.k_budget, cap=c.support_cap)
    with timing(f"worst-case oracle over {len(scenarios)} scenarios"):
        solutions = evaluate_scenarios(
            g, z, scenarios,
            params=config.solver_params(run_cfg),
            threads=c.threads,
            progress=c.progress,
            desc="oracle",
        )
        mu = mean_bound(cfg, f_p)
        result = solve_moment_lp(
            [s.cost for s in solutions], scenarios, mu.mu_upper,
            params=config.solver_params(run_cfg),
        )
    logging.info(
        "Oracle value %.6f over %d scenarios; worst distribution has %d atoms",
        result.value, len(scenarios), len(result.worst_q),
    )
    return result


def dualize_inner(result: OracleResult, tol: float = 1e-6) -> Tuple[np.ndarray, float]:
    """(psi, phi) of the inner problem, checked for feasibility and zero gap.

    Raises:
      ModelingError: The moment-row duals do not certify the oracle value.
    """
    psi = np.where(np.abs(result.psi) <= tol, 0.0, result.psi)
    if np.any(psi < 0):
        raise errors.ModelingError(f"Negative moment dual {psi.min():.3g}")
    n = len(psi) // 2
    for s, h in zip(result.scenarios, result.costs):
        a_hat = 1 - s.as_array()
        lhs = (psi[:n] - psi[n:]) @ a_hat + result.phi
        if lhs < h - tol * (1 + abs(h)):
            raise errors.ModelingError(
                f"Inner dual infeasible at failed lines {s.failed}: "
                f"{lhs:.6g} < {h:.6g}"
            )
    dual_value = psi @ result.mu_full + result.phi
    if abs(dual_value - result.value) > tol * (1 + abs(result.value)):
        raise errors.ModelingError(
            f"Inner duality gap: primal {result.value:.8g}, dual {dual_value:.8g}"
        )
    return psi, result.phi
