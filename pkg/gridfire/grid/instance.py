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

"""Distribution grid data types."""
import dataclasses
import math
from typing import Dict, Optional, Tuple

import networkx as nx
import numpy as np

from gridfire import errors


HOURS_PER_YEAR = 8760.0
KW_PER_MVA = 1000.0


@dataclasses.dataclass(frozen=True)
class Bus:
    """A network node with an active demand and a voltage window."""

    id: int
    # Active demand in per-unit on the instance power base.
    demand_p: float
    # Reactive demand is tan(arccos(power_factor)) * demand_p, never stored.
    power_factor: float
    # Voltage magnitude bounds in per-unit (not squared).
    v_min: float
    v_max: float
    is_substation: bool = False


@dataclasses.dataclass(frozen=True)
class Substation:
    """An injection point. Post-contingency limits default to the normal ones."""

    bus: int
    p_max: float
    q_min: float
    q_max: float
    energy_cost: float
    v_ref: float
    p_max_post: Optional[float] = None
    q_min_post: Optional[float] = None
    q_max_post: Optional[float] = None

    @property
    def post_limits(self) -> Tuple[float, float, float]:
        """(p_max, q_min, q_max) that apply after a contingency."""
        return (
            self.p_max if self.p_max_post is None else self.p_max_post,
            self.q_min if self.q_min_post is None else self.q_min_post,
            self.q_max if self.q_max_post is None else self.q_max_post,
        )


@dataclasses.dataclass(frozen=True)
class Line:
    """A branch; positive flow runs from from_bus to to_bus."""

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    f_max: float
    switchable: bool = False
    initial_closed: bool = True
    switch_cost: float = 0.0


@dataclasses.dataclass(frozen=True)
class GridInstance:
    """The full static input of a switching study.

    Buses and lines are kept sorted by id. Optimization code addresses lines
    by position (0..|L|-1) in that order; files and reports use ids.
    """

    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    substations: Tuple[Substation, ...]
    loss_cost: float
    # Each pattern is a sorted tuple of switchable line ids.
    forbidden_patterns: Tuple[Tuple[int, ...], ...] = ()
    base_mva: float = 1.0

    @property
    def num_buses(self) -> int:
        return len(self.buses)

    @property
    def num_lines(self) -> int:
        return len(self.lines)

    @property
    def bus_ids(self) -> Tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @property
    def line_ids(self) -> Tuple[int, ...]:
        return tuple(l.id for l in self.lines)

    def line_position(self) -> Dict[int, int]:
        return {l.id: i for i, l in enumerate(self.lines)}

    def bus_position(self) -> Dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def substation_by_bus(self) -> Dict[int, Substation]:
        return {s.bus: s for s in self.substations}

    @property
    def switchable_positions(self) -> Tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.lines) if l.switchable)

    def initial_switching(self) -> np.ndarray:
        """z^sw,0 over all line positions; non-switchable lines read as closed."""
        return np.array(
            [1 if (l.initial_closed or not l.switchable) else 0 for l in self.lines],
            dtype=np.int64,
        )


def reactive_demand(bus: Bus) -> float:
    return math.tan(math.acos(bus.power_factor)) * bus.demand_p


def total_demand(g: GridInstance) -> float:
    return float(sum(b.demand_p for b in g.buses))


def to_kw(g: GridInstance, value_pu: float) -> float:
    return value_pu * g.base_mva * KW_PER_MVA


def voltage_big_m(g: GridInstance, line: Line) -> float:
    """Smallest constant that makes a gated voltage-drop row vacuous."""
    v_sq_max = max(b.v_max for b in g.buses) ** 2
    v_sq_min = min(b.v_min for b in g.buses) ** 2
    return (v_sq_max - v_sq_min) + 2.0 * (abs(line.r) + abs(line.x)) * line.f_max


def annual_rate_to_horizon_probability(rate: float, horizon_hours: float) -> float:
    """Probability of at least one failure within the horizon.

    Args:
      rate: Failures per year of an exponentially distributed failure process.
      horizon_hours: Length of the operating horizon.
    Returns:
      1 - exp(-rate * horizon_hours / 8760)
    """
    if rate < 0:
        raise errors.ConfigurationError(f"Failure rate must be nonnegative, got {rate}")
    if horizon_hours <= 0:
        raise errors.ConfigurationError(
            f"Horizon must be positive, got {horizon_hours} hours"
        )
    return -math.expm1(-rate * horizon_hours / HOURS_PER_YEAR)


def validate_instance(g: GridInstance) -> None:
    """Checks every structural invariant, raising InstanceError on the first failure."""
    if len(g.buses) == 0:
        raise errors.InstanceError("Instance has no buses")
    if g.base_mva <= 0:
        raise errors.InstanceError(f"base_mva must be positive, got {g.base_mva}")
    if g.loss_cost < 0:
        raise errors.InstanceError(f"loss_cost must be nonnegative, got {g.loss_cost}")

    if list(g.bus_ids) != sorted(g.bus_ids) or list(g.line_ids) != sorted(g.line_ids):
        raise errors.InstanceError("buses and lines must be sorted by id")

    bus_by_id = {}
    for b in g.buses:
        entity = f"bus {b.id}"
        if b.id in bus_by_id:
            raise errors.InstanceError("duplicate bus id", entity)
        bus_by_id[b.id] = b
        if not (0 < b.v_min <= b.v_max):
            raise errors.InstanceError(
                f"voltage bounds must satisfy 0 < v_min <= v_max, got "
                f"[{b.v_min}, {b.v_max}]", entity,
            )
        if b.demand_p < 0:
            raise errors.InstanceError("negative demand", entity)
        if not (0 < b.power_factor <= 1):
            raise errors.InstanceError(
                f"power factor must lie in (0, 1], got {b.power_factor}", entity
            )

    if len(g.substations) == 0:
        raise errors.InstanceError("Instance has no substation")
    sub_buses = set()
    for s in g.substations:
        entity = f"substation at bus {s.bus}"
        if s.bus not in bus_by_id:
            raise errors.InstanceError("references unknown bus", entity)
        if s.bus in sub_buses:
            raise errors.InstanceError("duplicate substation", entity)
        sub_buses.add(s.bus)
        bus = bus_by_id[s.bus]
        if not bus.is_substation:
            raise errors.InstanceError("bus is not flagged is_substation", entity)
        p_post, q_min_post, q_max_post = s.post_limits
        if s.p_max < 0 or p_post < 0:
            raise errors.InstanceError("negative p_max", entity)
        if s.q_min > s.q_max or q_min_post > q_max_post:
            raise errors.InstanceError("q_min exceeds q_max", entity)
        if s.energy_cost < 0:
            raise errors.InstanceError("negative energy cost", entity)
        if not (bus.v_min <= s.v_ref <= bus.v_max):
            raise errors.InstanceError(
                f"v_ref {s.v_ref} outside [{bus.v_min}, {bus.v_max}]", entity
            )
    for b in g.buses:
        if b.is_substation and b.id not in sub_buses:
            raise errors.InstanceError("flagged is_substation without data", f"bus {b.id}")

    line_ids = set()
    fixed = nx.utils.UnionFind(bus_by_id)
    for l in g.lines:
        entity = f"line {l.id}"
        if l.id in line_ids:
            raise errors.InstanceError("duplicate line id", entity)
        line_ids.add(l.id)
        for end in (l.from_bus, l.to_bus):
            if end not in bus_by_id:
                raise errors.InstanceError(f"references unknown bus {end}", entity)
        if l.from_bus == l.to_bus:
            raise errors.InstanceError("from_bus equals to_bus", entity)
        if l.f_max <= 0:
            raise errors.InstanceError("f_max must be positive", entity)
        if l.r < 0:
            raise errors.InstanceError("negative resistance", entity)
        if l.switch_cost < 0:
            raise errors.InstanceError("negative switch cost", entity)
        if not l.switchable:
            if not l.initial_closed:
                raise errors.InstanceError("non-switchable line must be closed", entity)
            if fixed[l.from_bus] == fixed[l.to_bus]:
                raise errors.UnrepairableCycleError(
                    "non-switchable lines form a cycle", entity
                )
            fixed.union(l.from_bus, l.to_bus)

    switchable = {l.id for l in g.lines if l.switchable}
    for k, pattern in enumerate(g.forbidden_patterns):
        if len(pattern) == 0:
            raise errors.InstanceError("empty forbidden pattern", f"pattern {k}")
        for lid in pattern:
            if lid not in switchable:
                raise errors.InstanceError(
                    f"contains line {lid}, which is not switchable", f"pattern {k}"
                )


def full_switching(g: GridInstance, z: Dict[int, int]) -> np.ndarray:
    """Expands a switchable-line map (by id) to a 0/1 vector over line positions.

    Non-switchable lines are always 1. Switchable lines missing from z keep
    their initial status.
    """
    out = g.initial_switching()
    for i, l in enumerate(g.lines):
        if l.switchable and l.id in z:
            out[i] = int(round(z[l.id]))
    return out
