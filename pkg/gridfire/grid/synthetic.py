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

"""Random radial test instances."""
import dataclasses
import logging

import numpy as np

from gridfire import errors
from gridfire.grid import radiality
from gridfire.grid.instance import (
    Bus,
    GridInstance,
    Line,
    Substation,
    validate_instance,
)


def _draw_demand(rng, demand_range, quantum):
    d = float(rng.uniform(*demand_range))
    if quantum > 0:
        d = max(quantum, round(d / quantum) * quantum)
        d = round(d, 12)
    return d


def random_instance(
    rng: np.random.Generator,
    n_buses: int,
    n_ties: int = 1,
    two_substations: bool = False,
    loss_cost: float = 100.0,
    demand_range=(0.05, 0.2),
    f_max_range=(0.4, 1.2),
    impedance_range=(0.005, 0.02),
    demand_quantum: float = 0.01,
    switchable_share: float = 0.0,
) -> GridInstance:
    """Draws a radial feeder with extra switchable ties.

    Bus 1 is a substation; with two_substations bus 2 is one as well and
    roots its own tree. Every other bus hangs off a uniformly drawn earlier
    bus through a non-switchable line. Tie lines join random bus pairs that
    are not already adjacent and start open. With switchable_share > 0 each
    tree line is independently made switchable (and initially closed) with
    that probability, so switching can also open feeder sections.

    Voltage windows are uniform [0.9, 1.1] with v_ref = 1 at every substation.
    Demands are rounded to multiples of demand_quantum (0 disables), which
    keeps radial flows on the grid of a matching master expansion step.
    """
    n_roots = 2 if two_substations else 1
    if not 0.0 <= switchable_share <= 1.0:
        raise errors.ConfigurationError(
            f"switchable_share must lie in [0, 1], got {switchable_share}"
        )
    if n_buses < n_roots + 1:
        raise errors.ConfigurationError(
            f"Need at least {n_roots + 1} buses, got {n_buses}"
        )

    buses = []
    for b in range(1, n_buses + 1):
        is_sub = b <= n_roots
        buses.append(Bus(
            id=b,
            demand_p=0.0 if is_sub else _draw_demand(rng, demand_range, demand_quantum),
            power_factor=1.0 if is_sub else float(rng.uniform(0.9, 1.0)),
            v_min=0.9,
            v_max=1.1,
            is_substation=is_sub,
        ))
    total = sum(b.demand_p for b in buses)

    def draw_line(lid, fr, to, **kwargs):
        return Line(
            id=lid,
            from_bus=fr,
            to_bus=to,
            r=float(rng.uniform(*impedance_range)),
            x=float(rng.uniform(*impedance_range)),
            f_max=float(rng.uniform(*f_max_range)),
            **kwargs,
        )

    lines = []
    adjacent = set()
    for b in range(n_roots + 1, n_buses + 1):
        parent = int(rng.integers(1, b))
        if switchable_share > 0 and rng.random() < switchable_share:
            lines.append(draw_line(
                len(lines) + 1, parent, b,
                switchable=True,
                initial_closed=True,
                switch_cost=float(rng.uniform(0.5, 2.0)),
            ))
        else:
            lines.append(draw_line(len(lines) + 1, parent, b))
        adjacent.add(frozenset((parent, b)))

    candidates = [
        (u, v) for u in range(1, n_buses + 1) for v in range(u + 1, n_buses + 1)
        if frozenset((u, v)) not in adjacent
    ]
    if n_ties > len(candidates):
        raise errors.ConfigurationError(
            f"Only {len(candidates)} tie positions available, asked for {n_ties}"
        )
    for k in rng.permutation(len(candidates))[:n_ties]:
        u, v = candidates[int(k)]
        lines.append(draw_line(
            len(lines) + 1, u, v,
            switchable=True,
            initial_closed=False,
            switch_cost=float(rng.uniform(0.5, 2.0)),
        ))

    substations = tuple(
        Substation(
            bus=b,
            p_max=1.5 * total,
            q_min=-total,
            q_max=total,
            energy_cost=float(rng.uniform(1.0, 2.0)),
            v_ref=1.0,
        )
        for b in range(1, n_roots + 1)
    )
    g = GridInstance(
        buses=tuple(buses),
        lines=tuple(lines),
        substations=substations,
        loss_cost=loss_cost,
        base_mva=10.0,
    )
    validate_instance(g)
    g = dataclasses.replace(
        g, forbidden_patterns=radiality.generate_radiality_rules(g)
    )
    logging.debug(
        "Drew instance with %d buses, %d lines, %d rules",
        g.num_buses, g.num_lines, len(g.forbidden_patterns),
    )
    return g
