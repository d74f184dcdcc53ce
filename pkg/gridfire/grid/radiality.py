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

"""Forbidden switching patterns that keep the network radial.

The non-switchable lines form a forest. Each of its trees is contracted into
a single node and each switchable line becomes a two-edge path between
those nodes. Every simple cycle of that graph is a set of switchable lines
that must not be closed together; avoiding all of them keeps any switching
state acyclic.
"""
import logging
from typing import List, Mapping, Sequence, Tuple

import networkx as nx

from gridfire import errors
from gridfire.grid.instance import GridInstance


DEFAULT_MAX_RULES = 100000


def fixed_components(g: GridInstance) -> nx.utils.UnionFind:
    """Union-find over buses joined by non-switchable lines.

    Raises:
      UnrepairableCycleError: Two buses are joined twice by fixed lines.
    """
    forest = nx.utils.UnionFind(g.bus_ids)
    for line in g.lines:
        if line.switchable:
            continue
        if forest[line.from_bus] == forest[line.to_bus]:
            raise errors.UnrepairableCycleError(
                "non-switchable lines form a cycle", f"line {line.id}"
            )
        forest.union(line.from_bus, line.to_bus)
    return forest


def switching_graph(g: GridInstance) -> Tuple[nx.Graph, List[int]]:
    """Contracted graph with every switchable line subdivided by its own node.

    Component nodes are ("bus", root) and line nodes ("line", id), so parallel
    switchable lines between two components stay distinct edges of a simple
    graph. Returns the graph and the ids of switchable lines whose ends fall
    in one component.
    """
    forest = fixed_components(g)
    graph = nx.Graph()
    graph.add_nodes_from(("bus", forest[b]) for b in g.bus_ids)
    self_loops = []
    for l in g.lines:
        if not l.switchable:
            continue
        u, v = forest[l.from_bus], forest[l.to_bus]
        if u == v:
            self_loops.append(l.id)
            continue
        graph.add_edge(("bus", u), ("line", l.id))
        graph.add_edge(("line", l.id), ("bus", v))
    return graph, self_loops


def generate_radiality_rules(
    g: GridInstance, max_rules: int = DEFAULT_MAX_RULES,
) -> Tuple[Tuple[int, ...], ...]:
    """Enumerates the cycles that closing switchable lines can create.

    Args:
      g: A grid instance. Its forbidden_patterns field is ignored.
      max_rules: Refuse to enumerate beyond this many cycles.
    Returns:
      Sorted tuple of rules, each a sorted tuple of switchable line ids.
    Raises:
      UnrepairableCycleError: The non-switchable network is already cyclic.
      InstanceError: More than max_rules cycles exist.
    """
    graph, self_loops = switching_graph(g)
    # Both ends already joined by fixed lines.
    rules = {(lid,) for lid in self_loops}
    for cycle in nx.simple_cycles(graph):
        rules.add(tuple(sorted(node[1] for node in cycle if node[0] == "line")))
        if len(rules) > max_rules:
            raise errors.InstanceError(f"more than {max_rules} radiality rules")

    out = tuple(sorted(rules, key=lambda r: (len(r), r)))
    logging.info(
        "Generated %d radiality rules over %d switchable lines",
        len(out), len(g.switchable_positions),
    )
    return out


def closed_lines(g: GridInstance, z: Mapping[int, int]) -> List[int]:
    """Ids of lines in service under switching state z (keyed by line id)."""
    return [
        l.id for l in g.lines
        if not l.switchable or int(round(z.get(l.id, int(l.initial_closed)))) == 1
    ]


def is_radial(g: GridInstance, z: Mapping[int, int]) -> bool:
    """True when the closed lines under z contain no cycle."""
    by_id = {l.id: l for l in g.lines}
    graph = nx.MultiGraph()
    graph.add_nodes_from(g.bus_ids)
    graph.add_edges_from(
        (by_id[lid].from_bus, by_id[lid].to_bus) for lid in closed_lines(g, z)
    )
    return nx.is_forest(graph)


def violated_patterns(
    patterns: Sequence[Sequence[int]], z: Mapping[int, int],
) -> List[Tuple[int, ...]]:
    """Patterns whose lines are all closed under z."""
    return [
        tuple(p) for p in patterns
        if all(int(round(z.get(lid, 0))) == 1 for lid in p)
    ]
