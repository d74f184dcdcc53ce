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

"""Parses instance files into GridInstance objects and writes them back.

An instance file is a JSON document:

  {
    "base_mva": 10.0,
    "loss_cost": 1.0,
    "buses": [{"id", "demand_p", "power_factor", "v_min", "v_max",
               "is_substation"}, ...],
    "lines": [{"id", "from_bus", "to_bus", "r", "x", "f_max", "switchable",
               "initial_closed", "switch_cost"}, ...],
    "substations": [{"bus", "p_max", "q_min", "q_max", "energy_cost", "v_ref",
                     "p_max_post"?, "q_min_post"?, "q_max_post"?}, ...],
    "forbidden_patterns": [[line id, ...], ...]          (optional)
  }

Powers are per-unit on base_mva. When forbidden_patterns is absent the rules
are generated from the simple cycles that closing switchable lines can form.
"""
import dataclasses
import json
import logging
from typing import Any, Mapping, Tuple, Type

from gridfire import errors
from gridfire.grid import radiality
from gridfire.grid.instance import (
    Bus,
    GridInstance,
    Line,
    Substation,
    validate_instance,
)


# field -> (type, required)
_BUS_SCHEMA = {
    "id": (int, True),
    "demand_p": (float, True),
    "power_factor": (float, True),
    "v_min": (float, True),
    "v_max": (float, True),
    "is_substation": (bool, False),
}
_LINE_SCHEMA = {
    "id": (int, True),
    "from_bus": (int, True),
    "to_bus": (int, True),
    "r": (float, True),
    "x": (float, True),
    "f_max": (float, True),
    "switchable": (bool, False),
    "initial_closed": (bool, False),
    "switch_cost": (float, False),
}
_SUBSTATION_SCHEMA = {
    "bus": (int, True),
    "p_max": (float, True),
    "q_min": (float, True),
    "q_max": (float, True),
    "energy_cost": (float, True),
    "v_ref": (float, True),
    "p_max_post": (float, False),
    "q_min_post": (float, False),
    "q_max_post": (float, False),
}
_TOP_LEVEL = {"base_mva", "loss_cost", "buses", "lines", "substations",
              "forbidden_patterns"}


def _coerce(value: Any, kind: Type, entity: str, field: str):
    if kind is bool:
        if not isinstance(value, bool):
            raise errors.InstanceError(f"field '{field}' must be a boolean", entity)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise errors.InstanceError(f"field '{field}' must be numeric", entity)
    if kind is int:
        if int(value) != value:
            raise errors.InstanceError(f"field '{field}' must be an integer", entity)
        return int(value)
    return float(value)


def _parse_entity(record: Mapping[str, Any], schema, cls, entity: str):
    if not isinstance(record, Mapping):
        raise errors.InstanceError("entry must be an object", entity)
    unknown = set(record) - set(schema)
    if unknown:
        raise errors.InstanceError(f"unknown fields {sorted(unknown)}", entity)
    kwargs = {}
    for field, (kind, required) in schema.items():
        if field not in record or record[field] is None:
            if required:
                raise errors.InstanceError(f"missing field '{field}'", entity)
            continue
        kwargs[field] = _coerce(record[field], kind, entity, field)
    return cls(**kwargs)


def from_dict(data: Mapping[str, Any]) -> GridInstance:
    """Builds and validates a GridInstance from its document form."""
    if not isinstance(data, Mapping):
        raise errors.InstanceError("instance document must be an object")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise errors.InstanceError(f"unknown top-level keys {sorted(unknown)}")
    for key in ("buses", "lines", "substations", "loss_cost"):
        if key not in data:
            raise errors.InstanceError(f"missing top-level key '{key}'")

    buses = [
        _parse_entity(r, _BUS_SCHEMA, Bus, f"bus #{i}")
        for i, r in enumerate(data["buses"])
    ]
    lines = [
        _parse_entity(r, _LINE_SCHEMA, Line, f"line #{i}")
        for i, r in enumerate(data["lines"])
    ]
    substations = [
        _parse_entity(r, _SUBSTATION_SCHEMA, Substation, f"substation #{i}")
        for i, r in enumerate(data["substations"])
    ]

    g = GridInstance(
        buses=tuple(sorted(buses, key=lambda b: b.id)),
        lines=tuple(sorted(lines, key=lambda l: l.id)),
        substations=tuple(sorted(substations, key=lambda s: s.bus)),
        loss_cost=_coerce(data["loss_cost"], float, "instance", "loss_cost"),
        base_mva=_coerce(data.get("base_mva", 1.0), float, "instance", "base_mva"),
    )

    patterns = data.get("forbidden_patterns")
    if patterns is None:
        validate_instance(g)
        patterns = radiality.generate_radiality_rules(g)
    else:
        patterns = tuple(
            tuple(sorted(_coerce(lid, int, f"pattern {k}", "line")
                         for lid in p))
            for k, p in enumerate(patterns)
        )
    g = dataclasses.replace(g, forbidden_patterns=tuple(patterns))
    validate_instance(g)
    return g


def _entity_to_dict(obj) -> dict:
    return {
        k: v for k, v in dataclasses.asdict(obj).items() if v is not None
    }


def to_dict(g: GridInstance) -> dict:
    return {
        "base_mva": g.base_mva,
        "loss_cost": g.loss_cost,
        "buses": [_entity_to_dict(b) for b in g.buses],
        "lines": [_entity_to_dict(l) for l in g.lines],
        "substations": [_entity_to_dict(s) for s in g.substations],
        "forbidden_patterns": [list(p) for p in g.forbidden_patterns],
    }


def load_instance(path: str) -> GridInstance:
    with open(path, "r") as fp:
        try:
            data = json.load(fp)
        except json.JSONDecodeError as e:
            raise errors.InstanceError(f"{path} is not valid JSON: {e}")
    g = from_dict(data)
    logging.info(
        "Loaded %s: %d buses, %d lines (%d switchable), %d substations, "
        "%d forbidden patterns",
        path, g.num_buses, g.num_lines, len(g.switchable_positions),
        len(g.substations), len(g.forbidden_patterns),
    )
    return g


def save_instance(g: GridInstance, path: str) -> None:
    with open(path, "w") as fp:
        fp.write(json.dumps(to_dict(g), indent=4))


def signature_fields(g: GridInstance) -> Tuple:
    """Fields a recourse multiplier depends on: topology, impedances, prices.

    Right-hand-side data (demands, limits, voltage windows) is left out;
    multipliers stay dual feasible when it changes.
    """
    return (
        tuple(
            (l.id, l.from_bus, l.to_bus, bool(l.switchable), l.r, l.x)
            for l in g.lines
        ),
        tuple((s.bus, s.energy_cost) for s in g.substations),
        g.bus_ids,
        g.loss_cost,
    )
