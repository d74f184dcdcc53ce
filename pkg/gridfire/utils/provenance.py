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

"""Identifiers stamped on every artifact."""
import hashlib
import json
from typing import Any, Dict, Mapping

import numpy as np

from gridfire import errors
from gridfire.grid.instance import GridInstance
from gridfire.grid.parsing import signature_fields


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"Cannot hash object of type {type(obj).__name__}")


def config_hash(obj: Any) -> str:
    """sha256 of the canonical JSON form of a config, first 16 hex digits."""
    text = json.dumps(obj, sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def instance_signature(g: GridInstance) -> Dict[str, Any]:
    topology = json.dumps(signature_fields(g))
    return {
        "num_buses": g.num_buses,
        "num_lines": g.num_lines,
        "topology_hash": hashlib.sha256(topology.encode("utf-8")).hexdigest(),
    }


def check_signature(g: GridInstance, signature: Mapping[str, Any], what: str) -> None:
    expected = instance_signature(g)
    for key, value in expected.items():
        if signature.get(key) != value:
            raise errors.SignatureMismatchError(
                f"{what} was written for a different instance: {key} is "
                f"{signature.get(key)!r}, expected {value!r}"
            )


def header_lines(fields: Mapping[str, Any]) -> str:
    """'# key=value' lines prepended to CSV artifacts."""
    return "".join(f"# {k}={v}\n" for k, v in fields.items())
