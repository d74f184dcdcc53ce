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

"""Backend contract and dispatch."""
import abc
import logging
from typing import Any, Callable, Dict, Mapping, Optional

from gridfire import errors
from gridfire.solvers import utils
from gridfire.solvers.model_builder import ModelBuilder, SolveResult, Status


class Backend(abc.ABC):
    """An exact LP/MILP solver.

    Implementations load a ModelBuilder, honour the `time_limit`,
    `mip_rel_gap`, `feasibility_tol` and `optimality_tol` parameters, and
    return a SolveResult in the builder's own objective sense.
    """

    name = "abstract"

    @abc.abstractmethod
    def solve(self, m: ModelBuilder, params: Mapping[str, Any]) -> SolveResult:
        """Solves m and reports status, values and (for LPs) duals."""


_REGISTRY: Dict[str, Callable[[], Backend]] = {}


def register_backend(name: str, factory: Callable[[], Backend]) -> None:
    _REGISTRY[name] = factory


def get_backend(name: str) -> Backend:
    if name not in _REGISTRY:
        raise errors.BackendUnavailableError(
            f"Unknown solver backend '{name}'. Available: {sorted(_REGISTRY)}"
        )
    return _REGISTRY[name]()


def solve(m: ModelBuilder, params: Optional[Mapping[str, Any]] = None) -> SolveResult:
    """Solves m with the backend named by params['backend'] (default 'highs')."""
    backend = get_backend(utils.param(params, "backend", "highs"))
    result = backend.solve(m, params or {})
    if result.status is not Status.OPTIMAL:
        logging.debug(
            "%s solve of %s ended with status %s: %s",
            backend.name, m.name, result.status.value, result.message,
        )
    return result
