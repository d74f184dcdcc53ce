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

"""Common utilities for solver runs."""
import contextlib
import dataclasses
import logging
import time
from typing import Any, Iterator, Mapping


@dataclasses.dataclass
class StageTime:
    stage: str
    seconds: float = 0.0


@contextlib.contextmanager
def timing(stage: str, level: int = logging.INFO) -> Iterator[StageTime]:
    """Times one solve stage; the yielded record holds the elapsed seconds on exit."""
    record = StageTime(stage)
    logging.debug("Solve stage '%s' running", stage)
    tic = time.perf_counter()
    try:
        yield record
    finally:
        record.seconds = time.perf_counter() - tic
        logging.log(level, "Solve stage '%s' took %.3f s", stage, record.seconds)


def param(params: Mapping[str, Any], key: str, default: Any = None) -> Any:
    """Reads an optional solver parameter from a dict or ConfigDict."""
    if params is None:
        return default
    value = params.get(key, default)
    return default if value is None else value
