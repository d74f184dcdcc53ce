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

"""General-purpose errors used throughout gridfire."""
from typing import Optional


class Error(Exception):
    """Base class for exceptions."""


class InstanceError(Error):
    """An error indicating that a grid instance is malformed or invalid."""

    def __init__(self, message: str, entity: Optional[str] = None):
        if entity is not None:
            message = f"{entity}: {message}"
        super().__init__(message)
        self.entity = entity


class UnrepairableCycleError(InstanceError):
    """An error indicating that the non-switchable network contains a cycle."""


class ConfigurationError(Error):
    """An error indicating an invalid DDU or run configuration."""


class BackendUnavailableError(Error):
    """An error indicating that a requested solver backend cannot be loaded."""


class SolverError(Error):
    """An error indicating a numeric failure reported by a solver backend."""


class ModelingError(Error):
    """An error indicating a model that must be optimal was not."""


class CalibrationError(Error):
    """An error indicating that subproblem dual bounds cut off the optimum."""


class SupportTooLargeError(Error):
    """An error indicating that a contingency support exceeds the enumeration cap."""


class SignatureMismatchError(Error):
    """An error indicating that a cut cache belongs to a different instance."""


class PreconditionError(Error):
    """An error indicating that an operation was called on invalid inputs."""
