"""
Partial Lipschitz domain expansion and commuting projectors with partial boundary conditions.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

from .config import RunConfig, load_config
from .const import Space
from .coordinator import ExperimentCoordinator, StageFailed
from .diagnostics import manifest
from .exceptions import LipextError

__version__ = manifest()["version"]

__all__ = [
    "ExperimentCoordinator",
    "LipextError",
    "RunConfig",
    "Space",
    "StageFailed",
    "__version__",
    "load_config",
]
