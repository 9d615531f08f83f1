"""
Run reports: per-stage JSON blobs, environment stamp and redaction.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import datetime

try:
    from datetime import UTC
except ImportError:  # Python < 3.11
    from datetime import timezone

    UTC = timezone.utc
from enum import Enum
from functools import cache
from pathlib import Path
from typing import Any

import numpy as np
import scipy

_LOGGER = logging.getLogger(__name__)

MANIFEST = Path(__file__).with_name("manifest.json")

TO_REDACT = {
    "timestamp",
    "elapsed",
}


@cache
def manifest() -> dict[str, Any]:
    """Package metadata."""
    return json.loads(MANIFEST.read_text(encoding="utf-8"))


def to_jsonable(value: Any) -> Any:
    """Convert numpy values, paths and enums to plain JSON types."""
    if isinstance(value, Mapping):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, list | tuple | set | frozenset):
        items = sorted(value) if isinstance(value, set | frozenset) else value
        return [to_jsonable(item) for item in items]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


@dataclass
class Report:
    """Stage blobs plus an environment stamp."""

    seed: int
    stages: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    failed_stage: str | None = None
    summary: dict[str, Any] = field(default_factory=dict)

    def add(self, stage: str, blob: Mapping[str, Any]) -> None:
        """Record the blob of a finished stage."""
        self.stages[stage] = to_jsonable(blob)

    def record(self, key: str, value: Any) -> None:
        """Set a top-level headline value."""
        self.summary[key] = to_jsonable(value)

    def environment(self) -> dict[str, Any]:
        """Version, seed and library stamp."""
        return {
            "version": manifest()["version"],
            "seed": self.seed,
            "timestamp": datetime.now(UTC).isoformat(timespec="seconds"),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        }

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {
            **self.summary,
            "environment": self.environment(),
            "config": to_jsonable(self.config),
            "stages": self.stages,
            "failed_stage": self.failed_stage,
        }


def redact_volatile(data: Any) -> Any:
    """Drop keys that change between identical runs."""
    if isinstance(data, Mapping):
        return {key: redact_volatile(value) for key, value in data.items() if key not in TO_REDACT}
    if isinstance(data, list):
        return [redact_volatile(item) for item in data]
    return data


def dumps(data: Any) -> str:
    """Stable JSON text."""
    return json.dumps(to_jsonable(data), sort_keys=True, indent=2) + "\n"


def write_report(report: Report, path: str | Path, *, redact: bool = False) -> Path:
    """Write a report as sorted JSON."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    data = report.as_dict()
    target.write_text(dumps(redact_volatile(data) if redact else data), encoding="utf-8")
    _LOGGER.info("Wrote report %s", target)
    return target
