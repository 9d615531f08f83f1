"""Tests for run reports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from lipext import __version__
from lipext.const import Space, Stage
from lipext.diagnostics import Report, dumps, manifest, redact_volatile, to_jsonable, write_report


def test_manifest() -> None:
    assert manifest()["domain"] == "lipext"
    assert __version__ == manifest()["version"]


def test_to_jsonable() -> None:
    value = {
        Stage.LOAD: np.array([1, 2]),
        "flag": np.bool_(True),
        "count": np.int64(3),
        "size": np.float32(0.5),
        "space": Space.CURL,
        "path": Path("out/report.json"),
        "set": {3, 1, 2},
        "pair": (np.float64(1.5), None),
    }
    assert to_jsonable(value) == {
        "load": [1, 2],
        "flag": True,
        "count": 3,
        "size": 0.5,
        "space": "c",
        "path": "out/report.json",
        "set": [1, 2, 3],
        "pair": [1.5, None],
    }


def test_redact_volatile() -> None:
    data = {"environment": {"timestamp": "now", "seed": 1}, "stages": [{"elapsed": 2, "ok": 1}]}
    assert redact_volatile(data) == {"environment": {"seed": 1}, "stages": [{"ok": 1}]}


def test_dumps_is_sorted() -> None:
    assert dumps({"b": 1, "a": np.int32(2)}) == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_write_report(tmp_path: Path) -> None:
    """Two redacted writes of the same report are identical."""
    report = Report(seed=7, config={"gamma": "z==1"})
    report.add(Stage.LOAD, {"n_tets": np.int64(48)})
    report.failed_stage = str(Stage.DISSECT)
    first = write_report(report, tmp_path / "a" / "report.json", redact=True)
    second = write_report(report, tmp_path / "b" / "report.json", redact=True)
    assert first.read_text(encoding="utf-8") == second.read_text(encoding="utf-8")
    data = json.loads(first.read_text(encoding="utf-8"))
    assert data["stages"] == {"load": {"n_tets": 48}}
    assert data["failed_stage"] == "dissect"
    assert data["environment"]["seed"] == 7
    assert "timestamp" not in data["environment"]
    full = json.loads(write_report(report, tmp_path / "full.json").read_text(encoding="utf-8"))
    assert "timestamp" in full["environment"]


def test_report_headline_values() -> None:
    report = Report(seed=7)
    report.record("kappa", np.float64(0.5))
    report.record("checks", {"disjoint": np.bool_(True)})
    data = report.as_dict()
    assert data["kappa"] == 0.5
    assert data["checks"] == {"disjoint": True}
    assert data["failed_stage"] is None
