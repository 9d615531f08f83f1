"""
Run configuration: voluptuous schema, YAML loading and Γ predicates.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import ast
import dataclasses
import logging
import operator
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import voluptuous as vol
import yaml

from .const import (
    BALL_DEGREE,
    CONE_SAMPLES,
    DEFAULT_DELTA,
    DEFAULT_S_MAX,
    DEFAULT_SHIFT,
    HALTON_SEED,
    SEPARATION_PAIRS,
    SURFACE_DISTANCE_TOLERANCE,
    Space,
)
from .exceptions import ConfigError
from .fields import CATALOGUE
from .mesh import GammaPredicate

_LOGGER = logging.getLogger(__name__)

CONF_MESH = "mesh"
CONF_BOX = "box"
CONF_LSHAPE = "lshape"
CONF_GAMMA = "gamma"
CONF_T = "t"
CONF_LAYERS = "layers"
CONF_S_MAX = "s_max"
CONF_DELTA = "delta"
CONF_C = "c"
CONF_SPACE = "space"
CONF_FIELD = "field"
CONF_LADDER = "ladder"
CONF_THETA = "theta"
CONF_CONE_SAMPLES = "cone_samples"
CONF_PAIR_SAMPLES = "pair_samples"
CONF_DEGREE = "degree"
CONF_OUT = "out"
CONF_SEED = "seed"
CONF_CHECKS = "checks"

AUTO = "auto"
DEFAULT_BOX = (2, 2, 2)


def _positive(value: Any) -> float:
    number = vol.Coerce(float)(value)
    if number <= 0:
        raise vol.Invalid(f"expected a positive number, got {value}")
    return number


def _box(value: Any) -> tuple[int, int, int]:
    """Parse 'NX,NY,NZ' or a three-item list."""
    parts = value.split(",") if isinstance(value, str) else list(value)
    if len(parts) != 3:
        raise vol.Invalid(f"box needs three resolutions, got {value!r}")
    try:
        sizes = tuple(int(p) for p in parts)
    except (TypeError, ValueError) as error:
        raise vol.Invalid(f"box resolutions must be integers: {value!r}") from error
    if min(sizes) < 1:
        raise vol.Invalid(f"box resolutions must be at least 1: {value!r}")
    return sizes  # type: ignore[return-value]


def _float_list(value: Any) -> list[float]:
    items = value.split(",") if isinstance(value, str) else value
    if not isinstance(items, list | tuple):
        items = [items]
    return [_positive(item) for item in items]


def _int_list(value: Any) -> list[int]:
    items = value.split(",") if isinstance(value, str) else value
    if not isinstance(items, list | tuple):
        items = [items]
    return [vol.All(vol.Coerce(int), vol.Range(min=1))(item) for item in items]


def _thickness(value: Any) -> str | float:
    if value == AUTO:
        return AUTO
    return _positive(value)


CHECKS_SCHEMA = vol.Schema(
    {
        vol.Optional("cones", default=True): bool,
        vol.Optional("disjoint", default=True): bool,
        vol.Optional("exactness", default=True): bool,
        vol.Optional("commuting", default=True): bool,
        vol.Optional("sweep", default=True): bool,
    }
)

RUN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Exclusive(CONF_MESH, "source"): str,
        vol.Exclusive(CONF_BOX, "source"): _box,
        vol.Exclusive(CONF_LSHAPE, "source"): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional(CONF_GAMMA, default="z==1"): str,
        vol.Optional(CONF_T, default=AUTO): _thickness,
        vol.Optional(CONF_LAYERS, default=1): vol.All(vol.Coerce(int), vol.Range(min=1)),
        vol.Optional(CONF_S_MAX, default=DEFAULT_S_MAX): _positive,
        vol.Optional(CONF_DELTA, default=[DEFAULT_DELTA]): _float_list,
        vol.Optional(CONF_C, default=DEFAULT_SHIFT): _positive,
        vol.Optional(CONF_SPACE, default=str(Space.GRAD)): vol.In([str(s) for s in Space]),
        vol.Optional(CONF_FIELD, default="bump-g"): vol.In(sorted(CATALOGUE)),
        vol.Optional(CONF_LADDER, default=[2, 4, 8]): _int_list,
        vol.Optional(CONF_THETA): _positive,
        vol.Optional(CONF_CONE_SAMPLES, default=CONE_SAMPLES): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional(CONF_PAIR_SAMPLES, default=SEPARATION_PAIRS): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_DEGREE, default=BALL_DEGREE): vol.All(vol.Coerce(int), vol.In([2, 3])),
        vol.Optional(CONF_OUT, default="out"): str,
        vol.Optional(CONF_SEED, default=HALTON_SEED): vol.Coerce(int),
        vol.Optional(CONF_CHECKS, default={}): CHECKS_SCHEMA,
    }
)


@dataclass(frozen=True, kw_only=True)
class RunConfig:
    """Validated settings for one experiment."""

    mesh: Path | None = None
    box: tuple[int, int, int] | None = None
    lshape: int | None = None
    gamma: str = "z==1"
    t: str | float = AUTO
    layers: int = 1
    s_max: float = DEFAULT_S_MAX
    delta: tuple[float, ...] = (DEFAULT_DELTA,)
    c: float = DEFAULT_SHIFT
    space: Space = Space.GRAD
    field: str = "bump-g"
    ladder: tuple[int, ...] = (2, 4, 8)
    theta: float | None = None
    cone_samples: int = CONE_SAMPLES
    pair_samples: int = SEPARATION_PAIRS
    degree: int = BALL_DEGREE
    out: Path = Path("out")
    seed: int = HALTON_SEED
    checks: Mapping[str, bool] = dataclasses.field(default_factory=lambda: CHECKS_SCHEMA({}))

    @property
    def source(self) -> str:
        """Human-readable mesh source."""
        if self.mesh is not None:
            return str(self.mesh)
        if self.lshape is not None:
            return f"lshape:{self.lshape}"
        return "box:{},{},{}".format(*(self.box or DEFAULT_BOX))

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {
            "source": self.source,
            "gamma": self.gamma,
            "t": self.t,
            "layers": self.layers,
            "s_max": self.s_max,
            "delta": list(self.delta),
            "c": self.c,
            "space": str(self.space),
            "field": self.field,
            "ladder": list(self.ladder),
            "theta": self.theta,
            "cone_samples": self.cone_samples,
            "pair_samples": self.pair_samples,
            "degree": self.degree,
            "seed": self.seed,
            "checks": dict(self.checks),
        }


def build_config(data: Mapping[str, Any]) -> RunConfig:
    """Validate a raw mapping and build a RunConfig."""
    try:
        valid = RUN_CONFIG_SCHEMA(dict(data))
    except vol.Invalid as error:
        raise ConfigError(f"Invalid configuration: {error}") from error
    if CONF_MESH not in valid and CONF_LSHAPE not in valid:
        valid.setdefault(CONF_BOX, DEFAULT_BOX)
    return RunConfig(
        mesh=Path(valid[CONF_MESH]) if CONF_MESH in valid else None,
        box=valid.get(CONF_BOX),
        lshape=valid.get(CONF_LSHAPE),
        gamma=valid[CONF_GAMMA],
        t=valid[CONF_T],
        layers=valid[CONF_LAYERS],
        s_max=valid[CONF_S_MAX],
        delta=tuple(valid[CONF_DELTA]),
        c=valid[CONF_C],
        space=Space(valid[CONF_SPACE]),
        field=valid[CONF_FIELD],
        ladder=tuple(valid[CONF_LADDER]),
        theta=valid.get(CONF_THETA),
        cone_samples=valid[CONF_CONE_SAMPLES],
        pair_samples=valid[CONF_PAIR_SAMPLES],
        degree=valid[CONF_DEGREE],
        out=Path(valid[CONF_OUT]),
        seed=valid[CONF_SEED],
        checks=valid[CONF_CHECKS],
    )


def load_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """Merge schema defaults, a YAML file and overrides, later winning."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as error:
            raise ConfigError(f"Cannot read config {path}: {error}") from error
        except yaml.YAMLError as error:
            raise ConfigError(f"Config {path} is not valid YAML: {error}") from error
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config {path} must hold a mapping")
        data.update(loaded)
        _LOGGER.debug("Loaded %d keys from %s", len(loaded), path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in (CONF_MESH, CONF_BOX, CONF_LSHAPE):
            for other in (CONF_MESH, CONF_BOX, CONF_LSHAPE):
                data.pop(other, None)
        data[key] = value
    return build_config(data)


_COMPARE: dict[type[ast.cmpop], Callable[[Any, Any], Any]] = {
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}
_BINARY: dict[type[ast.operator], Callable[[Any, Any], Any]] = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}
_NAMES = ("x", "y", "z", "label")


def _evaluate(node: ast.AST, env: Mapping[str, Any]) -> Any:
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, int | float):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_evaluate(node.operand, env)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        return np.logical_not(_evaluate(node.operand, env))
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        return _BINARY[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "abs":
        (argument,) = node.args
        return np.abs(_evaluate(argument, env))
    if isinstance(node, ast.BoolOp):
        combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        values = [_evaluate(value, env) for value in node.values]
        result = values[0]
        for value in values[1:]:
            result = combine(result, value)
        return result
    if isinstance(node, ast.Compare):
        result = True
        left = _evaluate(node.left, env)
        for op, comparator in zip(node.ops, node.comparators, strict=True):
            right = _evaluate(comparator, env)
            if isinstance(op, ast.Eq):
                step = np.isclose(left, right, rtol=0.0, atol=SURFACE_DISTANCE_TOLERANCE)
            elif isinstance(op, ast.NotEq):
                step = ~np.isclose(left, right, rtol=0.0, atol=SURFACE_DISTANCE_TOLERANCE)
            else:
                step = _COMPARE[type(op)](left, right)
            result = np.logical_and(result, step)
            left = right
        return result
    raise ConfigError(f"Unsupported syntax in gamma expression: {ast.dump(node)}")


def parse_gamma(expression: str) -> GammaPredicate:
    """
    Compile a Γ selection like "z==1" or "label==3 or x>=1.5".

    Names are x, y, z and label; equality uses an absolute tolerance.
    """
    try:
        tree = ast.parse(expression.strip(), mode="eval")
    except SyntaxError as error:
        raise ConfigError(f"Cannot parse gamma expression {expression!r}") from error
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id not in _NAMES and node.id != "abs":
            raise ConfigError(f"Unknown name {node.id!r} in gamma expression")
        if isinstance(node, ast.Call) and getattr(node.func, "id", None) != "abs":
            raise ConfigError("Only abs() may be called in a gamma expression")

    def predicate(x: Any, y: Any, z: Any, label: Any) -> Any:
        env = {"x": x, "y": y, "z": z, "label": label}
        return np.broadcast_to(_evaluate(tree, env), np.shape(x))

    _evaluate(tree, {name: np.zeros(1) for name in _NAMES})
    return predicate
