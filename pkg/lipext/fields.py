"""
Built-in analytic test fields and the zero extension.

Polynomial fields live in the lowest-order spaces up to their derivative.
Bump fields carry the factor (z0 - n·x)^3 for n·x < z0 and vanish on the
half-space n·x >= z0. The catalogue uses n = e_z and z0 = 0.75, which suits
Γ on the top face of the unit cube; `aligned_catalogue` moves the half-space
onto any planar Γ.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Final

import numpy as np
from numpy.typing import ArrayLike

from .const import Space
from .exceptions import GeometryError
from .geometry import FloatArray, Plane, as_points
from .mesh import OUTSIDE, Dissection, TetMesh
from .quadrature import Evaluator

_LOGGER = logging.getLogger(__name__)

BUMP_LEVEL: Final = 0.75
# Share of the extent of Ω below Γ where aligned bump fields are nonzero.
BUMP_SUPPORT: Final = 0.75
PLANAR_TOLERANCE: Final = 1e-9


@dataclass(frozen=True, kw_only=True)
class AnalyticField:
    """
    A field q or b*q with q affine (scalar or vector) and b a cubic bump in n·x.

    Scalar q uses a single gradient row in `matrix`.
    """

    key: str
    space: Space
    matrix: tuple[tuple[float, float, float], ...]
    offset: tuple[float, ...]
    level: float | None = None
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    description: str = ""
    _a: FloatArray = field(init=False, repr=False)
    _c: FloatArray = field(init=False, repr=False)
    _n: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Freeze arrays."""
        object.__setattr__(self, "_a", np.array(self.matrix, dtype=float))
        object.__setattr__(self, "_c", np.array(self.offset, dtype=float))
        object.__setattr__(self, "_n", np.array(self.normal, dtype=float))

    @property
    def scalar(self) -> bool:
        """True for g and o fields."""
        return self.space in (Space.GRAD, Space.L2)

    @property
    def breaks(self) -> tuple[Plane, ...]:
        """Planes across which the field is only piecewise polynomial."""
        return () if self.level is None else (Plane(self.normal, self.level),)

    def _bump(self, points: FloatArray) -> tuple[FloatArray, FloatArray]:
        if self.level is None:
            return np.ones(len(points)), np.zeros((len(points), 3))
        gap = np.maximum(self.level - points @ self._n, 0.0)
        return gap**3, -3.0 * gap[:, None] ** 2 * self._n

    def _affine(self, points: FloatArray) -> FloatArray:
        values = points @ self._a.T + self._c
        return values[:, 0] if self.scalar else values

    def value(self, points: ArrayLike) -> FloatArray:
        """Field values."""
        pts = as_points(points)
        bump, _ = self._bump(pts)
        q = self._affine(pts)
        return bump * q if self.scalar else bump[:, None] * q

    def derivative(self, points: ArrayLike) -> FloatArray:
        """grad, curl or div of the field depending on its space."""
        pts = as_points(points)
        bump, slope = self._bump(pts)
        q = self._affine(pts)
        a = self._a
        if self.space is Space.GRAD:
            return bump[:, None] * a[0] + q[:, None] * slope
        if self.space is Space.CURL:
            curl_q = np.array([a[2, 1] - a[1, 2], a[0, 2] - a[2, 0], a[1, 0] - a[0, 1]])
            return np.cross(slope, q) + bump[:, None] * curl_q
        if self.space is Space.DIV:
            return np.sum(slope * q, axis=1) + bump * np.trace(a)
        raise ValueError(f"The {self.space} space has no derivative")

    def __call__(self, points: ArrayLike) -> FloatArray:
        """Evaluate."""
        return self.value(points)

    def aligned(self, normal: tuple[float, float, float], level: float) -> AnalyticField:
        """The same field with its bump moved to n·x < level; polynomial fields are unchanged."""
        if self.level is None:
            return self
        return replace(self, normal=normal, level=level)


def _field(
    key: str,
    space: Space,
    matrix: list[tuple[float, float, float]],
    offset: list[float],
    level: float | None = None,
    description: str = "",
) -> AnalyticField:
    return AnalyticField(
        key=key,
        space=space,
        matrix=tuple(tuple(float(v) for v in row) for row in matrix),
        offset=tuple(float(v) for v in offset),
        level=level,
        description=description,
    )


CATALOGUE: dict[str, AnalyticField] = {
    item.key: item
    for item in (
        _field("linear-g", Space.GRAD, [(1, 2, 0)], [1], description="1 + x + 2y"),
        _field(
            "rotation-c",
            Space.CURL,
            [(0, -1, 0), (1, 0, 0), (0, 0, 0)],
            [1, 0, 0.5],
            description="(1 - y, x, 0.5)",
        ),
        _field(
            "radial-d",
            Space.DIV,
            [(1, 0, 0), (0, 1, 0), (0, 0, 1)],
            [0, 1, 0],
            description="(x, y + 1, z)",
        ),
        _field("constant-o", Space.L2, [(0, 0, 0)], [2], description="2"),
        _field(
            "bump-g",
            Space.GRAD,
            [(1, 2, 0)],
            [1],
            BUMP_LEVEL,
            description="b(z) (1 + x + 2y)",
        ),
        _field(
            "swirl-c",
            Space.CURL,
            [(0, 1, 0), (1, 0, 0), (1, 0, 0)],
            [0, 1, 0],
            BUMP_LEVEL,
            description="b(z) (y, x + 1, x)",
        ),
        _field(
            "flux-d",
            Space.DIV,
            [(1, 0, 0), (0, 1, 0), (1, 0, 0)],
            [0, 0, 1],
            BUMP_LEVEL,
            description="b(z) (x, y, 1 + x)",
        ),
        _field(
            "density-o",
            Space.L2,
            [(1, 0, 0)],
            [1],
            BUMP_LEVEL,
            description="b(z) (1 + x)",
        ),
    )
}


def get_field(key: str) -> AnalyticField:
    """Look up a catalogued field."""
    try:
        return CATALOGUE[key]
    except KeyError:
        raise ValueError(f"Unknown field {key!r}, expected one of {sorted(CATALOGUE)}") from None


def fields_for(
    space: Space, *, bump: bool, catalogue: dict[str, AnalyticField] | None = None
) -> list[AnalyticField]:
    """Catalogued fields of a space, with or without the bump factor."""
    items = (catalogue or CATALOGUE).values()
    return [f for f in items if f.space is space and (f.level is not None) == bump]


def zero_extension(f: Evaluator, mesh: TetMesh) -> Callable[[ArrayLike], FloatArray]:
    """Evaluate f inside the mesh and return zero outside it."""

    def evaluate(points: ArrayLike) -> FloatArray:
        pts = as_points(points)
        inside = mesh.locate(pts)[0] != OUTSIDE
        # f is only trusted inside the mesh, so the value shape comes from there.
        sample = pts[inside][:1] if np.any(inside) else mesh.centroids[:1]
        result = np.zeros((len(pts), *np.asarray(f(sample), dtype=float).shape[1:]))
        if np.any(inside):
            result[inside] = f(pts[inside])
        return result

    return evaluate


def bump_plane(dissection: Dissection) -> tuple[tuple[float, float, float], float]:
    """
    Outward normal n of a planar Γ and the level below which bumps live.

    The bumps vanish on n·x >= level, a half-space holding Γ and everything
    beyond it, so they vanish near the closure of Γ.
    """
    mesh = dissection.mesh
    normals = mesh.face_normals[dissection.gamma_index]
    normal = normals[0]
    if np.abs(normals - normal).max() > PLANAR_TOLERANCE:
        raise GeometryError("Bump fields vanishing near Γ need a planar Γ")
    height = float(mesh.vertices[dissection.gamma_vertices[0]] @ normal)
    depth = height - float((mesh.vertices @ normal).min())
    level = height - (1.0 - BUMP_SUPPORT) * depth
    _LOGGER.debug("Bump half-space n·x >= %.4g with n = %s", level, normal)
    return (float(normal[0]), float(normal[1]), float(normal[2])), level


def aligned_catalogue(dissection: Dissection) -> dict[str, AnalyticField]:
    """The catalogue with every bump vanishing near Γ."""
    normal, level = bump_plane(dissection)
    return {key: item.aligned(normal, level) for key, item in CATALOGUE.items()}
