"""
Transversal unit vector field on the boundary, built from a partition of unity.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
from numpy.typing import ArrayLike
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .const import CLUSTER_ANGLE, FACE_SAMPLE_ORDER, FALLOFF_FRACTION
from .exceptions import GeometryError, TransversalityError
from .geometry import (
    FloatArray,
    as_points,
    face_lattice,
    point_triangle_distance,
    sample_triangles,
    unit,
)
from .mesh import Dissection, IntArray, TetMesh

_LOGGER = logging.getLogger(__name__)

_EVAL_CHUNK = 4096


class VectorField(Protocol):
    """Anything that yields unit directions at boundary points."""

    kappa: float | None

    def direction(self, points: ArrayLike) -> FloatArray:
        """Unit vectors at the given points."""


def smoothstep(s: FloatArray) -> FloatArray:
    """C1 cubic ramp from 0 (s <= 0) to 1 (s >= 1)."""
    clipped = np.clip(s, 0.0, 1.0)
    return clipped * clipped * (3.0 - 2.0 * clipped)


@dataclass(frozen=True)
class Patch:
    """One directional patch of the cover."""

    normal: FloatArray
    faces: IntArray
    width: float
    vertex: int | None = None

    @property
    def exceptional(self) -> bool:
        """Whether this is a dedicated patch around an exceptional point."""
        return self.vertex is not None


@dataclass(frozen=True, eq=False)
class BoxCover:
    """Face-cluster patches plus isolated patches at exceptional points."""

    mesh: TetMesh
    patches: tuple[Patch, ...]
    owners: dict[int, tuple[int, ...]] = field(repr=False)

    @property
    def regular(self) -> list[Patch]:
        """Face-cluster patches."""
        return [patch for patch in self.patches if not patch.exceptional]

    @property
    def dedicated(self) -> list[Patch]:
        """Exceptional-point patches."""
        return [patch for patch in self.patches if patch.exceptional]


def cluster_faces(mesh: TetMesh, *, angle: float = CLUSTER_ANGLE) -> list[IntArray]:
    """Edge-connected groups of boundary faces sharing one normal."""
    faces = mesh.boundary_faces
    normals = mesh.face_normals
    edges: dict[tuple[int, int], list[int]] = defaultdict(list)
    for index, (a, b, c) in enumerate(faces.tolist()):
        for pair in ((a, b), (b, c), (c, a)):
            edges[tuple(sorted(pair))].append(index)
    rows, cols = [], []
    cos_limit = np.cos(angle)
    for first, second in edges.values():
        if normals[first] @ normals[second] >= cos_limit:
            rows.append(first)
            cols.append(second)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(faces), len(faces)))
    _, labels = connected_components(graph, directed=False)
    order = np.argsort(labels, kind="stable")
    groups = np.split(order, np.flatnonzero(np.diff(labels[order])) + 1)
    return sorted(groups, key=lambda group: int(group.min()))


def build_box_cover(
    mesh: TetMesh, dissection: Dissection, *, isolate_exceptional: bool = True
) -> BoxCover:
    """One patch per face cluster and one isolated patch per exceptional point."""
    if np.any(mesh.face_areas <= 0.0):
        raise GeometryError("Boundary has zero-area faces")
    faces = mesh.boundary_faces
    edge_lengths = np.linalg.norm(
        mesh.vertices[faces] - mesh.vertices[np.roll(faces, 1, axis=1)], axis=2
    )
    width = FALLOFF_FRACTION * float(edge_lengths.min())

    clusters = cluster_faces(mesh)
    patches = [
        Patch(normal=mesh.face_normals[group[0]].copy(), faces=group, width=width)
        for group in clusters
    ]
    owners: dict[int, tuple[int, ...]] = {}
    for index, group in enumerate(clusters):
        for face in group.tolist():
            owners[face] = (index,)

    if isolate_exceptional and dissection.exceptional_points:
        cluster_of = np.empty(len(faces), dtype=np.int64)
        for index, group in enumerate(clusters):
            cluster_of[group] = index
        points = dissection.exceptional_points
        coords = mesh.vertices[list(points)]
        for position, vertex in enumerate(points):
            incident = np.flatnonzero(np.any(faces == vertex, axis=1))
            adjacent = np.unique(cluster_of[incident])
            direction = unit(sum(patches[j].normal for j in adjacent.tolist()))
            others = np.flatnonzero(~np.isin(cluster_of, adjacent))
            gaps = []
            if len(others):
                a, b, c = (mesh.vertices[faces[others, i]] for i in range(3))
                gaps.append(point_triangle_distance(coords[position][None], a, b, c).min())
            if len(points) > 1:
                others = np.delete(coords, position, axis=0)
                spacing = np.linalg.norm(others - coords[position], axis=1)
                gaps.append(spacing.min())
            radius = 0.5 * float(min(gaps)) if gaps else 0.5 * mesh.bbox_diagonal
            patches.append(
                Patch(normal=direction, faces=incident, width=radius, vertex=int(vertex))
            )
    _LOGGER.info(
        "Cover: %d cluster patches, %d exceptional patches",
        len(clusters),
        len(patches) - len(clusters),
    )
    return BoxCover(mesh=mesh, patches=tuple(patches), owners=owners)


class TransversalField:
    """Normalized partition-of-unity blend of patch directions."""

    def __init__(self, cover: BoxCover) -> None:
        """Init."""
        self.cover = cover
        self.kappa: float | None = None
        mesh = cover.mesh
        regular = cover.regular
        self._order = np.concatenate([patch.faces for patch in regular])
        self._starts = np.cumsum([0] + [len(patch.faces) for patch in regular[:-1]])
        self._normals = np.array([patch.normal for patch in regular])
        self._widths = np.array([patch.width for patch in regular])
        corners = mesh.vertices[mesh.boundary_faces[self._order]]
        self._a, self._b, self._c = corners[:, 0], corners[:, 1], corners[:, 2]
        dedicated = cover.dedicated
        self._centers = mesh.vertices[[patch.vertex for patch in dedicated]].reshape(-1, 3)
        self._radii = np.array([patch.width for patch in dedicated])
        self._directions = np.array([patch.normal for patch in dedicated]).reshape(-1, 3)

    def weights(self, points: ArrayLike) -> tuple[FloatArray, FloatArray]:
        """Normalized weights of regular and dedicated patches."""
        queries = as_points(points)
        distance = point_triangle_distance(queries, self._a, self._b, self._c)
        nearest = np.minimum.reduceat(distance, self._starts, axis=1)
        regular = smoothstep(1.0 - nearest / self._widths)
        if len(self._centers):
            core = 0.5 * self._radii
            gap = np.linalg.norm(queries[:, None] - self._centers[None], axis=2)
            isolation = smoothstep((gap - core) / core)
            regular = regular * np.prod(isolation, axis=1, keepdims=True)
            dedicated = 1.0 - isolation
        else:
            dedicated = np.zeros((len(queries), 0))
        total = regular.sum(axis=1) + dedicated.sum(axis=1)
        if np.any(total <= 0.0):
            bad = queries[np.flatnonzero(total <= 0.0)[0]]
            raise TransversalityError(f"No patch covers the point {bad.tolist()}")
        return regular / total[:, None], dedicated / total[:, None]

    def direction(self, points: ArrayLike) -> FloatArray:
        """Evaluate v̂ at boundary points."""
        queries = as_points(points)
        out = np.empty_like(queries)
        for start in range(0, len(queries), _EVAL_CHUNK):
            chunk = queries[start : start + _EVAL_CHUNK]
            regular, dedicated = self.weights(chunk)
            blend = regular @ self._normals + dedicated @ self._directions
            norm = np.linalg.norm(blend, axis=1)
            if np.any(norm < 1e-12):
                bad = chunk[np.flatnonzero(norm < 1e-12)[0]]
                raise TransversalityError(
                    f"Patch directions cancel at {bad.tolist()}; the cover is inconsistent"
                )
            out[start : start + len(chunk)] = blend / norm[:, None]
        return out

    def transport(self, points: ArrayLike, s: float | FloatArray) -> FloatArray:
        """Move boundary points by s along v̂."""
        queries = as_points(points)
        return queries + np.reshape(s, (-1, 1)) * self.direction(queries)

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {
            "kappa": self.kappa,
            "n_patches": len(self.cover.patches),
            "exceptional": [
                {"vertex": patch.vertex, "radius": patch.width}
                for patch in self.cover.dedicated
            ],
        }


class ConstantField:
    """A fixed direction everywhere."""

    def __init__(self, direction: ArrayLike, *, kappa: float | None = None) -> None:
        """Init."""
        self.vector = unit(direction).reshape(3)
        self.kappa = kappa

    def direction(self, points: ArrayLike) -> FloatArray:
        """Return the constant direction at every point."""
        return np.broadcast_to(self.vector, as_points(points).shape).copy()

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {"kappa": self.kappa, "constant": self.vector.tolist()}


def boundary_face_samples(
    mesh: TetMesh, order: int, faces: IntArray | None = None
) -> tuple[FloatArray, IntArray]:
    """Lattice points on the closed boundary faces and their face index."""
    chosen = np.arange(len(mesh.boundary_faces)) if faces is None else np.asarray(faces)
    lattice = face_lattice(order)
    points = sample_triangles(mesh.vertices[mesh.boundary_faces[chosen]], lattice)
    return points.reshape(-1, 3), np.repeat(chosen, len(lattice))


def compute_transversality(
    field: VectorField,
    mesh: TetMesh,
    *,
    order: int = FACE_SAMPLE_ORDER,
    faces: IntArray | None = None,
) -> float:
    """Smallest v̂·ν over lattice samples of each face, stored on the field."""
    points, owner = boundary_face_samples(mesh, order, faces)
    dots = np.sum(field.direction(points) * mesh.face_normals[owner], axis=1)
    kappa = float(dots.min())
    if kappa <= 0.0:
        worst = points[int(np.argmin(dots))]
        raise TransversalityError(f"Field is not transversal at {worst.tolist()}: {kappa:.3e}")
    field.kappa = kappa
    _LOGGER.info("Transversality constant %.6f over %d samples", kappa, len(points))
    return kappa


def build_field(cover: BoxCover, *, order: int = FACE_SAMPLE_ORDER) -> TransversalField:
    """Blend the cover into a unit field and certify its transversality."""
    transversal = TransversalField(cover)
    compute_transversality(transversal, cover.mesh, order=order)
    return transversal


@dataclass(frozen=True)
class ConstancyCheck:
    """Result of probing a field around an exceptional point."""

    constant: bool
    meaningful: bool
    max_deviation: float


def check_constant_near_exceptional(
    field: TransversalField, vertex: int, radius: float, *, order: int = 8
) -> ConstancyCheck:
    """Whether v̂ is constant on the boundary within radius of an exceptional point."""
    mesh = field.cover.mesh
    center = mesh.vertices[vertex]
    patch = next((p for p in field.cover.dedicated if p.vertex == vertex), None)
    meaningful = patch is not None and radius <= 0.5 * patch.width
    if not meaningful:
        _LOGGER.warning(
            "Radius %.3g around vertex %d is outside the guaranteed core", radius, vertex
        )

    incident = np.flatnonzero(np.any(mesh.boundary_faces == vertex, axis=1))
    samples = [center[None]]
    for face in mesh.boundary_faces[incident]:
        rest = [v for v in face.tolist() if v != vertex]
        spokes = mesh.vertices[rest] - center
        scale = min(1.0, radius / float(np.linalg.norm(spokes, axis=1).max()))
        corners = np.vstack([center, center + scale * spokes])
        samples.append(sample_triangles(corners[None], face_lattice(order))[0])
    values = field.direction(np.vstack(samples))
    deviation = float(np.abs(values - values[0]).max())
    return ConstancyCheck(
        constant=deviation <= 1e-12, meaningful=meaningful, max_deviation=deviation
    )


def field_lipschitz_constant(
    field: VectorField,
    mesh: TetMesh,
    *,
    order: int = FACE_SAMPLE_ORDER,
    radius: float | None = None,
) -> float:
    """Largest difference quotient of v̂ over nearby boundary sample pairs."""
    points, _ = boundary_face_samples(mesh, order)
    points = np.unique(np.round(points, 12), axis=0)
    reach = radius if radius is not None else mesh.h
    pairs = cKDTree(points).query_pairs(reach, output_type="ndarray")
    if len(pairs) == 0:
        return 0.0
    values = field.direction(points)
    change = np.linalg.norm(values[pairs[:, 0]] - values[pairs[:, 1]], axis=1)
    span = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
    return float((change / span).max())
