"""
Ball systems, dual weights and pointwise smoothing operators.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Any

import numpy as np
from numpy.typing import ArrayLike

from .const import (
    BALL_DEGREE,
    BALL_MARGIN,
    CONTAINMENT_SAMPLES,
    DEFAULT_DELTA,
    DEFAULT_SHIFT,
    HALTON_SEED,
    SHIFT_BLENDS,
    SINGULAR_JACOBIAN,
    Space,
)
from .exceptions import ProjectorError, SmoothingError
from .expansion import ExpandedDomain
from .geometry import FloatArray, as_points, barycentric, halton, unit
from .mesh import Dissection, IntArray, TetMesh
from .quadrature import Evaluator, ball_cubature
from .transversal import VectorField

_LOGGER = logging.getLogger(__name__)

_SMOOTH_CHUNK = 64


@dataclass(frozen=True)
class KernelWeight:
    """Affine dual weight on B(center, radius) reproducing p(vertex)."""

    center: FloatArray
    radius: float
    vertex: FloatArray

    @property
    def volume(self) -> float:
        """Ball volume."""
        return 4.0 / 3.0 * math.pi * self.radius**3

    def __call__(self, points: ArrayLike) -> FloatArray:
        """f(y) = (1 + 5 (y - c)·(a - c) / ρ²) / |B|."""
        offsets = as_points(points) - self.center
        slope = 5.0 / self.radius**2 * (self.vertex - self.center)
        return (1.0 + offsets @ slope) / self.volume

    def reproduction_error(self) -> float:
        """Largest |∫ f p - p(a)| over the affine monomials."""
        rule = ball_cubature(self.center, self.radius, 3)
        weighted = rule.weights * self(rule.nodes)
        errors = [abs(weighted.sum() - 1.0)]
        for axis in range(3):
            errors.append(abs(weighted @ rule.nodes[:, axis] - self.vertex[axis]))
        return float(max(errors))


def dual_weight(center: ArrayLike, radius: float, vertex: ArrayLike) -> KernelWeight:
    """Dual weight of a ball for the point evaluation at vertex."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    return KernelWeight(
        center=np.asarray(center, dtype=float).reshape(3),
        radius=float(radius),
        vertex=np.asarray(vertex, dtype=float).reshape(3),
    )


@dataclass(frozen=True, eq=False)
class BallSystem:
    """One smoothing ball per mesh vertex, with its weighted cubature nodes."""

    mesh: TetMesh
    centers: FloatArray
    radius: float
    delta: float
    shift: float
    h: float
    shifted: IntArray
    degree: int

    @cached_property
    def _unit_rule(self) -> tuple[FloatArray, FloatArray]:
        rule = ball_cubature((0.0, 0.0, 0.0), 1.0, self.degree)
        return rule.nodes, rule.weights

    @cached_property
    def nodes(self) -> FloatArray:
        """Cubature nodes per ball, shape (V, q, 3)."""
        unit_nodes, _ = self._unit_rule
        return self.centers[:, None, :] + self.radius * unit_nodes[None]

    @cached_property
    def weights(self) -> FloatArray:
        """Cubature weights times the dual weight, shape (V, q); rows sum to one."""
        _, unit_weights = self._unit_rule
        offsets = self.nodes - self.centers[:, None, :]
        pull = (self.mesh.vertices - self.centers) * (5.0 / self.radius**2)
        volume = 4.0 / 3.0 * math.pi
        dual = (1.0 + np.einsum("vqj,vj->vq", offsets, pull)) / volume
        return unit_weights[None] * dual

    def kernel(self, vertex: int) -> KernelWeight:
        """Dual weight of one vertex's ball."""
        return dual_weight(self.centers[vertex], self.radius, self.mesh.vertices[vertex])

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        moved = np.linalg.norm(self.centers - self.mesh.vertices, axis=1)
        return {
            "delta": self.delta,
            "c": self.shift,
            "h": self.h,
            "radius": self.radius,
            "degree": self.degree,
            "n_shifted": int(len(self.shifted)),
            "max_shift": float(moved.max()) if len(moved) else 0.0,
        }


def projector_thickness(mesh: TetMesh, delta: float, c: float, kappa: float) -> float:
    """Protrusion thickness leaving room for every shifted ball."""
    return BALL_MARGIN * (c + 1.0) * mesh.h * delta / kappa


def _star_frames(dissection: Dissection, vertices: IntArray) -> tuple[FloatArray, FloatArray]:
    """
    Unit Γ normals of the vertex stars and, at Π vertices, unit vectors
    towards the centroid of the star (zero elsewhere).
    """
    mesh = dissection.mesh
    triangles = dissection.gamma_triangles
    vector_areas = mesh.face_vector_areas[dissection.gamma_index]
    pi = set(dissection.pi_vertices.tolist())
    centroids = mesh.vertices[triangles].mean(axis=1)
    inward = np.zeros((len(vertices), 3))
    normals = np.zeros((len(vertices), 3))
    for row, vertex in enumerate(vertices.tolist()):
        star = np.any(triangles == vertex, axis=1)
        normals[row] = unit(vector_areas[star].sum(axis=0))
        if vertex in pi:
            inward[row] = unit(centroids[star].mean(axis=0) - mesh.vertices[vertex])
    return normals, inward


def shift_directions(
    dissection: Dissection,
    expanded: ExpandedDomain,
    field: VectorField,
    vertices: IntArray,
    shift: float,
) -> FloatArray:
    """
    Per vertex, the candidate direction whose center at distance shift lies
    deepest in Ω^e.

    Candidates lean v̂ or the Γ normal towards the inside of the Γ star.
    """
    points = dissection.mesh.vertices[vertices]
    normals, inward = _star_frames(dissection, vertices)
    bases = (field.direction(points), normals)
    candidates = np.stack(
        [unit(base + blend * inward) for base in bases for blend in SHIFT_BLENDS], axis=1
    )
    centers = points[:, None, :] + shift * candidates
    flat = centers.reshape(-1, 3)
    depth = np.where(
        expanded.omega_e.contains(flat), expanded.omega_e.surface_distance(flat), -np.inf
    ).reshape(len(vertices), -1)
    best = np.argmax(depth, axis=1)
    return candidates[np.arange(len(vertices)), best]


def _unit_ball_samples(n: int, seed: int) -> FloatArray:
    cube = 2.0 * halton(max(2 * n, 8), 3, seed=seed) - 1.0
    inside = cube[np.linalg.norm(cube, axis=1) <= 1.0][:n]
    shell = np.vstack([np.eye(3), -np.eye(3)])
    return np.vstack([inside, shell])


def build_ball_system(
    mesh: TetMesh,
    dissection: Dissection,
    expanded: ExpandedDomain,
    field: VectorField,
    delta: float = DEFAULT_DELTA,
    c: float = DEFAULT_SHIFT,
    *,
    degree: int = BALL_DEGREE,
    samples: int = CONTAINMENT_SAMPLES,
    seed: int = HALTON_SEED,
) -> BallSystem:
    """
    Balls of radius hδ, shifted into Ω^e at the vertices of the closure of Γ.

    Containment of every shifted ball in Ω^e is checked on sample points.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if degree < 2:
        raise ValueError(f"Dual weights need a ball rule of degree 2 or more, got {degree}")
    h = mesh.h
    radius = h * delta
    centers = mesh.vertices.copy()
    shifted = dissection.gamma_vertices
    direction = shift_directions(dissection, expanded, field, shifted, c * radius)
    centers[shifted] = mesh.vertices[shifted] + c * radius * direction

    offsets = _unit_ball_samples(samples, seed) * radius * (1.0 - 1e-9)
    cloud = (centers[shifted][:, None, :] + offsets[None]).reshape(-1, 3)
    inside = expanded.omega_e.contains(cloud).reshape(len(shifted), -1)
    escaped = np.flatnonzero(~inside.all(axis=1))
    if len(escaped):
        vertex = int(shifted[escaped[0]])
        raise ProjectorError(
            f"Ball of vertex {vertex} (radius {radius:.4g}) leaves Ω^e"
            f" of thickness {expanded.t:.4g}",
            advice="use a smaller delta or a thicker protrusion",
        )
    _LOGGER.info(
        "Ball system: h=%.4g, radius=%.4g, %d shifted balls", h, radius, len(shifted)
    )
    return BallSystem(
        mesh=mesh,
        centers=centers,
        radius=radius,
        delta=delta,
        shift=c,
        h=h,
        shifted=shifted,
        degree=degree,
    )


def _pullback(space: Space, jacobian: FloatArray, values: FloatArray) -> FloatArray:
    if space is Space.GRAD:
        return values
    if space is Space.CURL:
        return np.einsum("...ab,...a->...b", jacobian, values)
    det = np.linalg.det(jacobian)
    if space is Space.L2:
        return det * values
    return det[..., None] * np.linalg.solve(jacobian, values[..., None])[..., 0]


def smooth(
    space: Space,
    f: Evaluator,
    points: ArrayLike,
    tets: ArrayLike,
    balls: BallSystem,
) -> FloatArray:
    """
    Pointwise S f at points lying in the given tets.

    The kernel integral over the four vertex balls is tensorized from the
    per-ball cubature.
    """
    mesh = balls.mesh
    pts = as_points(points)
    cells = np.broadcast_to(np.asarray(tets, dtype=np.int64), (len(pts),))
    lam = barycentric(pts, mesh.vertices[mesh.tets[cells, 0]], mesh.transforms[cells])
    q = balls.nodes.shape[1]
    tuples = np.array(list(product(range(q), repeat=4)))
    out: list[FloatArray] = []
    for start in range(0, len(pts), _SMOOTH_CHUNK):
        stop = start + _SMOOTH_CHUNK
        vertices = mesh.tets[cells[start:stop]]
        chosen = vertices[:, None, :]
        nodes = balls.nodes[chosen, tuples[None]]
        weight = np.prod(balls.weights[chosen, tuples[None]], axis=2)
        mapped = np.einsum("ni,ntij->ntj", lam[start:stop], nodes)
        grads = mesh.gradients[cells[start:stop]]
        jacobian = np.einsum("ntia,nib->ntab", nodes, grads)
        values = np.asarray(f(mapped.reshape(-1, 3)), dtype=float)
        if not np.all(np.isfinite(values)):
            raise SmoothingError("Evaluator returned non-finite values")
        values = values.reshape(*mapped.shape[:2], *values.shape[1:])
        if space is not Space.GRAD:
            singular = np.argwhere(np.abs(np.linalg.det(jacobian)) <= SINGULAR_JACOBIAN)
            if len(singular):
                row, node = singular[0]
                raise SmoothingError(
                    "Singular smoothing Jacobian",
                    node={"point": pts[start + row].tolist(), "image": mapped[row, node].tolist()},
                )
        integrand = _pullback(space, jacobian, values)
        out.append(np.einsum("nt,nt...->n...", weight, integrand))
    return np.concatenate(out)
