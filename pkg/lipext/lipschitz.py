"""
Sampling checks for Lipschitz hypographs and the cone property.

Passing checks are evidence at the stated sample density; every failure
carries a certificate that can be re-checked directly.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial.distance import pdist

from .const import (
    CONE_SAMPLES,
    CONE_SEED,
    HYPOGRAPH_GRID,
    MAX_CERTIFICATES,
    SURFACE_DISTANCE_TOLERANCE,
)
from .exceptions import GeometryError
from .geometry import (
    FloatArray,
    as_points,
    best_cone_direction,
    face_lattice,
    halton,
    orthonormal_frame,
    point_triangle_distance,
    ray_triangle_hits,
    sample_triangles,
    unit,
)
from .mesh import TetMesh

_LOGGER = logging.getLogger(__name__)

DirectionField = Callable[[FloatArray], FloatArray]


def gamma_from(lipschitz: float) -> float:
    """Angle whose tangent is the Lipschitz constant."""
    return math.atan(lipschitz)


@dataclass(frozen=True)
class CoordinateBox:
    """Rotated box around an anchor with the third axis along û."""

    anchor: FloatArray
    frame: FloatArray
    half_width: float
    half_height: float

    def __post_init__(self) -> None:
        """Validate the frame and extents."""
        if self.half_width <= 0 or self.half_height <= 0:
            raise ValueError(
                f"Box extents must be positive, got r={self.half_width}, h={self.half_height}"
            )
        if not np.allclose(self.frame @ self.frame.T, np.eye(3), atol=1e-12):
            raise ValueError("Box frame is not orthonormal")

    @classmethod
    def around(
        cls, anchor: ArrayLike, u_hat: ArrayLike, half_width: float, half_height: float
    ) -> CoordinateBox:
        """Box at anchor whose height axis is u_hat."""
        return cls(
            anchor=as_points(anchor)[0],
            frame=orthonormal_frame(u_hat),
            half_width=half_width,
            half_height=half_height,
        )

    @property
    def direction(self) -> FloatArray:
        """Return û."""
        return self.frame[2]

    def corners(self) -> FloatArray:
        """The 8 box corners."""
        signs = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1], indexing="ij")).reshape(3, -1).T
        scale = np.array([self.half_width, self.half_width, self.half_height])
        return self.anchor + (signs * scale) @ self.frame


@dataclass(frozen=True)
class HypographFit:
    """Boundary heights sampled over a coordinate box."""

    box: CoordinateBox
    samples: FloatArray
    single_valued: bool
    lipschitz: float | None
    gamma_m: float | None

    def as_dict(self) -> dict[str, Any]:
        """JSON view; the constant is a sampled lower bound."""
        return {
            "single_valued": self.single_valued,
            "M": self.lipschitz,
            "M_is_lower_bound": True,
            "gamma_M": self.gamma_m,
            "grid": int(math.isqrt(len(self.samples))),
        }


@dataclass(frozen=True)
class ConeSpec:
    """Open cone of half-angle theta and height h along a unit direction."""

    direction: FloatArray
    theta: float
    height: float

    def __post_init__(self) -> None:
        """Validate the cone."""
        if not 0.0 < self.theta < math.pi / 2 or self.height <= 0.0:
            raise GeometryError(
                f"Degenerate cone: theta={self.theta}, h={self.height}"
            )
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-12:
            object.__setattr__(self, "direction", unit(self.direction))

    def sample(self, n: int, rng: np.random.Generator) -> FloatArray:
        """Rejection-sample n points of the open cone."""
        frame = orthonormal_frame(self.direction)
        radius = self.height * math.tan(self.theta)
        accepted: list[FloatArray] = []
        total = 0
        while total < n:
            batch = rng.uniform(
                [-radius, -radius, 0.0], [radius, radius, self.height], size=(2 * n + 16, 3)
            )
            lateral = np.hypot(batch[:, 0], batch[:, 1])
            keep = batch[(lateral < batch[:, 2] * math.tan(self.theta)) & (batch[:, 2] > 0)]
            accepted.append(keep)
            total += len(keep)
        return np.concatenate(accepted)[:n] @ frame

    def contains(self, points: FloatArray) -> np.ndarray:
        """Whether points lie in the open cone."""
        frame = orthonormal_frame(self.direction)
        local = points @ frame.T
        lateral = np.hypot(local[:, 0], local[:, 1])
        tan = math.tan(self.theta)
        return (lateral < local[:, 2] * tan) & (local[:, 2] * tan < self.height * tan)


@dataclass
class ConeReport:
    """Outcome of a cone property check at one boundary point."""

    passed: bool
    n_samples: int
    worst_margin: float | None
    violations: list[dict[str, list[float]]] = field(default_factory=list)
    vacuous: bool = False

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {
            "passed": self.passed,
            "n_samples": self.n_samples,
            "worst_margin": self.worst_margin,
            "violations": self.violations,
            "vacuous": self.vacuous,
        }


@dataclass
class UniformConeReport:
    """Aggregate of cone checks over boundary samples."""

    passed: bool
    n_points: int
    n_samples: int
    n_violations: int
    worst_margin: float | None
    violations: list[dict[str, list[float]]] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        """JSON view; certificates are capped."""
        return {
            "passed": self.passed,
            "n_points": self.n_points,
            "n_samples": self.n_samples,
            "n_violations": self.n_violations,
            "worst_margin": self.worst_margin,
            "violations": self.violations,
        }


def _require_on_surface(mesh: TetMesh, p: FloatArray) -> None:
    distance = float(mesh.surface_distance(p)[0])
    if distance > SURFACE_DISTANCE_TOLERANCE * max(1.0, mesh.bbox_diagonal):
        raise GeometryError(f"Point {p.tolist()} is {distance:.3e} off the boundary")


def fit_coordinate_box(
    mesh: TetMesh,
    p: ArrayLike,
    u_hat: ArrayLike,
    r: float,
    h: float,
    *,
    grid: int = HYPOGRAPH_GRID,
) -> HypographFit:
    """Ray-cast the boundary over a box grid and estimate its Lipschitz constant."""
    box = CoordinateBox.around(p, u_hat, r, h)
    _require_on_surface(mesh, box.anchor)
    lo = mesh.vertices.min(axis=0) - h
    hi = mesh.vertices.max(axis=0) + h
    corners = box.corners()
    if np.any(corners < lo - 1e-12) or np.any(corners > hi + 1e-12):
        raise GeometryError("Coordinate box exits the mesh bounding region")

    axis = np.linspace(-r, r, grid)
    x1, x2 = (a.ravel() for a in np.meshgrid(axis, axis, indexing="ij"))
    e1, e2, u = box.frame
    origins = box.anchor + np.outer(x1, e1) + np.outer(x2, e2) - h * u
    a, b, c = (mesh.vertices[mesh.boundary_faces[:, i]] for i in range(3))
    t, hit = ray_triangle_hits(origins, u, a, b, c)
    hit &= (t >= -1e-12) & (t <= 2.0 * h + 1e-12)

    heights = np.full(len(origins), np.nan)
    single = True
    for ray in range(len(origins)):
        distinct = np.unique(np.round(t[ray, hit[ray]], 9))
        if len(distinct) == 1:
            heights[ray] = distinct[0] - h
        else:
            single = False
    samples = np.column_stack([x1, x2, heights])
    if not single:
        _LOGGER.debug("Boundary is not single-valued over the box at %s", box.anchor)
        return HypographFit(box, samples, False, None, None)

    slopes = pdist(heights[:, None]) / pdist(samples[:, :2])
    lipschitz = float(slopes.max()) if len(slopes) else 0.0
    return HypographFit(box, samples, True, lipschitz, gamma_from(lipschitz))


def check_perturbed_direction(
    lipschitz: float, u_hat: ArrayLike, v_hat: ArrayLike, *, margin: float = 0.0
) -> bool:
    """Whether sin(arctan M) < û·v̂ - margin."""
    if lipschitz < 0 or not math.isfinite(lipschitz):
        raise ValueError(f"Lipschitz constant must be finite and >= 0, got {lipschitz}")
    dot = float(np.dot(unit(u_hat), unit(v_hat)))
    return math.sin(gamma_from(lipschitz)) < dot - margin


def _structural_points(mesh: TetMesh) -> FloatArray:
    corners = mesh.corners
    pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    midpoints = np.concatenate([0.5 * (corners[:, i] + corners[:, j]) for i, j in pairs])
    faces = sample_triangles(mesh.vertices[mesh.boundary_faces], face_lattice(3))
    return np.unique(
        np.round(np.vstack([mesh.vertices, midpoints, faces.reshape(-1, 3)]), 12), axis=0
    )


def check_cone_property(
    mesh: TetMesh,
    p: ArrayLike,
    cone: ConeSpec,
    a: float,
    n_samples: int,
    *,
    seed: int = CONE_SEED,
    structural: FloatArray | None = None,
) -> ConeReport:
    """Test y - z inside the mesh for y near p and z in the cone."""
    anchor = as_points(p)[0]
    _require_on_surface(mesh, anchor)
    if n_samples <= 0:
        _LOGGER.warning("Cone check at %s has no samples; passing vacuously", anchor)
        return ConeReport(True, 0, None, vacuous=True)

    frame = orthonormal_frame(cone.direction)
    cube = anchor + (2.0 * halton(n_samples) - 1.0) * a @ frame
    points = _structural_points(mesh) if structural is None else structural
    local = np.abs((points - anchor) @ frame.T)
    nearby = points[np.all(local <= a + 1e-12, axis=1)]
    pool = np.vstack([anchor, nearby, cube])
    pool = pool[mesh.contains(pool)]

    rng = np.random.default_rng(seed)
    y = pool[np.arange(n_samples) % len(pool)]
    z = cone.sample(n_samples, rng)
    clearance = mesh.clearance(y - z)
    outside = ~mesh.contains(y - z)
    violations = [
        {"y": y[i].tolist(), "z": z[i].tolist()} for i in np.flatnonzero(outside)
    ]
    return ConeReport(
        passed=not violations,
        n_samples=n_samples,
        worst_margin=float(clearance.min()),
        violations=violations,
    )


def outward_direction(mesh: TetMesh, p: FloatArray, radius: float) -> FloatArray:
    """Best outward direction for the boundary faces within radius of p."""
    a, b, c = (mesh.vertices[mesh.boundary_faces[:, i]] for i in range(3))
    near = point_triangle_distance(p[None], a, b, c)[0] <= radius
    return best_cone_direction(mesh.face_normals[near])


def boundary_sample_points(mesh: TetMesh, density: int) -> FloatArray:
    """Boundary vertices plus lattice points of every face."""
    lattice = face_lattice(max(1, density))
    faces = sample_triangles(mesh.vertices[mesh.boundary_faces], lattice)
    stacked = np.vstack([mesh.vertices[mesh.boundary_vertices], faces.reshape(-1, 3)])
    return np.unique(np.round(stacked, 12), axis=0)


def check_uniform_cone(
    mesh: TetMesh,
    theta: float,
    h: float,
    *,
    density: int = 1,
    samples_per_point: int = CONE_SAMPLES,
    neighborhood: float | None = None,
    directions: DirectionField | None = None,
    points: FloatArray | None = None,
    seed: int = CONE_SEED,
) -> UniformConeReport:
    """
    Run the cone check at boundary samples with one cone shape.

    The per-point cone opens along the outward direction: `directions(p)`
    when given, else the best direction for the nearby face normals.
    """
    a = neighborhood if neighborhood is not None else 0.5 * h
    anchors = boundary_sample_points(mesh, density) if points is None else as_points(points)
    structural = _structural_points(mesh)
    axes = directions(anchors) if directions is not None else None

    n_samples = 0
    n_violations = 0
    worst: float | None = None
    certificates: list[dict[str, list[float]]] = []
    for index, anchor in enumerate(anchors):
        try:
            direction = (
                axes[index]
                if axes is not None
                else outward_direction(mesh, anchor, math.sqrt(3.0) * a)
            )
        except GeometryError:
            _LOGGER.debug("No outward cone direction at %s", anchor)
            n_violations += 1
            continue
        report = check_cone_property(
            mesh,
            anchor,
            ConeSpec(direction=direction, theta=theta, height=h),
            a,
            samples_per_point,
            seed=seed + index,
            structural=structural,
        )
        n_samples += report.n_samples
        n_violations += len(report.violations)
        if report.worst_margin is not None:
            worst = report.worst_margin if worst is None else min(worst, report.worst_margin)
        for violation in report.violations:
            if len(certificates) < MAX_CERTIFICATES:
                certificates.append({"p": anchor.tolist(), **violation})

    _LOGGER.info(
        "Uniform cone check: %d points, %d samples, %d violations",
        len(anchors),
        n_samples,
        n_violations,
    )
    return UniformConeReport(
        passed=n_violations == 0,
        n_points=len(anchors),
        n_samples=n_samples,
        n_violations=n_violations,
        worst_margin=worst,
        violations=certificates,
    )
