"""
Outward protrusion of a polyhedral domain near Γ, built by transport along v̂.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from .const import (
    AUTO_T_EDGE_FRACTION,
    BISECTION_STEPS,
    CONE_SAMPLES,
    DEFAULT_S_MAX,
    HALTON_SEED,
    MAX_CERTIFICATES,
    NEIGHBOR_PAIRS,
    REFINE_CANDIDATES,
    SEPARATION_PAIRS,
    SEPARATION_RATIO_MIN,
)
from .exceptions import ExpansionError, ExpansionSearchError
from .geometry import FloatArray, as_points, halton, signed_volumes
from .intersect import find_overlaps
from .lipschitz import boundary_sample_points, check_uniform_cone
from .mesh import Dissection, IntArray, TetMesh
from .transversal import VectorField

_LOGGER = logging.getLogger(__name__)

# Dompierre rotations putting the smallest prism vertex first.
_PRISM_ROTATIONS = np.array(
    [
        (0, 1, 2, 3, 4, 5),
        (1, 2, 0, 4, 5, 3),
        (2, 0, 1, 5, 3, 4),
        (3, 5, 4, 0, 2, 1),
        (4, 3, 5, 1, 0, 2),
        (5, 4, 3, 2, 1, 0),
    ]
)
_SPLIT_LOW_15 = np.array([(0, 1, 2, 5), (0, 1, 5, 4), (0, 4, 5, 3)])
_SPLIT_LOW_24 = np.array([(0, 1, 2, 4), (0, 4, 2, 5), (0, 4, 5, 3)])


class TransportMap:
    """(p, s) -> p + s v̂(p) on the boundary."""

    def __init__(self, field: VectorField) -> None:
        """Init."""
        self.field = field

    def __call__(self, points: ArrayLike, s: float | FloatArray) -> FloatArray:
        """Transport boundary points."""
        queries = as_points(points)
        steps = np.broadcast_to(np.asarray(s, dtype=float).reshape(-1, 1), (len(queries), 1))
        moved = queries + steps * self.field.direction(queries)
        return np.where(steps == 0.0, queries, moved)


def transport(tmap: TransportMap, p: ArrayLike, s: float) -> FloatArray:
    """Transport a single point."""
    return tmap(p, s)[0]


def sample_gamma(
    dissection: Dissection, n: int, *, seed: int = HALTON_SEED
) -> tuple[FloatArray, IntArray]:
    """Area-weighted Halton points on Γ plus the Γ vertices, with a face each."""
    mesh = dissection.mesh
    faces = dissection.gamma_index
    corners = mesh.vertices[mesh.boundary_faces[faces]]
    cdf = np.cumsum(mesh.face_areas[faces])
    draws = halton(n, 3, seed=seed)
    pick = np.minimum(np.searchsorted(cdf / cdf[-1], draws[:, 0], side="right"), len(faces) - 1)
    u, v = draws[:, 1].copy(), draws[:, 2].copy()
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    chosen = corners[pick]
    points = chosen[:, 0] + u[:, None] * (chosen[:, 1] - chosen[:, 0]) + v[:, None] * (
        chosen[:, 2] - chosen[:, 0]
    )
    vertices = dissection.gamma_vertices
    gamma_faces = mesh.boundary_faces[faces]
    owner = np.array(
        [faces[np.flatnonzero(np.any(gamma_faces == v, axis=1))[0]] for v in vertices]
    )
    return np.vstack([points, mesh.vertices[vertices]]), np.concatenate([faces[pick], owner])


@dataclass
class SeparationSample:
    """Worst separation ratio found at one thickness."""

    t: float
    n_pairs: int
    worst_ratio: float
    certificate: dict[str, Any] | None
    ratio_min: float = SEPARATION_RATIO_MIN

    @property
    def passed(self) -> bool:
        """Whether every tested pair separates."""
        return self.worst_ratio >= self.ratio_min


def _separation_ratio(
    first: FloatArray,
    s1: FloatArray,
    second: FloatArray,
    s2: FloatArray,
    images: tuple[FloatArray, FloatArray],
) -> FloatArray:
    spread = np.sqrt(np.sum((first - second) ** 2, axis=1) + (s1 - s2) ** 2)
    gap = np.linalg.norm(images[0] - images[1], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(spread > 1e-14, gap / spread, np.inf)


def _refine_pair(
    tmap: TransportMap,
    corners: tuple[FloatArray, FloatArray],
    start: FloatArray,
    bounds: tuple[float, float],
) -> tuple[float, FloatArray, FloatArray, float, float]:
    """Minimize the separation ratio over two Γ faces and two heights."""

    def place(tri: FloatArray, alpha: float, beta: float) -> FloatArray:
        return tri[0] + alpha * (tri[1] - tri[0]) + beta * (1.0 - alpha) * (tri[2] - tri[0])

    def residual(x: FloatArray) -> FloatArray:
        p = place(corners[0], x[0], x[1])
        q = place(corners[1], x[3], x[4])
        moved = tmap(np.vstack([p, q]), np.array([x[2], x[5]]))
        spread = math.sqrt(float(np.sum((p - q) ** 2)) + (x[2] - x[5]) ** 2)
        return (moved[0] - moved[1]) / max(spread, 1e-12)

    lo, hi = bounds
    lower = np.array([0.0, 0.0, lo, 0.0, 0.0, lo])
    upper = np.array([1.0, 1.0, hi, 1.0, 1.0, hi])
    span = upper - lower
    x0 = np.clip(start, lower + 1e-9 * span, upper - 1e-9 * span)
    result = least_squares(residual, x0, bounds=(lower, upper), max_nfev=60)
    x = result.x
    p = place(corners[0], x[0], x[1])
    q = place(corners[1], x[3], x[4])
    return float(np.linalg.norm(result.fun)), p, q, float(x[2]), float(x[5])


def _duffy(tri: FloatArray, point: FloatArray) -> tuple[float, float]:
    edges = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    u, v = np.linalg.lstsq(edges, point - tri[0], rcond=None)[0]
    u = float(np.clip(u, 0.0, 1.0))
    return u, float(np.clip(v / (1.0 - u), 0.0, 1.0)) if u < 1.0 else 0.0


def sample_separation(
    tmap: TransportMap,
    dissection: Dissection,
    t: float,
    n_pairs: int = SEPARATION_PAIRS,
    *,
    two_sided: bool = False,
    ratio_min: float = SEPARATION_RATIO_MIN,
    refine: int = REFINE_CANDIDATES,
    seed: int = HALTON_SEED,
) -> SeparationSample:
    """
    Test ‖L(p,s) - L(q,s')‖ / ‖(p,s) - (q,s')‖ on sampled pairs.

    Pairs are image-space nearest neighbours plus random pairs; the worst
    few are refined by least squares before the verdict.
    """
    mesh = dissection.mesh
    lo = -t if two_sided else 0.0
    points, faces = sample_gamma(dissection, max(64, n_pairs // NEIGHBOR_PAIRS), seed=seed)
    heights = lo + (t - lo) * halton(len(points), 1, seed=seed + 1)[:, 0]
    images = tmap(points, heights)

    k = min(NEIGHBOR_PAIRS + 1, len(points))
    _, neighbors = cKDTree(images).query(images, k=k)
    first = np.repeat(np.arange(len(points)), k - 1)
    second = neighbors[:, 1:].reshape(-1)
    extra = n_pairs - len(first)
    if extra > 0:
        rng = np.random.default_rng(seed)
        first = np.concatenate([first, rng.integers(len(points), size=extra)])
        second = np.concatenate([second, rng.integers(len(points), size=extra)])
    distinct = first != second
    first, second = first[distinct], second[distinct]
    ratios = _separation_ratio(
        points[first], heights[first], points[second], heights[second],
        (images[first], images[second]),
    )
    order = np.argsort(ratios, kind="stable")
    worst = float(ratios[order[0]])
    i, j = int(first[order[0]]), int(second[order[0]])
    certificate: dict[str, Any] = {
        "p": points[i].tolist(), "s": float(heights[i]),
        "q": points[j].tolist(), "s2": float(heights[j]), "ratio": worst,
    }

    for index in order[:refine].tolist():
        i, j = int(first[index]), int(second[index])
        tri_i = mesh.vertices[mesh.boundary_faces[faces[i]]]
        tri_j = mesh.vertices[mesh.boundary_faces[faces[j]]]
        start = np.array(
            [*_duffy(tri_i, points[i]), heights[i], *_duffy(tri_j, points[j]), heights[j]]
        )
        ratio, p, q, s1, s2 = _refine_pair(tmap, (tri_i, tri_j), start, (lo, t))
        if ratio < worst:
            worst = ratio
            certificate = {"p": p.tolist(), "s": s1, "q": q.tolist(), "s2": s2, "ratio": ratio}

    _LOGGER.debug("Separation at t=%.6g: worst ratio %.3e over %d pairs", t, worst, len(first))
    return SeparationSample(
        t=t,
        n_pairs=int(len(first)),
        worst_ratio=worst,
        certificate=certificate if worst < ratio_min else None,
        ratio_min=ratio_min,
    )


@dataclass
class T0Estimate:
    """Largest thickness whose sampled transport stayed separated."""

    t0: float
    worst_ratio: float
    s_max: float
    ratio_min: float
    history: list[tuple[float, float]] = field(default_factory=list)
    certificate: dict[str, Any] | None = None

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {
            "t0_estimate": self.t0,
            "worst_ratio": self.worst_ratio,
            "s_max": self.s_max,
            "ratio_min": self.ratio_min,
            "history": [list(step) for step in self.history],
            "failure_certificate": self.certificate,
        }


def estimate_t0(
    tmap: TransportMap,
    dissection: Dissection,
    s_max: float = DEFAULT_S_MAX,
    n_pairs: int = SEPARATION_PAIRS,
    *,
    two_sided: bool = False,
    ratio_min: float = SEPARATION_RATIO_MIN,
    steps: int = BISECTION_STEPS,
    seed: int = HALTON_SEED,
) -> T0Estimate:
    """Bisect for the largest t in (0, s_max] passing the separation test."""
    if s_max <= 0:
        raise ExpansionSearchError(f"Search interval (0, {s_max}] is empty")
    if tmap.field.kappa is not None and tmap.field.kappa <= 0:
        raise ExpansionSearchError("Transport field is not transversal")

    def attempt(t: float) -> SeparationSample:
        sample = sample_separation(
            tmap, dissection, t, n_pairs, two_sided=two_sided, ratio_min=ratio_min, seed=seed
        )
        history.append((t, sample.worst_ratio))
        return sample

    history: list[tuple[float, float]] = []
    top = attempt(s_max)
    if top.passed:
        _LOGGER.info("Transport separated up to s_max=%.4g", s_max)
        return T0Estimate(s_max, top.worst_ratio, s_max, ratio_min, history)

    lo, hi = 0.0, s_max
    passing: SeparationSample | None = None
    failing = top
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        sample = attempt(mid)
        if sample.passed:
            lo, passing = mid, sample
        else:
            hi, failing = mid, sample
    if passing is None:
        raise ExpansionSearchError(
            f"No separating thickness down to t={hi:.3e} (worst ratio {failing.worst_ratio:.3e})"
        )
    _LOGGER.info("Estimated t0=%.6g (worst ratio %.3e)", lo, passing.worst_ratio)
    return T0Estimate(lo, passing.worst_ratio, s_max, ratio_min, history, failing.certificate)


def default_thickness(t0: float, dissection: Dissection, kappa: float) -> float:
    """min(t0/2, fraction of the smallest Γ edge over κ)."""
    shortest = min(
        float(np.linalg.norm(dissection.mesh.vertices[a] - dissection.mesh.vertices[b]))
        for a, b in dissection.gamma_edges
    )
    return min(0.5 * t0, AUTO_T_EDGE_FRACTION * shortest / kappa)


@dataclass(frozen=True, eq=False)
class Extrusion:
    """Prism columns over boundary faces, split into tets."""

    base: IntArray
    columns: IntArray
    positions: FloatArray
    tets: IntArray
    prisms: IntArray


def _split_prisms(prisms: IntArray) -> tuple[IntArray, IntArray]:
    """Split (n, 6) prisms into tets with the lowest-index diagonal rule."""
    rotated = np.take_along_axis(prisms, _PRISM_ROTATIONS[np.argmin(prisms, axis=1)], axis=1)
    low_15 = np.minimum(rotated[:, 1], rotated[:, 5]) < np.minimum(rotated[:, 2], rotated[:, 4])
    pattern = np.where(low_15[:, None, None], _SPLIT_LOW_15[None], _SPLIT_LOW_24[None])
    tets = np.take_along_axis(rotated[:, None, :].repeat(3, axis=1), pattern, axis=2)
    return tets.reshape(-1, 4), np.repeat(np.arange(len(prisms)), 3)


def extrude_faces(
    mesh: TetMesh,
    faces: IntArray,
    field: VectorField,
    t: float,
    layers: int,
) -> Extrusion:
    """
    Extrude boundary faces along v̂ into prism layers.

    Base vertices keep their mesh index; layer k of base vertex number r
    gets index n_vertices + (k - 1) * n_base + r.
    """
    if t <= 0:
        raise ExpansionError(f"Thickness must be positive, got {t}")
    if layers < 1:
        raise ExpansionError(f"Layer count must be at least 1, got {layers}")
    triangles = mesh.boundary_faces[faces]
    base = np.unique(triangles)
    directions = field.direction(mesh.vertices[base])
    fractions = np.arange(1, layers + 1) / layers
    positions = mesh.vertices[base][None] + (t * fractions)[:, None, None] * directions[None]
    n_base = len(base)
    columns = np.column_stack(
        [base] + [mesh.n_vertices + k * n_base + np.arange(n_base) for k in range(layers)]
    )
    rank = np.searchsorted(base, triangles)
    prisms = np.concatenate(
        [np.column_stack([columns[rank, k], columns[rank, k + 1]]) for k in range(layers)]
    )
    tets, owner = _split_prisms(prisms)

    # Compare orientation with a right prism built on the face normal.
    all_points = np.vstack([mesh.vertices, positions.reshape(-1, 3)])
    normals = mesh.face_normals[faces]
    size = np.sqrt(mesh.face_areas[faces])
    layer_of = np.repeat(np.arange(layers), len(faces))
    face_of = np.tile(np.arange(len(faces)), layers)
    reference = np.empty((len(prisms), 6, 3))
    for k in range(2):
        lift = (layer_of + k)[:, None] * (size[face_of] / layers)[:, None] * normals[face_of]
        reference[:, 3 * k : 3 * k + 3] = mesh.vertices[triangles[face_of]] + lift[:, None]
    local = np.argmax(tets[:, :, None] == prisms[owner][:, None, :], axis=2)
    reference_tets = np.take_along_axis(
        reference[owner], local[..., None].repeat(3, axis=2), axis=1
    )
    expected = np.sign(signed_volumes(reference_tets))
    actual = signed_volumes(all_points[tets])
    floor = 1e-12 * mesh.bbox_diagonal**3
    inverted = np.flatnonzero((np.sign(actual) != expected) | (np.abs(actual) <= floor))
    if len(inverted):
        prism = int(owner[inverted[0]])
        raise ExpansionError(
            f"Extrusion produced an inverted tet in prism {prism}",
            prism={
                "face": int(faces[face_of[prism]]),
                "layer": int(layer_of[prism]),
                "vertices": prisms[prism].tolist(),
            },
        )
    fixed = tets.copy()
    flip = actual < 0
    fixed[flip] = fixed[flip][:, [0, 2, 1, 3]]
    return Extrusion(base=base, columns=columns, positions=positions, tets=fixed, prisms=prisms)


@dataclass(frozen=True, eq=False)
class ExpandedDomain:
    """The protrusion Ω^e, the merged Ω̃ and their bookkeeping."""

    original: TetMesh
    dissection: Dissection
    omega_e: TetMesh
    omega_tilde: TetMesh
    t: float
    layer_count: int
    gamma_bottom: IntArray
    gamma_top: IntArray
    psi_faces: IntArray
    vertex_map: dict[int, tuple[int, ...]]
    e_to_tilde: IntArray

    @property
    def top_area(self) -> float:
        """Area of the transported patch."""
        return float(self.omega_e.face_areas[self.gamma_top].sum())

    @property
    def psi_area(self) -> float:
        """Area of the lateral surface."""
        return float(self.omega_e.face_areas[self.psi_faces].sum())


def _glue(
    mesh: TetMesh,
    dissection: Dissection,
    omega_tilde: TetMesh,
    columns: IntArray,
    t: float,
    layers: int,
) -> ExpandedDomain:
    """Split Ω̃ = Ω ∪ Ω^e back into the protrusion and its face bookkeeping."""
    extruded = omega_tilde.tets[mesh.n_tets :]
    e_to_tilde = np.unique(extruded)
    omega_e = TetMesh.from_arrays(
        omega_tilde.vertices[e_to_tilde], np.searchsorted(e_to_tilde, extruded)
    )
    faces_tilde = e_to_tilde[omega_e.boundary_faces]
    on_base = np.all(faces_tilde < mesh.n_vertices, axis=1)
    on_top = np.all(np.isin(faces_tilde, columns[:, -1]), axis=1)
    return ExpandedDomain(
        original=mesh,
        dissection=dissection,
        omega_e=omega_e,
        omega_tilde=omega_tilde,
        t=t,
        layer_count=layers,
        gamma_bottom=np.flatnonzero(on_base),
        gamma_top=np.flatnonzero(on_top),
        psi_faces=np.flatnonzero(~on_base & ~on_top),
        vertex_map={int(row[0]): tuple(int(v) for v in row) for row in columns},
        e_to_tilde=e_to_tilde,
    )


def build_protrusion(
    mesh: TetMesh,
    dissection: Dissection,
    tmap: TransportMap,
    t: float,
    layers: int = 1,
    *,
    validate: bool = True,
) -> ExpandedDomain:
    """Extrude Γ into Ω^e and glue it to Ω along shared Γ vertices."""
    extrusion = extrude_faces(mesh, dissection.gamma_index, tmap.field, t, layers)
    tilde_points = np.vstack([mesh.vertices, extrusion.positions.reshape(-1, 3)])
    omega_tilde = TetMesh.from_arrays(tilde_points, np.vstack([mesh.tets, extrusion.tets]))
    expanded = _glue(mesh, dissection, omega_tilde, extrusion.columns, t, layers)
    _LOGGER.info(
        "Protrusion: t=%.6g, %d layers, %d tets, volume %.6g",
        t,
        layers,
        expanded.omega_e.n_tets,
        expanded.omega_e.volume,
    )
    if validate:
        shared = check_shared_boundary(expanded)
        if not shared["passed"]:
            raise ExpansionError(f"Shared boundary is not Γ ∪ Π: {shared}")
        disjoint = check_disjoint(expanded)
        if not disjoint["passed"]:
            raise ExpansionError(
                "Protrusion overlaps itself or Ω", prism=disjoint["certificates"][:1]
            )
    return expanded


def restore_protrusion(
    mesh: TetMesh, dissection: Dissection, omega_tilde: TetMesh
) -> ExpandedDomain:
    """
    Rebuild the protrusion from a saved Ω̃.

    Ω̃ must start with the vertices and tets of Ω, followed by the extruded
    layers in the order `build_protrusion` writes them.
    """
    base = dissection.gamma_vertices
    extra = omega_tilde.n_vertices - mesh.n_vertices
    if (
        extra <= 0
        or extra % len(base)
        or omega_tilde.n_tets <= mesh.n_tets
        or not np.array_equal(omega_tilde.vertices[: mesh.n_vertices], mesh.vertices)
        or not np.array_equal(omega_tilde.tets[: mesh.n_tets], mesh.tets)
    ):
        raise ExpansionError("Saved Ω̃ does not extend this mesh over this Γ")
    layers = extra // len(base)
    columns = np.column_stack(
        [base] + [mesh.n_vertices + k * len(base) + np.arange(len(base)) for k in range(layers)]
    )
    lengths = np.linalg.norm(
        omega_tilde.vertices[columns[:, -1]] - mesh.vertices[base], axis=1
    )
    if np.ptp(lengths) > 1e-9 * max(1.0, float(lengths.max())):
        raise ExpansionError("Saved Ω̃ has columns of different lengths")
    t = float(lengths.mean())
    _LOGGER.info("Restored protrusion: t=%.6g, %d layers", t, layers)
    return _glue(mesh, dissection, omega_tilde, columns, t, layers)


def _face_keys(faces: IntArray) -> set[tuple[int, ...]]:
    return {tuple(sorted(face)) for face in faces.tolist()}


def _edge_keys(faces: IntArray) -> set[tuple[int, int]]:
    return {
        tuple(sorted((face[i], face[(i + 1) % 3]))) for face in faces.tolist() for i in range(3)
    }


def check_shared_boundary(expanded: ExpandedDomain) -> dict[str, Any]:
    """Shared faces equal Γ; lateral-to-Γ₂ shared edges equal Π."""
    mesh = expanded.original
    dissection = expanded.dissection
    e_faces = expanded.e_to_tilde[expanded.omega_e.boundary_faces]
    shared_faces = _face_keys(mesh.boundary_faces) & _face_keys(e_faces)
    gamma = _face_keys(dissection.gamma_triangles)
    outer_e = np.delete(e_faces, expanded.gamma_bottom, axis=0)
    gamma2 = mesh.boundary_faces[sorted(dissection.gamma2_faces)]
    shared_edges = _edge_keys(outer_e) & _edge_keys(gamma2)
    pi = set(dissection.pi_edges)
    return {
        "passed": shared_faces == gamma and shared_edges == pi,
        "shared_faces_equal_gamma": shared_faces == gamma,
        "shared_edges_equal_pi": shared_edges == pi,
        "n_shared_faces": len(shared_faces),
        "n_shared_edges": len(shared_edges),
    }


def check_disjoint(expanded: ExpandedDomain) -> dict[str, Any]:
    """Separating-axis tests of Ω against Ω^e and of Ω^e against itself."""
    with_omega = find_overlaps(expanded.original, expanded.omega_e)
    with_self = find_overlaps(expanded.omega_e)
    certificates = [
        {"omega_tet": int(i), "omega_e_tet": int(j)} for i, j in with_omega.tolist()
    ] + [{"omega_e_tet": int(i), "omega_e_tet_2": int(j)} for i, j in with_self.tolist()]
    return {
        "passed": not certificates,
        "overlaps_with_omega": int(len(with_omega)),
        "self_overlaps": int(len(with_self)),
        "certificates": certificates[:MAX_CERTIFICATES],
    }


def validate_expansion(
    expanded: ExpandedDomain,
    original: TetMesh | None = None,
    *,
    theta: float = math.pi / 16,
    h: float | None = None,
    samples_per_point: int = CONE_SAMPLES,
    density: int = 1,
    cones: bool = True,
    disjoint: bool = True,
) -> dict[str, Any]:
    """Disjointness, boundary identity, cone checks and volume/area bookkeeping."""
    mesh = original if original is not None else expanded.original
    height = h if h is not None else 0.5 * expanded.t
    report: dict[str, Any] = {"shared_boundary": check_shared_boundary(expanded)}
    if disjoint:
        report["disjoint"] = check_disjoint(expanded)

    volume_defect = abs(expanded.omega_tilde.volume - mesh.volume - expanded.omega_e.volume)
    area_tilde = float(expanded.omega_tilde.face_areas.sum())
    area_expected = (
        float(mesh.face_areas.sum())
        - expanded.dissection.gamma_area
        + expanded.top_area
        + expanded.psi_area
    )
    report["volumes"] = {
        "omega": mesh.volume,
        "omega_e": expanded.omega_e.volume,
        "omega_tilde": expanded.omega_tilde.volume,
        "defect": volume_defect,
        "passed": volume_defect <= 1e-10,
    }
    report["areas"] = {
        "omega_tilde": area_tilde,
        "expected": area_expected,
        "defect": abs(area_tilde - area_expected),
        "passed": abs(area_tilde - area_expected) <= 1e-10,
    }

    if cones:
        near_pi = boundary_sample_points(expanded.omega_tilde, density)
        pi_points = mesh.vertices[expanded.dissection.pi_vertices]
        reach = expanded.t + mesh.h
        gap = np.linalg.norm(near_pi[:, None] - pi_points[None], axis=2).min(axis=1)
        report["cones"] = {
            "theta": theta,
            "h": height,
            "omega_e": check_uniform_cone(
                expanded.omega_e, theta, height, density=density,
                samples_per_point=samples_per_point,
            ).as_dict(),
            "omega_tilde": check_uniform_cone(
                expanded.omega_tilde, theta, height, density=density,
                samples_per_point=samples_per_point, points=near_pi[gap <= reach],
            ).as_dict(),
        }
        report["cones"]["passed"] = (
            report["cones"]["omega_e"]["passed"] and report["cones"]["omega_tilde"]["passed"]
        )
    report["passed"] = all(
        blob["passed"] for blob in report.values() if isinstance(blob, dict)
    )
    return report


@dataclass(frozen=True)
class TransportedDissection:
    """Image loops Π_t and their exceptional points."""

    t: float
    loops: tuple[FloatArray, ...]
    exceptional: FloatArray


def transported_dissection(
    dissection: Dissection, tmap: TransportMap, t: float
) -> TransportedDissection:
    """Transport every Π loop and exceptional point by t."""
    if t <= 0:
        raise ExpansionError(f"Thickness must be positive, got {t}")
    vertices = dissection.mesh.vertices
    loops = tuple(tmap(vertices[list(chain)], t) for chain in dissection.pi_chains)
    exceptional = np.zeros((0, 3))
    if dissection.exceptional_points:
        exceptional = tmap(vertices[list(dissection.exceptional_points)], t)
    return TransportedDissection(t=t, loops=loops, exceptional=exceptional)


@dataclass(frozen=True, eq=False)
class Collar:
    """Ω glued to a one-layer collar over its whole boundary."""

    mesh: TetMesh
    collapse: IntArray
    t: float


def build_collar(mesh: TetMesh, field: VectorField, t: float) -> Collar:
    """One-sided collar Σ_{0,t} over all of ∂Ω, merged with Ω."""
    faces = np.arange(len(mesh.boundary_faces))
    extrusion = extrude_faces(mesh, faces, field, t, 1)
    points = np.vstack([mesh.vertices, extrusion.positions.reshape(-1, 3)])
    merged = TetMesh.from_arrays(points, np.vstack([mesh.tets, extrusion.tets]))
    collapse = np.concatenate([np.arange(mesh.n_vertices), extrusion.base])
    _LOGGER.debug("Collar of thickness %.4g adds %d tets", t, len(extrusion.tets))
    return Collar(mesh=merged, collapse=collapse, t=t)
