"""
Tetrahedral meshes, boundary dissections and point location.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Final

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .const import BARYCENTRIC_TOLERANCE, DEGENERATE_VOLUME_FACTOR, EXCEPTIONAL_ANGLE
from .exceptions import (
    DegenerateTetError,
    DissectionError,
    MeshFormatError,
    MeshTopologyError,
)
from .geometry import (
    FloatArray,
    as_points,
    barycentric,
    barycentric_transforms,
    point_triangle_distance,
    signed_volumes,
)

_LOGGER = logging.getLogger(__name__)

IntArray = NDArray[np.int64]

OUTSIDE: Final = -1
NO_LABEL: Final = -1

# Faces of a positively oriented tet, listed with outward orientation.
LOCAL_FACES: Final = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))

_LOCATE_CHUNK = 20000

GammaPredicate = Callable[[FloatArray, FloatArray, FloatArray, IntArray], NDArray[np.bool_]]


@dataclass(frozen=True, eq=False)
class TetMesh:
    """A conforming tetrahedral mesh with outward-oriented boundary faces."""

    vertices: FloatArray
    tets: IntArray
    boundary_faces: IntArray
    boundary_tets: IntArray
    face_labels: IntArray

    @classmethod
    def from_arrays(
        cls,
        vertices: ArrayLike,
        tets: ArrayLike,
        *,
        labels: Mapping[tuple[int, int, int], int] | None = None,
    ) -> TetMesh:
        """Validate raw arrays, fix tet orientation and extract the boundary."""
        points = as_points(vertices)
        cells = np.array(tets, dtype=np.int64).reshape(-1, 4)
        if len(cells) == 0:
            raise MeshTopologyError("Mesh has no tetrahedra")
        if cells.min() < 0 or cells.max() >= len(points):
            raise MeshTopologyError("Tet references a vertex that does not exist")

        diagonal = float(np.linalg.norm(np.ptp(points, axis=0)))
        volume = signed_volumes(points[cells])
        threshold = DEGENERATE_VOLUME_FACTOR * diagonal**3
        degenerate = np.flatnonzero(np.abs(volume) <= threshold)
        if len(degenerate):
            raise DegenerateTetError(
                f"Tet {degenerate[0]} has volume {volume[degenerate[0]]:.3e}",
                tet=int(degenerate[0]),
            )
        flipped = volume < 0
        if np.any(flipped):
            _LOGGER.debug("Reordering %d negatively oriented tets", flipped.sum())
            cells[flipped] = cells[flipped][:, [0, 2, 1, 3]]

        faces, owners = _boundary_of(cells)
        _check_closed_surface(faces)

        face_labels = np.full(len(faces), NO_LABEL, dtype=np.int64)
        if labels:
            index = {tuple(sorted(f)): i for i, f in enumerate(faces.tolist())}
            for key, label in labels.items():
                position = index.get(tuple(sorted(key)))
                if position is None:
                    raise MeshTopologyError(f"Label hint {key} is not a boundary face")
                face_labels[position] = label

        _LOGGER.debug(
            "Built mesh with %d vertices, %d tets, %d boundary faces",
            len(points),
            len(cells),
            len(faces),
        )
        return cls(
            vertices=points,
            tets=cells,
            boundary_faces=faces,
            boundary_tets=owners,
            face_labels=face_labels,
        )

    @property
    def n_vertices(self) -> int:
        """Return the vertex count."""
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        """Return the tet count."""
        return len(self.tets)

    @cached_property
    def corners(self) -> FloatArray:
        """Corner coordinates, shape (T, 4, 3)."""
        return self.vertices[self.tets]

    @cached_property
    def volumes(self) -> FloatArray:
        """Positive tet volumes."""
        return signed_volumes(self.corners)

    @property
    def volume(self) -> float:
        """Total volume."""
        return float(self.volumes.sum())

    @cached_property
    def transforms(self) -> FloatArray:
        """Per-tet barycentric transforms."""
        return barycentric_transforms(self.corners)

    @cached_property
    def gradients(self) -> FloatArray:
        """Constant barycentric gradients, shape (T, 4, 3)."""
        tail = self.transforms
        return np.concatenate([-tail.sum(axis=1, keepdims=True), tail], axis=1)

    @cached_property
    def centroids(self) -> FloatArray:
        """Tet centroids."""
        return self.corners.mean(axis=1)

    @cached_property
    def bbox_diagonal(self) -> float:
        """Length of the bounding box diagonal."""
        return float(np.linalg.norm(np.ptp(self.vertices, axis=0)))

    @cached_property
    def circumdiameters(self) -> FloatArray:
        """Circumscribed sphere diameters of all tets."""
        corners = self.corners
        rows = 2.0 * (corners[:, 1:] - corners[:, :1])
        rhs = np.sum(corners[:, 1:] ** 2, axis=2) - np.sum(corners[:, :1] ** 2, axis=2)
        centers = np.linalg.solve(rows, rhs[..., None])[..., 0]
        return 2.0 * np.linalg.norm(centers - corners[:, 0], axis=1)

    @property
    def h(self) -> float:
        """Quasi-uniform mesh size: largest circumsphere diameter."""
        return float(self.circumdiameters.max())

    @cached_property
    def face_vector_areas(self) -> FloatArray:
        """Area-weighted outward normals of the boundary faces."""
        a, b, c = (self.vertices[self.boundary_faces[:, i]] for i in range(3))
        return 0.5 * np.cross(b - a, c - a)

    @cached_property
    def face_areas(self) -> FloatArray:
        """Boundary face areas."""
        return np.linalg.norm(self.face_vector_areas, axis=1)

    @cached_property
    def face_normals(self) -> FloatArray:
        """Unit outward normals of the boundary faces."""
        return self.face_vector_areas / self.face_areas[:, None]

    @cached_property
    def face_centroids(self) -> FloatArray:
        """Boundary face centroids."""
        return self.vertices[self.boundary_faces].mean(axis=1)

    @cached_property
    def boundary_vertices(self) -> IntArray:
        """Sorted indices of vertices on the boundary."""
        return np.unique(self.boundary_faces)

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    @cached_property
    def _search_radius(self) -> float:
        spread = np.linalg.norm(self.corners - self.centroids[:, None], axis=2)
        return float(spread.max()) * (1.0 + 1e-9) + BARYCENTRIC_TOLERANCE

    def locate(
        self, points: ArrayLike, *, tol: float = BARYCENTRIC_TOLERANCE
    ) -> tuple[IntArray, FloatArray]:
        """
        Containing tet and barycentric coordinates for every point.

        Points outside the closed mesh get OUTSIDE and NaN coordinates. A point
        on shared faces resolves to the lowest-index containing tet.
        """
        queries = as_points(points)
        owners = np.full(len(queries), OUTSIDE, dtype=np.int64)
        coords = np.full((len(queries), 4), np.nan)
        for start, point_ids, tet_ids, lam in self._scan(queries):
            inside = np.flatnonzero(lam.min(axis=1) >= -tol)
            order = inside[np.lexsort((tet_ids[inside], point_ids[inside]))]
            found, first = np.unique(point_ids[order], return_index=True)
            owners[start + found] = tet_ids[order[first]]
            coords[start + found] = lam[order[first]]
        return owners, coords

    def clearance(self, points: ArrayLike) -> FloatArray:
        """
        Best smallest-barycentric coordinate over nearby tets.

        Non-negative inside the closed mesh, negative outside and -1 where
        no tet is near.
        """
        queries = as_points(points)
        best = np.full(len(queries), -1.0)
        for start, point_ids, _, lam in self._scan(queries):
            np.maximum.at(best, start + point_ids, lam.min(axis=1))
        return best

    def _scan(
        self, queries: FloatArray
    ) -> Iterable[tuple[int, IntArray, IntArray, FloatArray]]:
        for start in range(0, len(queries), _LOCATE_CHUNK):
            chunk = queries[start : start + _LOCATE_CHUNK]
            hits = self._tree.query_ball_point(chunk, self._search_radius)
            counts = np.fromiter(map(len, hits), dtype=np.int64, count=len(chunk))
            if counts.sum() == 0:
                continue
            point_ids = np.repeat(np.arange(len(chunk)), counts)
            tet_ids = np.fromiter(
                itertools.chain.from_iterable(hits), dtype=np.int64, count=counts.sum()
            )
            lam = barycentric(
                chunk[point_ids],
                self.vertices[self.tets[tet_ids, 0]],
                self.transforms[tet_ids],
            )
            yield start, point_ids, tet_ids, lam

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        """Whether points lie in the closed union of tets."""
        return self.locate(points)[0] != OUTSIDE

    def surface_distance(self, points: ArrayLike) -> FloatArray:
        """Distance from each point to the boundary surface."""
        queries = as_points(points)
        a, b, c = (self.vertices[self.boundary_faces[:, i]] for i in range(3))
        step = max(1, _LOCATE_CHUNK // max(1, len(a)))
        return np.concatenate(
            [
                point_triangle_distance(queries[i : i + step], a, b, c).min(axis=1)
                for i in range(0, len(queries), step)
            ]
        )


def point_location(mesh: TetMesh, q: ArrayLike) -> int:
    """Index of a tet containing q, or OUTSIDE."""
    return int(mesh.locate(q)[0][0])


def _boundary_of(cells: IntArray) -> tuple[IntArray, IntArray]:
    local = np.array(LOCAL_FACES)
    oriented = cells[:, local].reshape(-1, 3)
    owners = np.repeat(np.arange(len(cells)), 4)
    keys = np.sort(oriented, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        raise MeshTopologyError("A face is shared by more than two tets")
    single = counts[inverse] == 1
    faces = oriented[single]
    order = np.lexsort(np.sort(faces, axis=1).T[::-1])
    return faces[order], owners[single][order]


def _check_closed_surface(faces: IntArray) -> None:
    edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise MeshTopologyError("Boundary surface is not a closed 2-manifold")


def load_mesh(path: str | Path) -> TetMesh:
    """Read the ASCII `v`/`t`/`f` mesh format."""
    vertices: list[tuple[float, float, float]] = []
    tets: list[tuple[int, int, int, int]] = []
    labels: dict[tuple[int, int, int], int] = {}
    text = Path(path).read_text(encoding="utf-8")
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        try:
            if tag == "v" and len(fields) == 3:
                vertices.append(tuple(float(value) for value in fields))
            elif tag == "t" and len(fields) == 4:
                tets.append(tuple(int(value) for value in fields))
            elif tag == "f" and len(fields) == 4:
                i, j, k, label = (int(value) for value in fields)
                labels[(i, j, k)] = label
            else:
                raise MeshFormatError(f"Unexpected record {line!r}", line=number)
        except ValueError as err:
            raise MeshFormatError(f"Bad number in {line!r}", line=number) from err
    if not vertices or not tets:
        raise MeshFormatError("Mesh file needs at least one vertex and one tet")
    _LOGGER.info("Loaded %s: %d vertices, %d tets", path, len(vertices), len(tets))
    return TetMesh.from_arrays(vertices, tets, labels=labels)


def save_mesh(mesh: TetMesh, path: str | Path) -> None:
    """Write the ASCII mesh format, including non-default face labels."""
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += ["t {} {} {} {}".format(*tet) for tet in mesh.tets.tolist()]
    for face, label in zip(mesh.boundary_faces.tolist(), mesh.face_labels.tolist(), strict=True):
        if label != NO_LABEL:
            lines.append("f {} {} {} {}".format(*face, label))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _kuhn_cells(nodes: IntArray) -> IntArray:
    """Split grid cells, given as (n, 2, 2, 2) corner ids, into 6 tets each."""
    cells = []
    for axes in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [nodes[:, 0, 0, 0]]
        for axis in axes:
            corner[axis] = 1
            path.append(nodes[:, corner[0], corner[1], corner[2]])
        cells.append(np.stack(path, axis=1))
    return np.stack(cells, axis=1).reshape(-1, 4)


def _structured_mesh(
    counts: tuple[int, int, int],
    lower: ArrayLike,
    upper: ArrayLike,
    keep: Callable[[FloatArray], NDArray[np.bool_]] | None = None,
) -> TetMesh:
    nx, ny, nz = counts
    for name, value in zip("xyz", counts, strict=True):
        if value < 1:
            raise ValueError(f"n{name} must be a positive integer, got {value}")
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    grid = np.stack(
        np.meshgrid(
            *(np.arange(n + 1) for n in counts), indexing="ij"
        ),
        axis=-1,
    ).reshape(-1, 3)
    points = lo + (hi - lo) * grid / np.array(counts, dtype=float)
    ids = np.arange(len(grid)).reshape(nx + 1, ny + 1, nz + 1)
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    nodes = np.empty((len(i), 2, 2, 2), dtype=np.int64)
    for a, b, c in itertools.product(range(2), repeat=3):
        nodes[:, a, b, c] = ids[i + a, j + b, k + c]
    if keep is not None:
        centers = lo + (hi - lo) * (np.stack([i, j, k], axis=1) + 0.5) / np.array(counts)
        nodes = nodes[keep(centers)]
    cells = _kuhn_cells(nodes)
    used, cells = np.unique(cells, return_inverse=True)
    return TetMesh.from_arrays(points[used], cells.reshape(-1, 4))


def generate_box_mesh(
    nx: int,
    ny: int,
    nz: int,
    *,
    lower: ArrayLike = (0.0, 0.0, 0.0),
    upper: ArrayLike = (1.0, 1.0, 1.0),
) -> TetMesh:
    """Kuhn tetrahedralization of a box, 6 tets per cell."""
    return _structured_mesh((nx, ny, nz), lower, upper)


def generate_lshape_mesh(n: int) -> TetMesh:
    """L-shaped prism ([0,2]^2 minus [1,2]^2) x [0,1] with cell size 1/n."""

    def outside_notch(centers: FloatArray) -> NDArray[np.bool_]:
        return ~((centers[:, 0] > 1.0) & (centers[:, 1] > 1.0))

    return _structured_mesh((2 * n, 2 * n, n), (0, 0, 0), (2, 2, 1), outside_notch)


def generate_slab_mesh(n: int, thickness: float) -> TetMesh:
    """Unit square slab of the given thickness, one cell thick."""
    if thickness <= 0:
        raise ValueError(f"thickness must be positive, got {thickness}")
    return _structured_mesh((n, n, 1), (0, 0, 0), (1, 1, thickness))


def export_vtk(
    mesh: TetMesh,
    path: str | Path,
    *,
    point_data: Mapping[str, ArrayLike] | None = None,
    title: str = "lipext mesh",
) -> None:
    """Write a legacy VTK ASCII unstructured grid."""
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines.append(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}")
    lines += ["4 {} {} {} {}".format(*tet) for tet in mesh.tets.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_tets}")
    lines += ["10"] * mesh.n_tets
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            array = np.asarray(values, dtype=float)
            if len(array) != mesh.n_vertices:
                raise ValueError(f"Point data {name} has {len(array)} rows")
            if array.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(repr(v) for v in row) for row in array.tolist()]
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [repr(v) for v in array.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _LOGGER.debug("Wrote %s", path)


def select_faces(mesh: TetMesh, predicate: GammaPredicate) -> set[int]:
    """Boundary faces whose three vertices all satisfy the predicate."""
    corners = mesh.vertices[mesh.boundary_faces]
    labels = np.repeat(mesh.face_labels[:, None], 3, axis=1)
    accepted = np.asarray(
        predicate(corners[..., 0], corners[..., 1], corners[..., 2], labels), dtype=bool
    )
    accepted = np.broadcast_to(accepted, labels.shape)
    return set(np.flatnonzero(accepted.all(axis=1)).tolist())


@dataclass(frozen=True, eq=False)
class Dissection:
    """Split of the boundary into Γ, the interface loops Π and Γ₂."""

    mesh: TetMesh
    gamma_faces: frozenset[int]
    gamma2_faces: frozenset[int]
    pi_chains: tuple[tuple[int, ...], ...]
    exceptional_points: tuple[int, ...]
    _gamma_index: IntArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Cache the sorted Γ face index."""
        object.__setattr__(
            self, "_gamma_index", np.array(sorted(self.gamma_faces), dtype=np.int64)
        )

    @property
    def gamma_index(self) -> IntArray:
        """Sorted Γ face indices."""
        return self._gamma_index

    @cached_property
    def gamma_triangles(self) -> IntArray:
        """Vertex triples of the Γ faces, outward oriented."""
        return self.mesh.boundary_faces[self._gamma_index]

    @cached_property
    def gamma_vertices(self) -> IntArray:
        """Vertices of the closure of Γ."""
        return np.unique(self.gamma_triangles)

    @cached_property
    def pi_vertices(self) -> IntArray:
        """Vertices on Π."""
        return np.unique(np.concatenate([np.array(c) for c in self.pi_chains]))

    @cached_property
    def pi_edges(self) -> frozenset[tuple[int, int]]:
        """Sorted vertex pairs of the Π edges."""
        return frozenset(
            tuple(sorted((chain[i], chain[(i + 1) % len(chain)])))
            for chain in self.pi_chains
            for i in range(len(chain))
        )

    @cached_property
    def gamma_edges(self) -> frozenset[tuple[int, int]]:
        """Sorted vertex pairs of all edges in the closure of Γ."""
        return frozenset(_face_edges(self.gamma_triangles))

    @property
    def gamma_area(self) -> float:
        """Total area of Γ."""
        return float(self.mesh.face_areas[self._gamma_index].sum())


def _face_edges(faces: Iterable[Iterable[int]]) -> Iterable[tuple[int, int]]:
    for face in faces:
        a, b, c = (int(v) for v in face)
        yield from (tuple(sorted(pair)) for pair in ((a, b), (b, c), (c, a)))


def dissect_boundary(mesh: TetMesh, gamma_labels: Iterable[int]) -> Dissection:
    """Mark Γ and derive the interface loops and their exceptional points."""
    gamma = frozenset(int(i) for i in gamma_labels)
    n_faces = len(mesh.boundary_faces)
    if not gamma:
        raise DissectionError("Γ is empty")
    if any(i < 0 or i >= n_faces for i in gamma):
        raise DissectionError("Γ references a face that is not on the boundary")
    if len(gamma) == n_faces:
        raise DissectionError("Γ covers the whole boundary; Γ₂ would be empty")
    gamma2 = frozenset(range(n_faces)) - gamma

    # Directed Π edges, oriented as they run in their Γ face.
    census: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for index in sorted(gamma):
        a, b, c = (int(v) for v in mesh.boundary_faces[index])
        for tail, head in ((a, b), (b, c), (c, a)):
            census[tuple(sorted((tail, head)))].append((tail, head))
    successor: dict[int, int] = {}
    for directed in census.values():
        if len(directed) != 1:
            continue
        tail, head = directed[0]
        if tail in successor:
            raise DissectionError(f"Π touches itself at vertex {tail}")
        successor[tail] = head
    if not successor:
        raise DissectionError("Γ has no boundary inside ∂Ω")
    if sorted(successor) != sorted(successor.values()):
        raise DissectionError("Π does not form closed loops")

    chains: list[tuple[int, ...]] = []
    pending = set(successor)
    while pending:
        start = min(pending)
        chain = [start]
        pending.discard(start)
        vertex = successor[start]
        while vertex != start:
            if vertex not in pending:
                raise DissectionError(f"Π loop through {start} is not simple")
            chain.append(vertex)
            pending.discard(vertex)
            vertex = successor[vertex]
        chains.append(tuple(chain))

    exceptional: list[int] = []
    for chain in chains:
        points = mesh.vertices[list(chain)]
        incoming = points - np.roll(points, 1, axis=0)
        outgoing = np.roll(points, -1, axis=0) - points
        angle = np.arctan2(
            np.linalg.norm(np.cross(incoming, outgoing), axis=1),
            np.sum(incoming * outgoing, axis=1),
        )
        exceptional.extend(
            chain[i] for i in np.flatnonzero(angle > EXCEPTIONAL_ANGLE).tolist()
        )

    _LOGGER.info(
        "Dissection: %d Γ faces, %d Π loops, %d exceptional points",
        len(gamma),
        len(chains),
        len(exceptional),
    )
    return Dissection(
        mesh=mesh,
        gamma_faces=gamma,
        gamma2_faces=gamma2,
        pi_chains=tuple(chains),
        exceptional_points=tuple(sorted(exceptional)),
    )
