"""
Lowest-order discrete de Rham complex: Whitney forms on a tet mesh.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .const import DENSE_RANK_LIMIT, Space
from .exceptions import ComplexError, GeometryError
from .geometry import FloatArray, Plane, split_tets_by_plane
from .mesh import OUTSIDE, Dissection, IntArray, TetMesh
from .quadrature import TET_RULE, Evaluator, integrate_simplices

_LOGGER = logging.getLogger(__name__)

_LOCAL_EDGES = np.array(list(combinations(range(4), 2)))
_LOCAL_FACES = np.array(list(combinations(range(4), 3)))


@dataclass(frozen=True)
class DofVector:
    """Coefficients of a discrete field in one space."""

    space: Space
    values: FloatArray

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {"space": str(self.space), "values": np.asarray(self.values).tolist()}


@dataclass(frozen=True)
class BCMask:
    """Dofs supported on the closure of Γ."""

    space: Space
    indices: IntArray


def _sorted_local(tets: IntArray, local: np.ndarray) -> np.ndarray:
    """Local vertex positions of each sub-entity, ordered by global index."""
    chosen = tets[:, local]
    order = np.argsort(chosen, axis=2, kind="stable")
    return np.take_along_axis(np.broadcast_to(local, chosen.shape), order, axis=2)


class FEComplex:
    """Incidence matrices, Whitney bases and interpolants on one mesh."""

    def __init__(self, mesh: TetMesh, dissection: Dissection | None = None) -> None:
        """Enumerate entities and assemble the integer incidence matrices."""
        self.mesh = mesh
        self.dissection = dissection
        tets = mesh.tets

        self.tet_edge_local = _sorted_local(tets, _LOCAL_EDGES)
        self.tet_face_local = _sorted_local(tets, _LOCAL_FACES)
        edge_keys = np.take_along_axis(
            tets[:, None, :].repeat(6, axis=1), self.tet_edge_local, axis=2
        )
        face_keys = np.take_along_axis(
            tets[:, None, :].repeat(4, axis=1), self.tet_face_local, axis=2
        )
        self.edges, edge_index = np.unique(edge_keys.reshape(-1, 2), axis=0, return_inverse=True)
        self.faces, face_index = np.unique(face_keys.reshape(-1, 3), axis=0, return_inverse=True)
        self.tet_edges = edge_index.reshape(-1, 6)
        self.tet_faces = face_index.reshape(-1, 4)

        n_v, n_e, n_f, n_t = mesh.n_vertices, len(self.edges), len(self.faces), len(tets)
        rows = np.repeat(np.arange(n_e), 2)
        self.grad = sparse.csr_matrix(
            (np.tile([-1, 1], n_e), (rows, self.edges.reshape(-1))),
            shape=(n_e, n_v),
            dtype=np.int64,
        )
        lookup = {tuple(edge): i for i, edge in enumerate(self.edges.tolist())}
        columns = [
            [lookup[(a, b)], lookup[(b, c)], lookup[(a, c)]] for a, b, c in self.faces.tolist()
        ]
        self.curl = sparse.csr_matrix(
            (
                np.tile([1, 1, -1], n_f),
                (np.repeat(np.arange(n_f), 3), np.array(columns).reshape(-1)),
            ),
            shape=(n_f, n_e),
            dtype=np.int64,
        )
        self.div = sparse.csr_matrix(
            (
                self._face_signs().reshape(-1),
                (np.repeat(np.arange(n_t), 4), self.tet_faces.reshape(-1)),
            ),
            shape=(n_t, n_f),
            dtype=np.int64,
        )
        self._check()
        _LOGGER.info("Complex: %d vertices, %d edges, %d faces, %d cells", n_v, n_e, n_f, n_t)

    def _face_signs(self) -> IntArray:
        """+1 where a face's sorted orientation points out of the tet."""
        corners = self.mesh.corners
        faces = self.faces[self.tet_faces]
        a, b, c = (self.mesh.vertices[faces[..., i]] for i in range(3))
        normal = np.cross(b - a, c - a)
        centroid = corners.mean(axis=1)[:, None, :]
        outward = np.einsum("tfj,tfj->tf", normal, a - centroid)
        return np.where(outward > 0, 1, -1)

    def _check(self) -> None:
        if (self.curl @ self.grad).count_nonzero() or (self.div @ self.curl).count_nonzero():
            raise ComplexError("Incidence matrices do not form a complex")
        shared = np.asarray(abs(self.div).sum(axis=0)).reshape(-1)
        signed = np.asarray(self.div.sum(axis=0)).reshape(-1)
        if np.any(signed[shared == 2] != 0):
            raise ComplexError("Interior face orientations are inconsistent")

    def dim(self, space: Space) -> int:
        """Number of dofs of a space."""
        return {
            Space.GRAD: self.mesh.n_vertices,
            Space.CURL: len(self.edges),
            Space.DIV: len(self.faces),
            Space.L2: self.mesh.n_tets,
        }[space]

    def derivative(self, space: Space) -> sparse.csr_matrix:
        """Incidence matrix leaving a space."""
        return {Space.GRAD: self.grad, Space.CURL: self.curl, Space.DIV: self.div}[space]

    @cached_property
    def boundary_face_signs(self) -> tuple[IntArray, IntArray]:
        """Global index of each mesh boundary face and +1 where it points outward."""
        lookup = {tuple(face): i for i, face in enumerate(self.faces.tolist())}
        index = np.array([lookup[tuple(sorted(f))] for f in self.mesh.boundary_faces.tolist()])
        a, b, c = (self.mesh.vertices[self.faces[index, i]] for i in range(3))
        sorted_normal = np.cross(b - a, c - a)
        sign = np.where(np.sum(sorted_normal * self.mesh.face_vector_areas, axis=1) > 0, 1, -1)
        return index, sign

    def entity_corners(self, space: Space) -> FloatArray:
        """Corner coordinates of the entities carrying the dofs."""
        vertices = self.mesh.vertices
        return {
            Space.GRAD: vertices[:, None, :],
            Space.CURL: vertices[self.edges],
            Space.DIV: vertices[self.faces],
            Space.L2: self.mesh.corners,
        }[space]

    def canonical_interpolate(
        self, space: Space, f: Evaluator, breaks: Sequence[Plane] = ()
    ) -> DofVector:
        """Vertex values, edge circulations, face fluxes or cell integrals of f."""
        values = integrate_simplices(f, self.entity_corners(space), breaks)
        return DofVector(space, values)

    def apply_discrete_d(self, dofs: DofVector, space: Space | None = None) -> DofVector:
        """Apply G, C or D and tag the result with the next space."""
        if space is not None and space is not dofs.space:
            raise ComplexError(f"Expected {space} dofs, got {dofs.space}")
        if dofs.space is Space.L2:
            raise ComplexError("The L2 space is the end of the complex")
        if len(dofs.values) != self.dim(dofs.space):
            raise ComplexError(f"Dof vector has {len(dofs.values)} entries")
        return DofVector(dofs.space.next, self.derivative(dofs.space) @ dofs.values)

    def local_basis(
        self, space: Space, tets: IntArray, lam: FloatArray
    ) -> tuple[FloatArray, IntArray]:
        """Whitney basis values at points with barycentrics lam in tets."""
        grads = self.mesh.gradients[tets]
        if space is Space.GRAD:
            return lam, self.mesh.tets[tets]
        if space is Space.CURL:
            local = self.tet_edge_local[tets]
            i, j = local[..., 0], local[..., 1]
            li = np.take_along_axis(lam, i, axis=1)[..., None]
            lj = np.take_along_axis(lam, j, axis=1)[..., None]
            gi = np.take_along_axis(grads, i[..., None], axis=1)
            gj = np.take_along_axis(grads, j[..., None], axis=1)
            return li * gj - lj * gi, self.tet_edges[tets]
        if space is Space.DIV:
            local = self.tet_face_local[tets]
            parts = []
            for first, second, third in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
                lf = np.take_along_axis(lam, local[..., first], axis=1)[..., None]
                gs = np.take_along_axis(grads, local[..., second, None], axis=1)
                gt = np.take_along_axis(grads, local[..., third, None], axis=1)
                parts.append(lf * np.cross(gs, gt))
            return 2.0 * sum(parts), self.tet_faces[tets]
        return (1.0 / self.mesh.volumes[tets])[:, None], tets[:, None]

    def evaluate(
        self, space: Space, dofs: ArrayLike, tets: IntArray, lam: FloatArray
    ) -> FloatArray:
        """Evaluate a dof vector at located points."""
        basis, index = self.local_basis(space, tets, lam)
        coefficients = np.asarray(dofs, dtype=float)[index]
        if basis.ndim == 3:
            return np.einsum("nb,nbj->nj", coefficients, basis)
        return np.sum(coefficients * basis, axis=1)

    def evaluate_fe(self, space: Space, dofs: ArrayLike, points: ArrayLike) -> FloatArray:
        """Locate points and evaluate the Whitney expansion."""
        tets, lam = self.mesh.locate(points)
        if np.any(tets == OUTSIDE):
            raise GeometryError("Point lies outside the mesh")
        return self.evaluate(space, dofs, tets, lam)

    def bc_mask(self, space: Space, dissection: Dissection | None = None) -> BCMask:
        """Dofs on the closure of Γ."""
        marked = dissection or self.dissection
        if marked is None:
            raise ComplexError("No dissection to take Γ from")
        if space is Space.GRAD:
            return BCMask(space, marked.gamma_vertices)
        if space is Space.CURL:
            keys = marked.gamma_edges
            hits = [i for i, edge in enumerate(self.edges.tolist()) if tuple(edge) in keys]
            return BCMask(space, np.array(hits, dtype=np.int64))
        if space is Space.DIV:
            keys = {tuple(sorted(face)) for face in marked.gamma_triangles.tolist()}
            hits = [i for i, face in enumerate(self.faces.tolist()) if tuple(face) in keys]
            return BCMask(space, np.array(hits, dtype=np.int64))
        return BCMask(space, np.zeros(0, dtype=np.int64))

    def _quadrature(self, breaks: Sequence[Plane] = ()) -> tuple[IntArray, FloatArray, FloatArray]:
        """Parent tet, barycentrics and weights of a volume rule, split at breaks."""
        pieces = self.mesh.corners
        parents = np.arange(self.mesh.n_tets)
        for plane in breaks:
            pieces, index, _ = split_tets_by_plane(pieces, plane)
            parents = parents[index]
        nodes = np.einsum("qi,nij->nqj", TET_RULE.points, pieces)
        weights = np.abs(np.linalg.det(pieces[:, 1:] - pieces[:, :1])) / 6.0
        owner = np.repeat(parents, len(TET_RULE.weights))
        origins = self.mesh.vertices[self.mesh.tets[owner, 0]]
        tail = np.einsum("nij,nj->ni", self.mesh.transforms[owner], nodes.reshape(-1, 3) - origins)
        lam = np.column_stack([1.0 - tail.sum(axis=1), tail])
        return owner, lam, (weights[:, None] * TET_RULE.weights[None]).reshape(-1)

    @cached_property
    def _points(self) -> tuple[IntArray, FloatArray, FloatArray]:
        return self._quadrature()

    def mass_matrix(self, space: Space) -> sparse.csr_matrix:
        """L2 Gram matrix of the Whitney basis."""
        owner, lam, weights = self._points
        basis, index = self.local_basis(space, owner, lam)
        if basis.ndim == 2:
            basis = basis[..., None]
        local = np.einsum("n,naj,nbj->nab", weights, basis, basis)
        n_local = index.shape[1]
        rows = np.repeat(index, n_local, axis=1).reshape(-1)
        cols = np.tile(index, (1, n_local)).reshape(-1)
        size = self.dim(space)
        return sparse.coo_matrix((local.reshape(-1), (rows, cols)), shape=(size, size)).tocsr()

    def l2_norm(self, space: Space, dofs: ArrayLike) -> float:
        """L2 norm of a discrete field."""
        values = np.asarray(dofs, dtype=float)
        return float(np.sqrt(max(values @ (self.mass_matrix(space) @ values), 0.0)))

    def l2_error(
        self, space: Space, dofs: ArrayLike, f: Evaluator, breaks: Sequence[Plane] = ()
    ) -> float:
        """‖f - v_h‖ over the mesh."""
        owner, lam, weights = self._quadrature(breaks)
        points = np.einsum("ni,nij->nj", lam, self.mesh.corners[owner])
        diff = np.asarray(f(points), dtype=float) - self.evaluate(space, dofs, owner, lam)
        squared = diff**2 if diff.ndim == 1 else np.sum(diff**2, axis=1)
        return float(np.sqrt(np.sum(weights * squared)))

    def l2_best_approximation(
        self, space: Space, f: Evaluator, breaks: Sequence[Plane] = ()
    ) -> tuple[FloatArray, float]:
        """L2 projection of f onto the space and its error."""
        owner, lam, weights = self._quadrature(breaks)
        points = np.einsum("ni,nij->nj", lam, self.mesh.corners[owner])
        values = np.asarray(f(points), dtype=float)
        basis, index = self.local_basis(space, owner, lam)
        if basis.ndim == 2:
            contributions = weights[:, None] * values[:, None] * basis
        else:
            contributions = weights[:, None] * np.einsum("nj,nbj->nb", values, basis)
        rhs = np.zeros(self.dim(space))
        np.add.at(rhs, index, contributions)
        coefficients = spsolve(self.mass_matrix(space).tocsc(), rhs)
        return coefficients, self.l2_error(space, coefficients, f, breaks)

    def exactness(self) -> dict[str, Any]:
        """Dense rank check of ker C = im G and ker D = im C."""
        if max(len(self.edges), len(self.faces)) > DENSE_RANK_LIMIT:
            _LOGGER.warning("Skipping dense rank checks above %d dofs", DENSE_RANK_LIMIT)
            return {"checked": False}
        rank_g = int(np.linalg.matrix_rank(self.grad.toarray()))
        rank_c = int(np.linalg.matrix_rank(self.curl.toarray()))
        rank_d = int(np.linalg.matrix_rank(self.div.toarray()))
        kernel_c = len(self.edges) - rank_c
        kernel_d = len(self.faces) - rank_d
        return {
            "checked": True,
            "rank_G": rank_g,
            "rank_C": rank_c,
            "rank_D": rank_d,
            "dim_ker_C": kernel_c,
            "dim_ker_D": kernel_d,
            "exact": kernel_c == rank_g and kernel_d == rank_c,
        }

    def as_dict(self) -> dict[str, Any]:
        """JSON view of the dimensions and complex property."""
        return {
            "dims": {str(space): self.dim(space) for space in Space},
            "CG_zero": (self.curl @ self.grad).count_nonzero() == 0,
            "DC_zero": (self.div @ self.curl).count_nonzero() == 0,
        }


def build_complex(mesh: TetMesh, dissection: Dissection | None = None) -> FEComplex:
    """Build the lowest-order complex on a mesh."""
    return FEComplex(mesh, dissection)


def triplets(matrix: sparse.spmatrix) -> str:
    """Coordinate text export, one `row col value` line per entry."""
    coo = sparse.coo_matrix(matrix)
    return "".join(f"{r} {c} {v}\n" for r, c, v in zip(coo.row, coo.col, coo.data, strict=True))
