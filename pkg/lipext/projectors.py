"""
Smoothed commuting projectors with boundary conditions on Γ only.

R = I_h∘S is assembled from integrals of Whitney forms over the images of
mesh entities under the ball nodes. FE functions are extended past ∂Ω by
pulling their dofs back along the collar columns, which keeps R a cochain
map and leaves the Γ-constrained subspace invariant.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import product
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, SuperLU, onenormest, splu
from scipy.spatial import cKDTree

from .const import CONDITION_LIMIT, DENSE_RANK_LIMIT, HALTON_SEED, Space
from .exceptions import ProjectorError
from .expansion import Collar
from .feec import FEComplex
from .fields import AnalyticField
from .geometry import FloatArray, Plane, barycentric, clip_segments, clip_triangles
from .mesh import OUTSIDE, IntArray, TetMesh
from .quadrature import Evaluator, integrate_simplices
from .smoothing import BallSystem

_LOGGER = logging.getLogger(__name__)

_CLIP_CHUNK = 20000
_OWN_TOLERANCE = 1e-9
_COVER_TOLERANCE = 1e-8
_PIECE_TOLERANCE = 1e-14


def _permutation_parity(rows: IntArray) -> IntArray:
    """+1 or -1 for the permutation sorting each row."""
    order = np.argsort(rows, axis=1, kind="stable")
    n = rows.shape[1]
    inversions = np.zeros(len(rows), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            inversions += order[:, i] > order[:, j]
    return np.where(inversions % 2 == 0, 1, -1)


def _entities(fe: FEComplex, space: Space) -> IntArray:
    return {
        Space.GRAD: np.arange(fe.mesh.n_vertices)[:, None],
        Space.CURL: fe.edges,
        Space.DIV: fe.faces,
        Space.L2: fe.mesh.tets,
    }[space]


def collar_extension(
    space: Space, base: FEComplex, extended: FEComplex, collapse: IntArray
) -> sparse.csr_matrix:
    """
    Cochain map taking dofs on Ω to dofs on Ω ∪ collar.

    Each entity of the extended mesh is collapsed onto ∂Ω along the collar
    columns; degenerate images get zero and the rest inherit the base dof
    with the orientation sign of the collapse.
    """
    rows_out = _entities(extended, space)
    if space is Space.L2:
        n_base = base.mesh.n_tets
        return sparse.csr_matrix(
            (np.ones(n_base), (np.arange(n_base), np.arange(n_base))),
            shape=(extended.mesh.n_tets, n_base),
        )
    image = collapse[rows_out]
    distinct = np.all(np.diff(np.sort(image, axis=1), axis=1) > 0, axis=1)
    lookup = {tuple(row): i for i, row in enumerate(_entities(base, space).tolist())}
    rows, cols, vals = [], [], []
    signs = _permutation_parity(image)
    for row in np.flatnonzero(distinct).tolist():
        key = tuple(sorted(image[row].tolist()))
        col = lookup.get(key)
        if col is None:
            raise ProjectorError(f"Collapsed entity {key} is not in the base complex")
        rows.append(row)
        cols.append(col)
        vals.append(signs[row])
    return sparse.csr_matrix(
        (np.array(vals, dtype=float), (rows, cols)),
        shape=(len(rows_out), base.dim(space)),
    )


@dataclass(frozen=True)
class ImageSimplices:
    """Images of every k-entity under all tuples of its vertex-ball nodes."""

    corners: FloatArray
    weights: FloatArray
    owner: IntArray

    def aggregate(self, n_entities: int) -> sparse.csr_matrix:
        """Weighted sum of image rows into entity rows."""
        return sparse.csr_matrix(
            (self.weights, (self.owner, np.arange(len(self.owner)))),
            shape=(n_entities, len(self.owner)),
        )


def image_simplices(fe: FEComplex, balls: BallSystem, space: Space) -> ImageSimplices:
    """Image simplices of the entities carrying the dofs of a space."""
    entities = _entities(fe, space)
    k = entities.shape[1]
    q = balls.nodes.shape[1]
    tuples = np.array(list(product(range(q), repeat=k)))
    vertex = entities[:, None, :]
    corners = balls.nodes[vertex, tuples[None]]
    weights = np.prod(balls.weights[vertex, tuples[None]], axis=2)
    return ImageSimplices(
        corners=corners.reshape(-1, k, 3),
        weights=weights.reshape(-1),
        owner=np.repeat(np.arange(len(entities)), len(tuples)),
    )


def _candidates(
    mesh: TetMesh, centers: FloatArray, reach: FloatArray
) -> tuple[IntArray, IntArray]:
    spread = float(np.linalg.norm(mesh.corners - mesh.centroids[:, None], axis=2).max())
    hits = cKDTree(mesh.centroids).query_ball_point(centers, reach + spread * (1.0 + 1e-9))
    counts = np.fromiter(map(len, hits), dtype=np.int64, count=len(centers))
    images = np.repeat(np.arange(len(centers)), counts)
    tets = np.fromiter((t for found in hits for t in found), dtype=np.int64, count=counts.sum())
    return images, tets


def _owned(
    mesh: TetMesh, points: FloatArray, tets: IntArray
) -> tuple[np.ndarray, FloatArray]:
    """Pieces clearly inside their tet, or in a shared face owned by the lowest index."""
    lam = barycentric(points, mesh.vertices[mesh.tets[tets, 0]], mesh.transforms[tets])
    interior = lam.min(axis=1) > _OWN_TOLERANCE
    owners = mesh.locate(points)[0]
    return interior | (owners == tets), lam


def _coverage_check(covered: FloatArray, expected: float) -> None:
    short = np.flatnonzero(np.abs(covered - expected) > _COVER_TOLERANCE)
    if len(short):
        raise ProjectorError(
            f"{len(short)} image simplices leave the extension mesh "
            f"(coverage {covered[short[0]]:.6g} of {expected})",
            advice="use a smaller delta or a thicker collar",
        )


def whitney_integrals(
    fe: FEComplex, images: ImageSimplices, space: Space
) -> sparse.csr_matrix:
    """
    Integrals of every Whitney form of fe over every image simplex.

    Points are located; segments and triangles are clipped against the mesh
    tets. Whitney forms are affine per tet, so midpoint and centroid rules are
    exact on each piece.
    """
    mesh = fe.mesh
    n_images = len(images.owner)
    size = fe.dim(space)
    if space is Space.GRAD:
        points = images.corners[:, 0]
        tets, lam = mesh.locate(points)
        outside = tets == OUTSIDE
        if np.any(outside):
            _coverage_check(np.where(outside, 0.0, 1.0), 1.0)
        return sparse.csr_matrix(
            (lam.reshape(-1), (np.repeat(np.arange(n_images), 4), mesh.tets[tets].reshape(-1))),
            shape=(n_images, size),
        )
    if space is Space.L2:
        raise ProjectorError("Cell images are handled through the divergence")

    rows, cols, vals = [], [], []
    covered = np.zeros(n_images)
    for start in range(0, n_images, _CLIP_CHUNK):
        corners = images.corners[start : start + _CLIP_CHUNK]
        center = corners.mean(axis=1)
        reach = np.linalg.norm(corners - center[:, None], axis=2).max(axis=1)
        image, tets = _candidates(mesh, center, reach)
        origins = mesh.vertices[mesh.tets[tets, 0]]
        transforms = mesh.transforms[tets]
        pieces = corners[image]
        if space is Space.CURL:
            lo, hi = clip_segments(pieces[:, 0], pieces[:, 1], origins, transforms)
            measure = hi - lo
            span = pieces[:, 1] - pieces[:, 0]
            point = pieces[:, 0] + 0.5 * (lo + hi)[:, None] * span
            oriented = measure[:, None] * span
        else:
            area, centroid = clip_triangles(pieces, origins, transforms)
            measure = area
            point = (
                pieces[:, 0]
                + centroid[:, :1] * (pieces[:, 1] - pieces[:, 0])
                + centroid[:, 1:] * (pieces[:, 2] - pieces[:, 0])
            )
            normal = 0.5 * np.cross(pieces[:, 1] - pieces[:, 0], pieces[:, 2] - pieces[:, 0])
            oriented = 2.0 * area[:, None] * normal
        keep = measure > _PIECE_TOLERANCE
        image, tets, point, oriented, measure = (
            image[keep], tets[keep], point[keep], oriented[keep], measure[keep]
        )
        owned, lam = _owned(mesh, point, tets)
        image, tets, oriented, measure, lam = (
            image[owned], tets[owned], oriented[owned], measure[owned], lam[owned]
        )
        np.add.at(covered, start + image, measure)
        basis, index = fe.local_basis(space, tets, lam)
        rows.append(np.repeat(start + image, index.shape[1]))
        cols.append(index.reshape(-1))
        vals.append(np.einsum("nbj,nj->nb", basis, oriented).reshape(-1))
    _coverage_check(covered, 0.5 if space is Space.DIV else 1.0)
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_images, size),
    ).tocsr()


class Smoother:
    """I_h∘S on one mesh for a fixed ball system and collar."""

    def __init__(self, base: FEComplex, balls: BallSystem, collar: Collar) -> None:
        """Build the complex on the collar mesh."""
        self.base = base
        self.balls = balls
        self.collar = collar
        self.extended = FEComplex(collar.mesh)

    @cached_property
    def _images(self) -> dict[Space, ImageSimplices]:
        return {space: image_simplices(self.base, self.balls, space) for space in Space}

    def images(self, space: Space) -> ImageSimplices:
        """Image simplices of a space."""
        return self._images[space]

    def dofs(self, space: Space, f: Evaluator, breaks: Sequence[Plane] = ()) -> FloatArray:
        """Canonical dofs of S f."""
        images = self.images(space)
        integrals = integrate_simplices(f, images.corners, breaks)
        return images.aggregate(self.base.dim(space)) @ integrals

    def matrix(self, space: Space) -> sparse.csr_matrix:
        """R on the FE dofs of a space."""
        if space is Space.L2:
            div = self.base.div.astype(float)
            r_div = self.matrix(Space.DIV)
            gram = (div @ div.T).tocsc()
            right = splu(gram).solve((div @ r_div @ div.T).toarray().T).T
            return sparse.csr_matrix(right)
        images = self.images(space)
        integrals = whitney_integrals(self.extended, images, space)
        pullback = collar_extension(space, self.base, self.extended, self.collar.collapse)
        return (images.aggregate(self.base.dim(space)) @ (integrals @ pullback)).tocsr()


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """R, its inverse on the FE space and Π = J∘R for one space."""

    space: Space
    smoother: Smoother
    R: sparse.csr_matrix
    delta: float
    norm_estimate: float
    factor: SuperLU | None = None
    condition: float | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def _require_factor(self) -> SuperLU:
        if self.factor is None:
            raise ProjectorError("Projector has no inverse yet", advice="call build_projector")
        return self.factor

    def J(self, dofs: ArrayLike) -> FloatArray:
        """Apply R^{-1}."""
        return self._require_factor().solve(np.asarray(dofs, dtype=float))

    def project_fe(self, dofs: ArrayLike) -> FloatArray:
        """Π on an FE dof vector."""
        return self.J(self.R @ np.asarray(dofs, dtype=float))

    def project(self, f: Evaluator, breaks: Sequence[Plane] = ()) -> FloatArray:
        """Π on an evaluator."""
        return self.J(self.smoother.dofs(self.space, f, breaks))

    def as_dict(self) -> dict[str, Any]:
        """JSON view."""
        return {
            "space": str(self.space),
            "delta": self.delta,
            "norm_estimate": self.norm_estimate,
            "condition": self.condition,
            "dim": int(self.R.shape[0]),
            **self.details,
        }


def _norm_estimate(fe: FEComplex, space: Space, matrix: sparse.csr_matrix) -> float:
    mass = fe.mass_matrix(space)
    error = sparse.identity(matrix.shape[0], format="csr") - matrix
    numerator = np.asarray(error.multiply(mass @ error).sum(axis=0)).reshape(-1)
    denominator = mass.diagonal()
    return float(np.sqrt(np.max(np.maximum(numerator, 0.0) / denominator)))


def assemble_R(space: Space, smoother: Smoother) -> ProjectorSet:
    """Assemble R for one space and estimate ‖I - R‖ over the basis."""
    matrix = smoother.matrix(space)
    estimate = _norm_estimate(smoother.base, space, matrix)
    _LOGGER.info(
        "R[%s]: %d dofs, %d nonzeros, ‖I-R‖ ≈ %.4g", space, matrix.shape[0], matrix.nnz, estimate
    )
    return ProjectorSet(
        space=space,
        smoother=smoother,
        R=matrix,
        delta=smoother.balls.delta,
        norm_estimate=estimate,
    )


def build_projector(space: Space, rset: ProjectorSet) -> ProjectorSet:
    """Factor R and check that it is safely invertible."""
    if space is not rset.space:
        raise ProjectorError(f"Expected an R for {space}, got {rset.space}")
    advice = "use a smaller delta"
    if rset.norm_estimate >= 1.0:
        raise ProjectorError(
            f"‖I - R‖ estimate {rset.norm_estimate:.4g} is not below 1", advice=advice
        )
    try:
        factor = splu(rset.R.tocsc())
    except RuntimeError as error:
        raise ProjectorError(f"R[{space}] is singular: {error}", advice=advice) from error
    n = rset.R.shape[0]
    inverse = LinearOperator(
        (n, n),
        matvec=factor.solve,
        rmatvec=lambda x: factor.solve(x, trans="T"),
        dtype=float,
    )
    condition = float(onenormest(rset.R) * onenormest(inverse))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise ProjectorError(f"R[{space}] condition estimate {condition:.3g}", advice=advice)
    _LOGGER.debug("J[%s]: condition estimate %.4g", space, condition)
    return replace(rset, factor=factor, condition=condition)


def build_projectors(
    smoother: Smoother, spaces: Iterable[Space] = tuple(Space)
) -> dict[Space, ProjectorSet]:
    """Assemble and factor projectors for several spaces."""
    return {space: build_projector(space, assemble_R(space, smoother)) for space in spaces}


def projection_check(projector: ProjectorSet, *, seed: int = HALTON_SEED) -> dict[str, float]:
    """Max errors of Π v = v on basis vectors and of Π∘Π = Π on random dofs."""
    n = projector.R.shape[0]
    rng = np.random.default_rng(seed)
    result: dict[str, float] = {}
    if n <= DENSE_RANK_LIMIT:
        images = projector.J(projector.R.toarray())
        result["projection"] = float(np.abs(images - np.eye(n)).max())
    values = rng.standard_normal(n)
    once = projector.project_fe(values)
    result["idempotence"] = float(np.abs(projector.project_fe(once) - once).max())
    return result


def verify_commuting(
    projectors: dict[Space, ProjectorSet],
    fe: FEComplex,
    fields: Sequence[AnalyticField],
) -> dict[str, Any]:
    """
    End-to-end commuting residuals and Γ-mask checks.

    Residuals compare d∘Π with Π∘d in the dof max-norm; bc_max is the largest
    masked dof of Π u over the fields vanishing near the closure of Γ, None
    when no such field was given.
    """
    residuals: dict[str, list[dict[str, Any]]] = {"grad": [], "curl": [], "div": []}
    names = {Space.GRAD: "grad", Space.CURL: "curl", Space.DIV: "div"}
    bc_max: float | None = None
    for item in fields:
        space = item.space
        if space not in projectors:
            continue
        projected = projectors[space].project(item, item.breaks)
        if item.level is not None and fe.dissection is not None and space is not Space.L2:
            mask = fe.bc_mask(space).indices
            if len(mask):
                bc_max = max(bc_max or 0.0, float(np.abs(projected[mask]).max()))
        if space is Space.L2 or space.next not in projectors:
            continue
        left = fe.derivative(space) @ projected
        right = projectors[space.next].project(item.derivative, item.breaks)
        residuals[names[space]].append(
            {"field": item.key, "residual": float(np.abs(left - right).max(initial=0.0))}
        )
    worst = {
        key: max((entry["residual"] for entry in entries), default=0.0)
        for key, entries in residuals.items()
    }
    return {"residuals": residuals, "max": worst, "bc_max": bc_max}


def fit_slope(x: ArrayLike, y: ArrayLike) -> float:
    """Least-squares slope of log y against log x."""
    logs = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(*logs, 1)[0])
