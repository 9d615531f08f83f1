"""
Vectorized geometric kernels shared by the mesh, field and projector modules.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError
from scipy.stats import qmc

from .const import CLIP_TOLERANCE, HALTON_SEED
from .exceptions import GeometryError

_LOGGER = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# Parameter-space reference triangle, counter-clockwise.
_REFERENCE_TRIANGLE: FloatArray = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_MAX_POLYGON = 7


@dataclass(frozen=True)
class Plane:
    """Oriented plane {x : normal·x = offset}."""

    normal: tuple[float, float, float]
    offset: float

    def signed_distance(self, points: FloatArray) -> FloatArray:
        """Signed distance of points, positive on the normal side."""
        normal = np.asarray(self.normal, dtype=float)
        return (points @ normal - self.offset) / np.linalg.norm(normal)


def as_points(points: ArrayLike) -> FloatArray:
    """Coerce to an (n, 3) float array."""
    array = np.asarray(points, dtype=float)
    if array.ndim == 1:
        array = array[None, :]
    if array.shape[-1] != 3:
        raise ValueError(f"Expected 3D points, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("Points must have finite coordinates")
    return array


def unit(vector: ArrayLike) -> FloatArray:
    """Normalize vectors along the last axis."""
    array = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(array, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("Cannot normalize a zero vector")
    return array / norm


def orthonormal_frame(direction: ArrayLike) -> FloatArray:
    """Rows (e1, e2, u) of a right-handed frame whose third axis is u."""
    u = unit(direction)
    helper = np.eye(3)[int(np.argmin(np.abs(u)))]
    e1 = unit(np.cross(helper, u))
    e2 = np.cross(u, e1)
    return np.vstack([e1, e2, u])


def signed_volumes(corners: FloatArray) -> FloatArray:
    """Signed volumes of tetrahedra given as (n, 4, 3) corner arrays."""
    edges = corners[:, 1:, :] - corners[:, :1, :]
    return np.linalg.det(edges) / 6.0


def barycentric_transforms(corners: FloatArray) -> FloatArray:
    """Inverse edge matrices mapping x - corner0 to (λ1, λ2, λ3)."""
    edges = np.transpose(corners[:, 1:, :] - corners[:, :1, :], (0, 2, 1))
    return np.linalg.inv(edges)


def barycentric(
    points: FloatArray, origins: FloatArray, transforms: FloatArray
) -> FloatArray:
    """Barycentric coordinates of paired points and tets, shape (n, 4)."""
    tail = np.einsum("nij,nj->ni", transforms, points - origins)
    return np.concatenate([1.0 - tail.sum(axis=1, keepdims=True), tail], axis=1)


def halton(n: int, dim: int = 3, *, seed: int = HALTON_SEED) -> FloatArray:
    """Deterministic low-discrepancy samples in [0, 1)^dim."""
    if n <= 0:
        return np.zeros((0, dim))
    return qmc.Halton(d=dim, scramble=True, seed=seed).random(n)


def face_lattice(order: int) -> FloatArray:
    """Barycentric weights (i, j, k)/order with i + j + k = order."""
    if order < 1:
        raise ValueError(f"order must be positive, got {order}")
    weights = [
        (i, j, order - i - j) for i in range(order + 1) for j in range(order + 1 - i)
    ]
    return np.array(weights, dtype=float) / order


def sample_triangles(corners: FloatArray, weights: FloatArray) -> FloatArray:
    """Points of every triangle (n, 3, 3) at the given weights, shape (n, m, 3)."""
    return np.einsum("mi,nij->nmj", weights, corners)


def point_triangle_distance(
    points: FloatArray, a: FloatArray, b: FloatArray, c: FloatArray
) -> FloatArray:
    """Distances from every point to every triangle, shape (n, m)."""
    p = points[:, None, :]
    ab = (b - a)[None]
    ac = (c - a)[None]
    ap = p - a[None]
    bp = p - b[None]
    cp = p - c[None]
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.nan_to_num(d1 / (d1 - d3))
        w_ac = np.nan_to_num(d2 / (d2 - d6))
        w_bc = np.nan_to_num((d4 - d3) / ((d4 - d3) + (d5 - d6)))
        denom = va + vb + vc
        v_in = np.nan_to_num(vb / denom)
        w_in = np.nan_to_num(vc / denom)

    a_, b_, c_ = a[None], b[None], c[None]
    candidates = [
        np.broadcast_to(a_, ap.shape),
        np.broadcast_to(b_, ap.shape),
        a_ + v_ab[..., None] * ab,
        np.broadcast_to(c_, ap.shape),
        a_ + w_ac[..., None] * ac,
        b_ + w_bc[..., None] * (c_ - b_),
        a_ + v_in[..., None] * ab + w_in[..., None] * ac,
    ]
    conditions = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    closest = candidates[-1].copy()
    taken = np.zeros(d1.shape, dtype=bool)
    for condition, candidate in zip(conditions, candidates[:-1], strict=True):
        pick = condition & ~taken
        closest[pick] = np.broadcast_to(candidate, closest.shape)[pick]
        taken |= pick
    return np.linalg.norm(p - closest, axis=-1)


def ray_triangle_hits(
    origins: FloatArray,
    direction: FloatArray,
    a: FloatArray,
    b: FloatArray,
    c: FloatArray,
    *,
    eps: float = 1e-12,
) -> tuple[FloatArray, NDArray[np.bool_]]:
    """Ray parameters and hit mask for every (origin, triangle) pair."""
    e1 = b - a
    e2 = c - a
    pvec = np.cross(direction[None, :], e2)
    det = np.sum(e1 * pvec, axis=1)
    parallel = np.abs(det) < eps
    inv_det = np.where(parallel, 0.0, 1.0 / np.where(parallel, 1.0, det))
    tvec = origins[:, None, :] - a[None]
    u = np.sum(tvec * pvec[None], axis=-1) * inv_det[None]
    qvec = np.cross(tvec, e1[None])
    v = (qvec @ direction) * inv_det[None]
    t = np.sum(qvec * e2[None], axis=-1) * inv_det[None]
    tol = 1e-10
    hit = (~parallel[None]) & (u >= -tol) & (v >= -tol) & (u + v <= 1.0 + tol)
    return t, hit


def best_cone_direction(normals: ArrayLike) -> FloatArray:
    """
    Direction maximizing the minimum dot product with unit normals.

    This is the normalized minimum-norm point of the normals' convex hull.
    """
    stack = unit(np.asarray(normals, dtype=float).reshape(-1, 3))
    weight = 1e3
    system = np.vstack([stack.T, weight * np.ones((1, len(stack)))])
    rhs = np.array([0.0, 0.0, 0.0, weight])
    coefficients, _ = nnls(system, rhs)
    direction = stack.T @ coefficients
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        raise GeometryError("Normals surround the origin; no cone direction exists")
    return direction / norm


def clip_segments(
    start: FloatArray,
    stop: FloatArray,
    origins: FloatArray,
    transforms: FloatArray,
    *,
    tol: float = CLIP_TOLERANCE,
) -> tuple[FloatArray, FloatArray]:
    """Parameter interval [lo, hi] of each segment inside its paired tet."""
    lam0 = barycentric(start, origins, transforms)
    lam1 = barycentric(stop, origins, transforms) - lam0
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = -(lam0 + tol) / lam1
    rising = lam1 > 1e-300
    falling = lam1 < -1e-300
    flat_out = ~rising & ~falling & (lam0 < -tol)
    lo = np.maximum(lo, np.max(np.where(rising, bound, -np.inf), axis=1))
    hi = np.minimum(hi, np.min(np.where(falling, bound, np.inf), axis=1))
    hi = np.where(np.any(flat_out, axis=1), lo, hi)
    return lo, np.maximum(hi, lo)


def _clip_polygons(
    polygons: FloatArray, counts: NDArray[np.int64], coefficients: FloatArray
) -> tuple[FloatArray, NDArray[np.int64]]:
    """One Sutherland-Hodgman pass keeping c0 + c1*a + c2*b >= 0."""
    n, k, _ = polygons.shape
    index = np.arange(k)[None, :]
    valid = index < counts[:, None]
    following = np.where(index + 1 < counts[:, None], index + 1, 0)
    nxt = np.take_along_axis(polygons, following[..., None], axis=1)
    dist = coefficients[:, :1] + np.einsum("nkj,nj->nk", polygons, coefficients[:, 1:])
    dist_next = np.take_along_axis(dist, following, axis=1)
    inside = dist >= 0.0
    inside_next = dist_next >= 0.0
    crossing = valid & (inside != inside_next)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(crossing, dist / (dist - dist_next), 0.0)
    cut = polygons + ratio[..., None] * (nxt - polygons)

    out = np.empty((n, 2 * k, 2))
    out[:, 0::2] = polygons
    out[:, 1::2] = cut
    keep = np.empty((n, 2 * k), dtype=bool)
    keep[:, 0::2] = valid & inside
    keep[:, 1::2] = crossing
    order = np.argsort(~keep, axis=1, kind="stable")[:, :_MAX_POLYGON]
    compact = np.take_along_axis(out, order[..., None], axis=1)
    return compact, np.minimum(keep.sum(axis=1), _MAX_POLYGON)


def _polygon_moments(
    polygons: FloatArray, counts: NDArray[np.int64]
) -> tuple[FloatArray, FloatArray]:
    """Signed area and centroid of compacted convex polygons."""
    k = polygons.shape[1]
    index = np.arange(k)[None, :]
    valid = index < counts[:, None]
    following = np.where(index + 1 < counts[:, None], index + 1, 0)
    nxt = np.take_along_axis(polygons, following[..., None], axis=1)
    cross = polygons[..., 0] * nxt[..., 1] - nxt[..., 0] * polygons[..., 1]
    cross = np.where(valid & (counts[:, None] >= 3), cross, 0.0)
    area = 0.5 * cross.sum(axis=1)
    weighted = np.einsum("nk,nkj->nj", cross, polygons + nxt)
    fallback = np.einsum("nk,nkj->nj", valid, polygons) / np.maximum(counts, 1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        centroid = weighted / (6.0 * area[:, None])
    tiny = np.abs(area) < 1e-300
    centroid[tiny] = fallback[tiny]
    return area, centroid


def clip_triangles(
    corners: FloatArray,
    origins: FloatArray,
    transforms: FloatArray,
    *,
    tol: float = CLIP_TOLERANCE,
) -> tuple[FloatArray, FloatArray]:
    """
    Clip triangles (n, 3, 3) against paired tets.

    Returns the parameter-space area of each piece (a fraction of 1/2) and
    its parameter-space centroid (alpha, beta).
    """
    n = len(corners)
    lam = np.stack(
        [barycentric(corners[:, i], origins, transforms) for i in range(3)], axis=1
    )
    polygons = np.zeros((n, _MAX_POLYGON, 2))
    polygons[:, :3] = _REFERENCE_TRIANGLE
    counts = np.full(n, 3, dtype=np.int64)
    for m in range(4):
        coefficients = np.stack(
            [
                lam[:, 0, m] + tol,
                lam[:, 1, m] - lam[:, 0, m],
                lam[:, 2, m] - lam[:, 0, m],
            ],
            axis=1,
        )
        polygons, counts = _clip_polygons(polygons, counts, coefficients)
    return _polygon_moments(polygons, counts)


def split_triangles_by_plane(
    corners: FloatArray, plane: Plane
) -> tuple[FloatArray, NDArray[np.int64]]:
    """Split triangles by a plane into sub-triangles keeping orientation."""
    dist = plane.signed_distance(corners.reshape(-1, 3)).reshape(-1, 3)
    straddle = (dist.max(axis=1) > 0.0) & (dist.min(axis=1) < 0.0)
    pieces = [corners[~straddle]]
    parents = [np.flatnonzero(~straddle)]
    if np.any(straddle):
        sub = corners[straddle]
        sub_dist = dist[straddle]
        for sign in (1.0, -1.0):
            polygons = np.zeros((len(sub), _MAX_POLYGON, 2))
            polygons[:, :3] = _REFERENCE_TRIANGLE
            counts = np.full(len(sub), 3, dtype=np.int64)
            coefficients = sign * np.stack(
                [
                    sub_dist[:, 0],
                    sub_dist[:, 1] - sub_dist[:, 0],
                    sub_dist[:, 2] - sub_dist[:, 0],
                ],
                axis=1,
            )
            polygons, counts = _clip_polygons(polygons, counts, coefficients)
            for apex in range(1, _MAX_POLYGON - 1):
                fan = counts > apex + 1
                if not np.any(fan):
                    break
                params = polygons[fan][:, [0, apex, apex + 1]]
                base = sub[fan]
                physical = (
                    base[:, None, 0]
                    + params[..., :1] * (base[:, None, 1] - base[:, None, 0])
                    + params[..., 1:] * (base[:, None, 2] - base[:, None, 0])
                )
                pieces.append(physical)
                parents.append(np.flatnonzero(straddle)[fan])
    return np.concatenate(pieces), np.concatenate(parents)


def split_segments_by_plane(
    corners: FloatArray, plane: Plane
) -> tuple[FloatArray, NDArray[np.int64]]:
    """Split segments (n, 2, 3) at a plane, keeping direction."""
    dist = plane.signed_distance(corners.reshape(-1, 3)).reshape(-1, 2)
    straddle = dist[:, 0] * dist[:, 1] < 0.0
    pieces = [corners[~straddle]]
    parents = [np.flatnonzero(~straddle)]
    if np.any(straddle):
        sub = corners[straddle]
        ratio = dist[straddle, 0] / (dist[straddle, 0] - dist[straddle, 1])
        middle = sub[:, 0] + ratio[:, None] * (sub[:, 1] - sub[:, 0])
        pieces.append(np.stack([sub[:, 0], middle], axis=1))
        pieces.append(np.stack([middle, sub[:, 1]], axis=1))
        index = np.flatnonzero(straddle)
        parents.extend([index, index])
    return np.concatenate(pieces), np.concatenate(parents)


def split_tets_by_plane(
    corners: FloatArray, plane: Plane
) -> tuple[FloatArray, NDArray[np.int64], FloatArray]:
    """
    Split tets (n, 4, 3) at a plane.

    Returns positively oriented pieces, their parent index and the parent's
    orientation sign (pieces of a negatively oriented tet carry -1).
    """
    dist = plane.signed_distance(corners.reshape(-1, 3)).reshape(-1, 4)
    straddle = (dist.max(axis=1) > 0.0) & (dist.min(axis=1) < 0.0)
    signs = np.sign(signed_volumes(corners))
    keep = corners[~straddle].copy()
    flip = signs[~straddle] < 0
    keep[flip] = keep[flip][:, [0, 2, 1, 3]]
    pieces = [keep]
    parents = [np.flatnonzero(~straddle)]
    for parent in np.flatnonzero(straddle):
        tet, d = corners[parent], dist[parent]
        crossings = [
            tet[i] + d[i] / (d[i] - d[j]) * (tet[j] - tet[i])
            for i in range(4)
            for j in range(i + 1, 4)
            if d[i] * d[j] < 0.0
        ]
        for side in (d >= 0.0, d <= 0.0):
            cloud = np.unique(np.vstack([tet[side], *crossings]), axis=0)
            if len(cloud) < 4:
                continue
            try:
                hull = ConvexHull(cloud)
            except QhullError:
                continue
            center = cloud.mean(axis=0)
            fan = np.stack(
                [
                    np.broadcast_to(center, (len(hull.simplices), 3)),
                    *(cloud[hull.simplices[:, i]] for i in range(3)),
                ],
                axis=1,
            )
            flip = signed_volumes(fan) < 0
            fan[flip] = fan[flip][:, [0, 2, 1, 3]]
            pieces.append(fan)
            parents.append(np.full(len(fan), parent))
    parent_index = np.concatenate(parents)
    return np.concatenate(pieces), parent_index, signs[parent_index]
