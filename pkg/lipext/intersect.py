"""
Exact tetrahedron overlap tests by separating axes.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
from itertools import combinations

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .geometry import FloatArray
from .mesh import IntArray, TetMesh

_LOGGER = logging.getLogger(__name__)

_EDGES = np.array(list(combinations(range(4), 2)))
_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])
_CHUNK = 50000


def _face_normals(corners: FloatArray) -> FloatArray:
    a, b, c = (corners[:, _FACES[:, i]] for i in range(3))
    return np.cross(b - a, c - a)


def _edge_vectors(corners: FloatArray) -> FloatArray:
    return corners[:, _EDGES[:, 1]] - corners[:, _EDGES[:, 0]]


def tets_overlap(
    first: FloatArray, second: FloatArray, *, tol: float = 1e-10
) -> NDArray[np.bool_]:
    """
    Whether paired tets (n, 4, 3) share interior points.

    Tets that only touch along faces, edges or vertices count as separated.
    """
    edges_a = _edge_vectors(first)
    edges_b = _edge_vectors(second)
    crosses = np.cross(edges_a[:, :, None], edges_b[:, None, :]).reshape(len(first), -1, 3)
    axes = np.concatenate([_face_normals(first), _face_normals(second), crosses], axis=1)
    norms = np.linalg.norm(axes, axis=2)
    scale = np.maximum(
        np.linalg.norm(np.ptp(first, axis=1), axis=1),
        np.linalg.norm(np.ptp(second, axis=1), axis=1),
    )
    usable = norms > 1e-12 * scale[:, None] ** 2
    axes = axes / np.where(usable, norms, 1.0)[..., None]

    project_a = np.einsum("nkj,nvj->nkv", axes, first)
    project_b = np.einsum("nkj,nvj->nkv", axes, second)
    slack = tol * scale[:, None]
    apart = (project_a.max(axis=2) <= project_b.min(axis=2) + slack) | (
        project_b.max(axis=2) <= project_a.min(axis=2) + slack
    )
    return ~np.any(apart & usable, axis=1)


def _radius(mesh: TetMesh) -> float:
    return float(np.linalg.norm(mesh.corners - mesh.centroids[:, None], axis=2).max())


def candidate_pairs(first: TetMesh, second: TetMesh | None = None) -> IntArray:
    """Tet pairs whose bounding spheres around centroids meet."""
    if second is None:
        tree = cKDTree(first.centroids)
        pairs = tree.query_pairs(2.0 * _radius(first), output_type="ndarray")
        return pairs.reshape(-1, 2)
    reach = _radius(first) + _radius(second)
    hits = cKDTree(first.centroids).query_ball_tree(cKDTree(second.centroids), reach)
    rows = [(i, j) for i, found in enumerate(hits) for j in found]
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def find_overlaps(first: TetMesh, second: TetMesh | None = None) -> IntArray:
    """
    Overlapping tet pairs between two meshes.

    With one mesh, pairs (i < j) within that mesh are tested.
    """
    other = first if second is None else second
    pairs = candidate_pairs(first, second)
    found = []
    for start in range(0, len(pairs), _CHUNK):
        chunk = pairs[start : start + _CHUNK]
        overlap = tets_overlap(first.corners[chunk[:, 0]], other.corners[chunk[:, 1]])
        found.append(chunk[overlap])
    result = np.concatenate(found) if found else np.zeros((0, 2), dtype=np.int64)
    _LOGGER.debug("Tested %d tet pairs, %d overlap", len(pairs), len(result))
    return result
