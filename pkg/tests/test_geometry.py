"""Tests for the geometric kernels."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lipext.exceptions import GeometryError
from lipext.geometry import (
    Plane,
    as_points,
    barycentric,
    barycentric_transforms,
    best_cone_direction,
    clip_segments,
    clip_triangles,
    face_lattice,
    halton,
    orthonormal_frame,
    point_triangle_distance,
    ray_triangle_hits,
    signed_volumes,
    split_segments_by_plane,
    split_tets_by_plane,
    split_triangles_by_plane,
    unit,
)

UNIT_TET = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]])
TRIANGLE = (np.array([[0.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))


def test_as_points_rejects_bad_input() -> None:
    """2D points and NaN coordinates are refused."""
    assert as_points([1.0, 2.0, 3.0]).shape == (1, 3)
    with pytest.raises(ValueError):
        as_points([[1.0, 2.0]])
    with pytest.raises(ValueError):
        as_points([[np.nan, 0.0, 0.0]])


def test_unit_zero_vector() -> None:
    with pytest.raises(ValueError):
        unit([0.0, 0.0, 0.0])


@pytest.mark.parametrize("direction", [(0, 0, 1), (1, 1, 1), (-2.0, 0.5, 0.1)])
def test_orthonormal_frame(direction: tuple[float, float, float]) -> None:
    """Rows are orthonormal, right handed, and end with the direction."""
    frame = orthonormal_frame(direction)
    np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(frame[2], unit(direction), atol=1e-12)
    assert np.linalg.det(frame) == pytest.approx(1.0)


def test_signed_volume_and_orientation() -> None:
    assert signed_volumes(UNIT_TET)[0] == pytest.approx(1 / 6)
    assert signed_volumes(UNIT_TET[:, [0, 2, 1, 3]])[0] == pytest.approx(-1 / 6)


def test_barycentric_at_corners() -> None:
    """Corners map to the unit vectors."""
    transforms = barycentric_transforms(UNIT_TET)
    points = UNIT_TET[0]
    lam = barycentric(points, np.repeat(points[:1], 4, axis=0), np.repeat(transforms, 4, axis=0))
    np.testing.assert_allclose(lam, np.eye(4), atol=1e-12)


def test_halton_is_deterministic() -> None:
    first = halton(16, seed=7)
    assert first.shape == (16, 3)
    np.testing.assert_array_equal(first, halton(16, seed=7))
    assert np.all((first >= 0) & (first < 1))
    assert halton(0).shape == (0, 3)


def test_face_lattice() -> None:
    lattice = face_lattice(2)
    assert lattice.shape == (6, 3)
    np.testing.assert_allclose(lattice.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        face_lattice(0)


def test_point_triangle_distance_regions() -> None:
    """Distances to the interior, an edge and a vertex."""
    a, b, c = TRIANGLE
    points = np.array([[0.2, 0.2, 1.0], [0.5, -2.0, 0.0], [-3.0, -4.0, 0.0], [1.0, 1.0, 0.0]])
    distances = point_triangle_distance(points, a, b, c)[:, 0]
    np.testing.assert_allclose(distances, [1.0, 2.0, 5.0, math.sqrt(0.5)], atol=1e-12)


def test_ray_triangle_hits() -> None:
    a, b, c = TRIANGLE
    origins = np.array([[0.2, 0.2, -1.0], [2.0, 2.0, -1.0]])
    t, hit = ray_triangle_hits(origins, np.array([0.0, 0.0, 1.0]), a, b, c)
    assert hit[:, 0].tolist() == [True, False]
    assert t[0, 0] == pytest.approx(1.0)


def test_best_cone_direction() -> None:
    """Two orthogonal normals give their bisector."""
    direction = best_cone_direction([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(direction, unit([1.0, 0.0, 1.0]), atol=1e-6)
    np.testing.assert_allclose(best_cone_direction([[0.0, 0.0, 2.0]]), [0.0, 0.0, 1.0], atol=1e-9)


def test_best_cone_direction_surrounded() -> None:
    with pytest.raises(GeometryError):
        best_cone_direction([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])


def test_clip_segments() -> None:
    """A segment along x crosses the unit tet for x in [0, 0.8]."""
    transforms = barycentric_transforms(UNIT_TET)
    lo, hi = clip_segments(
        np.array([[-1.0, 0.1, 0.1]]), np.array([[1.0, 0.1, 0.1]]), UNIT_TET[:, 0], transforms
    )
    assert lo[0] == pytest.approx(0.5, abs=1e-9)
    assert hi[0] == pytest.approx(0.9, abs=1e-9)


def test_clip_segments_outside() -> None:
    transforms = barycentric_transforms(UNIT_TET)
    lo, hi = clip_segments(
        np.array([[2.0, 2.0, 2.0]]), np.array([[3.0, 2.0, 2.0]]), UNIT_TET[:, 0], transforms
    )
    assert hi[0] - lo[0] == pytest.approx(0.0)


def test_clip_triangles() -> None:
    """A face of the tet is kept whole; a doubled triangle keeps a quarter."""
    transforms = np.repeat(barycentric_transforms(UNIT_TET), 2, axis=0)
    origins = np.repeat(UNIT_TET[:, 0], 2, axis=0)
    corners = np.array(
        [
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
        ]
    )
    area, centroid = clip_triangles(corners, origins, transforms)
    np.testing.assert_allclose(area, [0.5, 0.125], atol=1e-9)
    np.testing.assert_allclose(centroid[0], [1 / 3, 1 / 3], atol=1e-9)
    np.testing.assert_allclose(centroid[1], [1 / 6, 1 / 6], atol=1e-9)


def test_plane_signed_distance() -> None:
    plane = Plane((0.0, 0.0, 2.0), 1.0)
    np.testing.assert_allclose(plane.signed_distance(np.array([[0.0, 0.0, 1.0]])), [0.5])


def test_split_segments_by_plane() -> None:
    plane = Plane((0.0, 0.0, 1.0), 0.25)
    pieces, parents = split_segments_by_plane(np.array([[[0, 0, 0], [0, 0, 1.0]]]), plane)
    assert parents.tolist() == [0, 0]
    np.testing.assert_allclose(np.linalg.norm(pieces[:, 1] - pieces[:, 0], axis=1).sum(), 1.0)


def test_split_triangles_by_plane_keeps_area() -> None:
    plane = Plane((1.0, 0.0, 0.0), 0.3)
    triangle = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    pieces, parents = split_triangles_by_plane(triangle, plane)
    areas = 0.5 * np.cross(pieces[:, 1] - pieces[:, 0], pieces[:, 2] - pieces[:, 0])
    assert set(parents.tolist()) == {0}
    np.testing.assert_allclose(areas.sum(axis=0), [0.0, 0.0, 0.5], atol=1e-12)


def test_split_tets_by_plane_keeps_volume() -> None:
    plane = Plane((0.0, 0.0, 1.0), 0.5)
    pieces, parents, signs = split_tets_by_plane(UNIT_TET, plane)
    volumes = signed_volumes(pieces)
    assert np.all(volumes > 0)
    assert volumes.sum() == pytest.approx(1 / 6)
    assert set(parents.tolist()) == {0}
    assert np.all(signs == 1)
