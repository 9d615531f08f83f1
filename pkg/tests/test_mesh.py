"""Tests for meshes, point location and boundary dissection."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from lipext.config import parse_gamma
from lipext.const import BARYCENTRIC_TOLERANCE
from lipext.exceptions import (
    DegenerateTetError,
    DissectionError,
    MeshFormatError,
    MeshTopologyError,
)
from lipext.geometry import barycentric
from lipext.mesh import (
    OUTSIDE,
    Dissection,
    TetMesh,
    dissect_boundary,
    export_vtk,
    generate_box_mesh,
    generate_lshape_mesh,
    generate_slab_mesh,
    load_mesh,
    point_location,
    save_mesh,
    select_faces,
)

UNIT_TET = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]


@pytest.mark.parametrize(
    ("n", "vertices", "tets", "faces"), [(1, 8, 6, 12), (2, 27, 48, 48), (3, 64, 162, 108)]
)
def test_box_mesh_counts(n: int, vertices: int, tets: int, faces: int) -> None:
    mesh = generate_box_mesh(n, n, n)
    assert (mesh.n_vertices, mesh.n_tets, len(mesh.boundary_faces)) == (vertices, tets, faces)
    assert mesh.volume == pytest.approx(1.0)
    assert np.all(mesh.volumes > 0)


def test_boundary_faces_point_outward(cube2: TetMesh) -> None:
    """Face normals point away from the cube centre."""
    outward = cube2.face_centroids - 0.5
    assert np.all(np.sum(cube2.face_normals * outward, axis=1) > 0)


def test_other_generators() -> None:
    assert generate_lshape_mesh(1).volume == pytest.approx(3.0)
    assert generate_slab_mesh(2, 0.05).volume == pytest.approx(0.05)
    with pytest.raises(ValueError):
        generate_slab_mesh(2, 0.0)
    with pytest.raises(ValueError):
        generate_box_mesh(0, 1, 1)


def test_mesh_size(cube1: TetMesh) -> None:
    """Kuhn tets of a cube share its circumsphere."""
    assert cube1.h == pytest.approx(math.sqrt(3.0))


def test_orientation_is_fixed() -> None:
    mesh = TetMesh.from_arrays(UNIT_TET, [[0, 2, 1, 3]])
    assert mesh.volumes[0] == pytest.approx(1 / 6)


def test_invalid_meshes() -> None:
    with pytest.raises(DegenerateTetError) as info:
        TetMesh.from_arrays([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2, 3]])
    assert info.value.tet == 0
    with pytest.raises(MeshTopologyError):
        TetMesh.from_arrays(UNIT_TET, [[0, 1, 2, 4]])
    with pytest.raises(MeshTopologyError):
        TetMesh.from_arrays(UNIT_TET, np.zeros((0, 4)))


def test_locate(cube2: TetMesh) -> None:
    """Centroids land in their own tet; far points are outside."""
    owners, lam = cube2.locate(cube2.centroids)
    np.testing.assert_array_equal(owners, np.arange(cube2.n_tets))
    np.testing.assert_allclose(lam, 0.25, atol=1e-12)
    assert point_location(cube2, [5.0, 5.0, 5.0]) == OUTSIDE
    assert cube2.contains([[0.5, 0.5, 0.5], [1.5, 0.5, 0.5]]).tolist() == [True, False]


def test_locate_matches_brute_force(cube2: TetMesh) -> None:
    """Located tets agree with barycentric tests against every tet."""
    points = np.random.default_rng(11).uniform(-0.2, 1.2, size=(1000, 3))
    lam = np.stack(
        [
            barycentric(
                points,
                np.broadcast_to(cube2.corners[k, 0], points.shape),
                np.broadcast_to(cube2.transforms[k], (len(points), 3, 3)),
            )
            for k in range(cube2.n_tets)
        ],
        axis=1,
    )
    inside = lam.min(axis=2) >= -BARYCENTRIC_TOLERANCE
    owners, coords = cube2.locate(points)
    found = np.flatnonzero(owners != OUTSIDE)
    np.testing.assert_array_equal(owners != OUTSIDE, inside.any(axis=1))
    np.testing.assert_array_equal(owners != OUTSIDE, np.all((points >= 0) & (points <= 1), axis=1))
    assert inside[found, owners[found]].all()
    np.testing.assert_allclose(coords[found], lam[found, owners[found]], atol=1e-12)


def test_locate_shared_vertex_picks_lowest_tet(cube2: TetMesh) -> None:
    """A vertex shared by many tets resolves to the smallest index."""
    centre = np.array([[0.5, 0.5, 0.5]])
    sharing = np.flatnonzero(np.any(np.all(np.isclose(cube2.corners, centre), axis=2), axis=1))
    assert point_location(cube2, centre[0]) == sharing.min()


def test_surface_distance(cube2: TetMesh) -> None:
    distances = cube2.surface_distance([[0.5, 0.5, 0.5], [0.5, 0.5, 1.0], [0.5, 0.5, 2.0]])
    np.testing.assert_allclose(distances, [0.5, 0.0, 1.0], atol=1e-12)


def test_save_and_load(tmp_path: Path) -> None:
    """Labels survive a write and read."""
    mesh = TetMesh.from_arrays(UNIT_TET, [[0, 1, 2, 3]], labels={(0, 1, 2): 7})
    path = tmp_path / "tet.mesh"
    save_mesh(mesh, path)
    loaded = load_mesh(path)
    np.testing.assert_allclose(loaded.vertices, mesh.vertices)
    assert sorted(loaded.face_labels.tolist()) == [-1, -1, -1, 7]


def test_load_errors(tmp_path: Path) -> None:
    bad = tmp_path / "bad.mesh"
    bad.write_text("v 0 0 0\nq 1 2 3\n", encoding="utf-8")
    with pytest.raises(MeshFormatError) as info:
        load_mesh(bad)
    assert info.value.line == 2
    bad.write_text("v 0 0 zero\n", encoding="utf-8")
    with pytest.raises(MeshFormatError):
        load_mesh(bad)
    with pytest.raises(OSError):
        load_mesh(tmp_path / "missing.mesh")


def test_label_hint_must_be_boundary() -> None:
    with pytest.raises(MeshTopologyError):
        TetMesh.from_arrays(UNIT_TET, [[0, 1, 2, 3]], labels={(0, 1, 4): 1})


def test_export_vtk(tmp_path: Path, cube1: TetMesh) -> None:
    path = tmp_path / "cube.vtk"
    export_vtk(cube1, path, point_data={"v_hat": np.zeros((8, 3)), "flag": np.ones(8)})
    text = path.read_text(encoding="utf-8")
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "CELLS 6 30" in text
    assert "VECTORS v_hat double" in text
    assert "SCALARS flag double 1" in text
    with pytest.raises(ValueError):
        export_vtk(cube1, path, point_data={"bad": np.zeros(3)})


def test_dissect_top_face(top1: Dissection, top2: Dissection) -> None:
    """Γ = top: one Π loop with the four cube corners exceptional."""
    assert len(top1.gamma_faces) == 2
    assert [len(chain) for chain in top1.pi_chains] == [4]
    assert len(top1.exceptional_points) == 4
    assert top1.gamma_area == pytest.approx(1.0)

    assert len(top2.gamma_faces) == 8
    assert [len(chain) for chain in top2.pi_chains] == [8]
    corners = top2.mesh.vertices[list(top2.exceptional_points)]
    np.testing.assert_allclose(np.sort(corners[:, 0]), [0, 0, 1, 1])
    np.testing.assert_allclose(corners[:, 2], 1.0)
    assert len(top2.pi_edges) == 8
    assert len(top2.gamma_vertices) == 9
    assert len(top2.gamma_faces) + len(top2.gamma2_faces) == len(top2.mesh.boundary_faces)


def test_dissect_label_predicate() -> None:
    """Labels select Γ as well as coordinates do."""
    mesh = TetMesh.from_arrays(UNIT_TET, [[0, 1, 2, 3]], labels={(1, 2, 3): 5})
    dissection = dissect_boundary(mesh, select_faces(mesh, parse_gamma("label==5")))
    assert len(dissection.gamma_faces) == 1
    assert len(dissection.pi_chains[0]) == 3
    assert len(dissection.exceptional_points) == 3


def test_dissect_errors(cube1: TetMesh) -> None:
    everything = range(len(cube1.boundary_faces))
    with pytest.raises(DissectionError):
        dissect_boundary(cube1, everything)
    with pytest.raises(DissectionError):
        dissect_boundary(cube1, [])
    with pytest.raises(DissectionError):
        dissect_boundary(cube1, [99])
