"""Tests for the Whitney complex."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import sparse

from lipext.const import Space
from lipext.exceptions import ComplexError, GeometryError
from lipext.feec import DofVector, FEComplex, build_complex, triplets
from lipext.fields import get_field
from lipext.mesh import Dissection, TetMesh

AFFINE = ["linear-g", "rotation-c", "radial-d", "constant-o"]


def test_spaces() -> None:
    assert [space.degree for space in Space] == [0, 1, 2, 3]
    assert Space.GRAD.next is Space.CURL
    assert Space.DIV.next is Space.L2
    with pytest.raises(ValueError):
        Space.L2.next  # noqa: B018


@pytest.mark.parametrize(
    ("fixture", "dims"), [("fe1", [8, 19, 18, 6]), ("fe2", [27, 98, 120, 48])]
)
def test_dimensions(request: pytest.FixtureRequest, fixture: str, dims: list[int]) -> None:
    """Entity counts satisfy V - E + F - T = 1."""
    fe: FEComplex = request.getfixturevalue(fixture)
    assert [fe.dim(space) for space in Space] == dims
    blob = fe.as_dict()
    assert blob["CG_zero"] and blob["DC_zero"]
    assert blob["dims"] == dict(zip("gcdo", dims, strict=True))


def test_exactness(fe2: FEComplex) -> None:
    report = fe2.exactness()
    assert report["exact"]
    assert report["rank_G"] == 26
    assert report["dim_ker_C"] == report["rank_G"]


@pytest.mark.parametrize("key", ["linear-g", "rotation-c", "radial-d"])
def test_interpolation_commutes(fe2: FEComplex, key: str) -> None:
    """d Π f = Π df for affine fields."""
    f = get_field(key)
    dofs = fe2.canonical_interpolate(f.space, f)
    moved = fe2.apply_discrete_d(dofs, f.space)
    assert moved.space is f.space.next
    expected = fe2.canonical_interpolate(f.space.next, f.derivative)
    np.testing.assert_allclose(moved.values, expected.values, atol=1e-12)


@pytest.mark.parametrize("key", AFFINE)
def test_whitney_spaces_reproduce_affine_fields(fe2: FEComplex, key: str) -> None:
    f = get_field(key)
    dofs = fe2.canonical_interpolate(f.space, f)
    assert fe2.l2_error(f.space, dofs.values, f) < 1e-10


def test_best_approximation_of_a_member(fe1: FEComplex) -> None:
    f = get_field("linear-g")
    coefficients, error = fe1.l2_best_approximation(Space.GRAD, f)
    np.testing.assert_allclose(coefficients, f(fe1.mesh.vertices), atol=1e-10)
    assert error < 1e-10


def test_evaluate_fe(fe1: FEComplex) -> None:
    f = get_field("rotation-c")
    dofs = fe1.canonical_interpolate(Space.CURL, f).values
    points = np.array([[0.2, 0.3, 0.4], [0.9, 0.1, 0.5]])
    np.testing.assert_allclose(fe1.evaluate_fe(Space.CURL, dofs, points), f(points), atol=1e-12)
    with pytest.raises(GeometryError):
        fe1.evaluate_fe(Space.CURL, dofs, [[2.0, 0.0, 0.0]])


def test_apply_discrete_d_errors(fe1: FEComplex) -> None:
    with pytest.raises(ComplexError):
        fe1.apply_discrete_d(DofVector(Space.L2, np.zeros(6)))
    with pytest.raises(ComplexError):
        fe1.apply_discrete_d(DofVector(Space.GRAD, np.zeros(8)), Space.CURL)
    with pytest.raises(ComplexError):
        fe1.apply_discrete_d(DofVector(Space.GRAD, np.zeros(3)))


def test_bc_mask(fe1: FEComplex, top1: Dissection) -> None:
    """The top square has 4 vertices, 4 sides plus a diagonal, and 2 triangles."""
    sizes = [len(fe1.bc_mask(space).indices) for space in Space]
    assert sizes == [4, 5, 2, 0]
    tops = fe1.mesh.vertices[fe1.edges[fe1.bc_mask(Space.CURL, top1).indices]]
    np.testing.assert_allclose(tops[..., 2], 1.0)


def test_bc_mask_needs_dissection(cube1: TetMesh) -> None:
    with pytest.raises(ComplexError):
        build_complex(cube1).bc_mask(Space.GRAD)


def test_mass_matrices(fe1: FEComplex) -> None:
    """P1 mass sums to the volume; the cell basis has mass 1/|T|."""
    grad_mass = fe1.mass_matrix(Space.GRAD)
    assert grad_mass.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(fe1.mass_matrix(Space.L2).diagonal(), 6.0)
    for space in (Space.CURL, Space.DIV):
        mass = fe1.mass_matrix(space).toarray()
        np.testing.assert_allclose(mass, mass.T, atol=1e-12)
        assert np.linalg.eigvalsh(mass).min() > 0.0
    constant = fe1.canonical_interpolate(Space.L2, get_field("constant-o"))
    assert fe1.l2_norm(Space.L2, constant.values) == pytest.approx(2.0)


def test_boundary_face_signs(fe1: FEComplex) -> None:
    index, sign = fe1.boundary_face_signs
    assert len(index) == 12
    assert set(sign.tolist()) <= {-1, 1}
    assert np.all(np.asarray(abs(fe1.div).sum(axis=0)).reshape(-1)[index] == 1)


def test_triplets(fe1: FEComplex) -> None:
    assert triplets(sparse.identity(2, format="csr")) == "0 0 1.0\n1 1 1.0\n"
    lines = triplets(fe1.grad).splitlines()
    assert len(lines) == 2 * 19
    assert lines[0].split()[2] in {"-1", "1"}
