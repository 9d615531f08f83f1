"""Tests for the smoothed commuting projectors on the 2x2x2 cube."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from lipext.const import Space
from lipext.exceptions import ProjectorError
from lipext.feec import FEComplex
from lipext.fields import CATALOGUE
from lipext.projectors import (
    ProjectorSet,
    Smoother,
    _permutation_parity,
    assemble_R,
    build_projector,
    build_projectors,
    collar_extension,
    fit_slope,
    projection_check,
    verify_commuting,
)

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def projectors(smoother2: Smoother) -> dict[Space, ProjectorSet]:
    """Factored projectors for every space."""
    return build_projectors(smoother2)


def test_permutation_parity() -> None:
    rows = np.array([[0, 1, 2], [1, 0, 2], [2, 0, 1]])
    assert _permutation_parity(rows).tolist() == [1, -1, 1]


def test_fit_slope() -> None:
    assert fit_slope([1.0, 2.0, 4.0], [3.0, 12.0, 48.0]) == pytest.approx(2.0)


def test_collar_extension_keeps_base_dofs(smoother2: Smoother) -> None:
    """Vertices of Ω keep their values; collar vertices copy their foot point."""
    base, extended = smoother2.base, smoother2.extended
    collapse = smoother2.collar.collapse
    matrix = collar_extension(Space.GRAD, base, extended, collapse).toarray()
    n = base.mesh.n_vertices
    np.testing.assert_array_equal(matrix[:n], np.eye(n))
    np.testing.assert_array_equal(matrix.argmax(axis=1), collapse)
    curl = collar_extension(Space.CURL, base, extended, collapse)
    np.testing.assert_allclose((curl @ base.grad).toarray(), (extended.grad @ matrix), atol=0)


def test_R_is_a_cochain_map(projectors: dict[Space, ProjectorSet], fe2: FEComplex) -> None:
    """G R = R G, C R = R C and D R = R D on the dofs."""
    for space in (Space.GRAD, Space.CURL, Space.DIV):
        d = fe2.derivative(space).astype(float)
        left = (d @ projectors[space].R).toarray()
        right = (projectors[space.next].R @ d).toarray()
        np.testing.assert_allclose(left, right, atol=1e-10)


def test_R_keeps_gamma_constraints(
    projectors: dict[Space, ProjectorSet], fe2: FEComplex
) -> None:
    """Dofs on the closure of Γ only see dofs on the closure of Γ."""
    for space in (Space.GRAD, Space.CURL, Space.DIV):
        mask = fe2.bc_mask(space).indices
        free = np.setdiff1d(np.arange(fe2.dim(space)), mask)
        block = projectors[space].R[mask][:, free]
        assert np.abs(block.toarray()).max(initial=0.0) < 1e-12


def test_projection_identities(projectors: dict[Space, ProjectorSet]) -> None:
    for projector in projectors.values():
        assert projector.norm_estimate < 1.0
        assert projector.condition is not None
        check = projection_check(projector)
        assert check["projection"] < 1e-9
        assert check["idempotence"] < 1e-9
        assert projector.as_dict()["dim"] == projector.R.shape[0]


def test_projectors_commute(projectors: dict[Space, ProjectorSet], fe2: FEComplex) -> None:
    """d Π f = Π df for every catalogued field, and Π keeps Γ data zero."""
    report = verify_commuting(projectors, fe2, list(CATALOGUE.values()))
    assert len(report["residuals"]["grad"]) == 2
    assert max(report["max"].values()) < 1e-8
    assert report["bc_max"] < 1e-10


def test_build_projector_errors(smoother2: Smoother) -> None:
    rset = assemble_R(Space.GRAD, smoother2)
    with pytest.raises(ProjectorError):
        rset.J(np.zeros(rset.R.shape[0]))
    with pytest.raises(ProjectorError):
        build_projector(Space.CURL, rset)
    with pytest.raises(ProjectorError) as info:
        build_projector(Space.GRAD, replace(rset, norm_estimate=1.5))
    assert info.value.advice == "use a smaller delta"
