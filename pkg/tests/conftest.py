"""Shared fixtures: small cubes with Γ on the top face."""

from __future__ import annotations

import pytest

from lipext.config import parse_gamma
from lipext.expansion import ExpandedDomain, TransportMap, build_collar, build_protrusion
from lipext.feec import FEComplex, build_complex
from lipext.mesh import Dissection, TetMesh, dissect_boundary, generate_box_mesh, select_faces
from lipext.projectors import Smoother
from lipext.smoothing import build_ball_system, projector_thickness
from lipext.transversal import TransversalField, build_box_cover, build_field

DELTA = 0.1


def top_dissection(mesh: TetMesh) -> Dissection:
    """Γ = the face z = 1."""
    return dissect_boundary(mesh, select_faces(mesh, parse_gamma("z==1")))


@pytest.fixture(scope="session")
def cube1() -> TetMesh:
    """Unit cube, one Kuhn cell."""
    return generate_box_mesh(1, 1, 1)


@pytest.fixture(scope="session")
def cube2() -> TetMesh:
    """Unit cube, 2x2x2 Kuhn cells."""
    return generate_box_mesh(2, 2, 2)


@pytest.fixture(scope="session")
def top1(cube1: TetMesh) -> Dissection:
    """Top-face dissection of the one-cell cube."""
    return top_dissection(cube1)


@pytest.fixture(scope="session")
def top2(cube2: TetMesh) -> Dissection:
    """Top-face dissection of the 2x2x2 cube."""
    return top_dissection(cube2)


@pytest.fixture(scope="session")
def field2(top2: Dissection) -> TransversalField:
    """Transversal field for the 2x2x2 cube."""
    return build_field(build_box_cover(top2.mesh, top2))


@pytest.fixture(scope="session")
def expanded2(top2: Dissection, field2: TransversalField) -> ExpandedDomain:
    """Protrusion of thickness 0.1 over the top face."""
    return build_protrusion(top2.mesh, top2, TransportMap(field2), 0.1)


@pytest.fixture(scope="session")
def fe1(cube1: TetMesh, top1: Dissection) -> FEComplex:
    """Complex on the one-cell cube."""
    return build_complex(cube1, top1)


@pytest.fixture(scope="session")
def fe2(cube2: TetMesh, top2: Dissection) -> FEComplex:
    """Complex on the 2x2x2 cube."""
    return build_complex(cube2, top2)


@pytest.fixture(scope="session")
def smoother2(fe2: FEComplex, top2: Dissection, field2: TransversalField) -> Smoother:
    """Smoother with δ = 0.1 on the 2x2x2 cube."""
    mesh = fe2.mesh
    t = projector_thickness(mesh, DELTA, 2.0, field2.kappa)
    expanded = build_protrusion(mesh, top2, TransportMap(field2), t)
    balls = build_ball_system(mesh, top2, expanded, field2, DELTA, 2.0)
    return Smoother(fe2, balls, build_collar(mesh, field2, t))
