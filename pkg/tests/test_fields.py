"""Tests for the analytic field catalogue."""

from __future__ import annotations

import numpy as np
import pytest

from lipext.config import parse_gamma
from lipext.const import Space
from lipext.exceptions import GeometryError
from lipext.fields import (
    BUMP_LEVEL,
    CATALOGUE,
    aligned_catalogue,
    bump_plane,
    fields_for,
    get_field,
    zero_extension,
)
from lipext.mesh import Dissection, TetMesh, dissect_boundary, select_faces

POINT = np.array([0.3, 0.2, 0.4])
EPS = 1e-6


def _partials(key: str) -> np.ndarray:
    """Central differences: row i holds ∂f/∂x_i."""
    f = get_field(key)
    steps = np.eye(3) * EPS
    return np.array([(f(POINT + step)[0] - f(POINT - step)[0]) / (2 * EPS) for step in steps])


@pytest.mark.parametrize("key", ["linear-g", "bump-g"])
def test_gradient(key: str) -> None:
    np.testing.assert_allclose(
        get_field(key).derivative(POINT)[0], _partials(key), rtol=1e-6, atol=1e-8
    )


@pytest.mark.parametrize("key", ["rotation-c", "swirl-c"])
def test_curl(key: str) -> None:
    jac = _partials(key)
    curl = [jac[1, 2] - jac[2, 1], jac[2, 0] - jac[0, 2], jac[0, 1] - jac[1, 0]]
    np.testing.assert_allclose(get_field(key).derivative(POINT)[0], curl, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("key", ["radial-d", "flux-d"])
def test_divergence(key: str) -> None:
    assert get_field(key).derivative(POINT)[0] == pytest.approx(np.trace(_partials(key)), rel=1e-6)


def test_l2_fields_have_no_derivative() -> None:
    with pytest.raises(ValueError):
        get_field("density-o").derivative(POINT)


def test_bump_vanishes_above_level() -> None:
    """Every bump field and its derivative are zero for z >= level."""
    points = np.array([[0.5, 0.5, BUMP_LEVEL], [0.1, 0.9, 1.0]])
    for f in CATALOGUE.values():
        if f.level is None:
            assert f.breaks == ()
            continue
        assert f.breaks[0].offset == pytest.approx(BUMP_LEVEL)
        np.testing.assert_allclose(f(points), 0.0)
        if f.space is not Space.L2:
            np.testing.assert_allclose(f.derivative(points), 0.0)


def test_catalogue_lookup() -> None:
    assert [f.key for f in fields_for(Space.CURL, bump=True)] == ["swirl-c"]
    assert [f.key for f in fields_for(Space.GRAD, bump=False)] == ["linear-g"]
    assert get_field("constant-o").scalar
    assert not get_field("flux-d").scalar
    with pytest.raises(ValueError):
        get_field("nope")


def test_zero_extension(cube1: TetMesh) -> None:
    f = get_field("rotation-c")
    extended = zero_extension(f, cube1)
    points = np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 1.5]])
    values = extended(points)
    np.testing.assert_allclose(values[0], f(points[:1])[0])
    np.testing.assert_allclose(values[1], 0.0)
    scalar = zero_extension(get_field("linear-g"), cube1)(points)
    assert scalar.shape == (2,)
    assert scalar[1] == 0.0


def test_zero_extension_never_evaluates_outside(cube1: TetMesh) -> None:
    """A field undefined outside the mesh is only called at inside points."""
    f = get_field("rotation-c")

    def guarded(points: np.ndarray) -> np.ndarray:
        assert cube1.contains(points).all()
        return f(points)

    extended = zero_extension(guarded, cube1)
    outside_first = np.array([[0.5, 0.5, 1.5], [0.5, 0.5, 0.5]])
    values = extended(outside_first)
    np.testing.assert_allclose(values[0], 0.0)
    np.testing.assert_allclose(values[1], f(outside_first[1:])[0])
    assert extended(np.array([[2.0, 2.0, 2.0]])).shape == (1, 3)


def test_aligned_catalogue_on_top_face(top2: Dissection) -> None:
    catalogue = aligned_catalogue(top2)
    assert catalogue["bump-g"].level == pytest.approx(BUMP_LEVEL)
    assert catalogue["bump-g"].normal == pytest.approx((0.0, 0.0, 1.0))
    assert catalogue["linear-g"] is CATALOGUE["linear-g"]
    points = np.array([[0.2, 0.3, 0.1], [0.7, 0.6, 0.5]])
    np.testing.assert_allclose(catalogue["swirl-c"](points), CATALOGUE["swirl-c"](points))


def test_bumps_follow_a_side_gamma(cube2: TetMesh) -> None:
    """With Γ on x = 1 the bumps vanish near that face and no longer near the top."""
    side = dissect_boundary(cube2, select_faces(cube2, parse_gamma("x==1")))
    normal, level = bump_plane(side)
    assert normal == pytest.approx((1.0, 0.0, 0.0))
    assert level == pytest.approx(0.75)
    near_gamma = np.array([[0.8, 0.5, 0.5], [1.0, 0.2, 0.9]])
    top = np.array([[0.5, 0.5, 1.0]])
    for item in fields_for(Space.GRAD, bump=True, catalogue=aligned_catalogue(side)):
        np.testing.assert_allclose(item(near_gamma), 0.0)
        np.testing.assert_allclose(item.derivative(near_gamma), 0.0)
        assert abs(item(top)[0]) > 1e-3
        assert item.breaks[0].offset == pytest.approx(0.75)


def test_bent_gamma_has_no_bump_plane(cube2: TetMesh) -> None:
    faces = select_faces(cube2, parse_gamma("z==1")) | select_faces(cube2, parse_gamma("x==1"))
    with pytest.raises(GeometryError):
        bump_plane(dissect_boundary(cube2, faces))
