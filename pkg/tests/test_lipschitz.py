"""Tests for hypograph fits and cone checks."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lipext.exceptions import GeometryError
from lipext.geometry import unit
from lipext.lipschitz import (
    ConeSpec,
    check_cone_property,
    check_perturbed_direction,
    check_uniform_cone,
    fit_coordinate_box,
    outward_direction,
)
from lipext.mesh import TetMesh, generate_slab_mesh


def test_flat_patch_has_zero_constant(cube1: TetMesh) -> None:
    fit = fit_coordinate_box(cube1, [0.5, 0.5, 1.0], [0.0, 0.0, 1.0], 0.2, 0.2)
    assert fit.single_valued
    assert fit.lipschitz == pytest.approx(0.0, abs=1e-9)
    assert fit.as_dict()["M_is_lower_bound"] is True


def test_edge_has_unit_constant(cube1: TetMesh) -> None:
    """Two faces at right angles seen along their bisector have slope 1."""
    fit = fit_coordinate_box(cube1, [0.5, 0.0, 1.0], [0.0, -1.0, 1.0], 0.03, 0.1)
    assert fit.single_valued
    assert fit.lipschitz == pytest.approx(1.0, abs=1e-5)
    assert fit.gamma_m == pytest.approx(math.pi / 4, abs=1e-5)


def test_fit_errors(cube1: TetMesh) -> None:
    with pytest.raises(GeometryError):
        fit_coordinate_box(cube1, [0.5, 0.5, 0.5], [0.0, 0.0, 1.0], 0.1, 0.1)
    with pytest.raises(GeometryError):
        fit_coordinate_box(cube1, [0.5, 0.5, 1.0], [0.0, 0.0, 1.0], 2.0, 0.1)
    with pytest.raises(ValueError):
        fit_coordinate_box(cube1, [0.5, 0.5, 1.0], [0.0, 0.0, 1.0], 0.0, 0.1)


def test_perturbed_direction() -> None:
    assert check_perturbed_direction(0.0, [0, 0, 1], [0, 0, 1])
    assert not check_perturbed_direction(1.0, [0, 0, 1], [math.sqrt(3) / 2, 0, 0.5])
    assert check_perturbed_direction(1.0, [0, 0, 1], [0.5, 0, math.sqrt(3) / 2])
    with pytest.raises(ValueError):
        check_perturbed_direction(-1.0, [0, 0, 1], [0, 0, 1])


@pytest.mark.parametrize(("theta", "height"), [(0.0, 1.0), (math.pi / 2, 1.0), (0.3, 0.0)])
def test_degenerate_cones(theta: float, height: float) -> None:
    with pytest.raises(GeometryError):
        ConeSpec(direction=np.array([0.0, 0.0, 1.0]), theta=theta, height=height)


def test_cone_samples_lie_in_cone() -> None:
    cone = ConeSpec(direction=unit([1.0, 1.0, 0.0]), theta=0.4, height=0.5)
    samples = cone.sample(200, np.random.default_rng(3))
    assert samples.shape == (200, 3)
    assert np.all(cone.contains(samples))


def test_cone_on_flat_top(cube1: TetMesh) -> None:
    cone = ConeSpec(direction=np.array([0.0, 0.0, 1.0]), theta=math.pi / 8, height=0.2)
    report = check_cone_property(cube1, [0.5, 0.5, 1.0], cone, 0.1, 50)
    assert report.passed
    assert report.worst_margin is not None
    assert report.violations == []


def test_cone_taller_than_slab_fails() -> None:
    """y - z leaves a thin slab through its far side."""
    slab = generate_slab_mesh(2, 0.05)
    cone = ConeSpec(direction=np.array([0.0, 0.0, 1.0]), theta=math.pi / 8, height=0.5)
    report = check_cone_property(slab, [0.5, 0.5, 0.05], cone, 0.02, 50)
    assert not report.passed
    violation = report.violations[0]
    y, z = np.array(violation["y"]), np.array(violation["z"])
    assert not slab.contains(y - z)[0]


def test_cone_vacuous_and_off_surface(cube1: TetMesh) -> None:
    cone = ConeSpec(direction=np.array([0.0, 0.0, 1.0]), theta=0.3, height=0.1)
    report = check_cone_property(cube1, [0.5, 0.5, 1.0], cone, 0.05, 0)
    assert report.passed and report.vacuous
    with pytest.raises(GeometryError):
        check_cone_property(cube1, [0.5, 0.5, 0.5], cone, 0.05, 10)


def test_outward_direction_at_corner(cube1: TetMesh) -> None:
    direction = outward_direction(cube1, np.array([1.0, 1.0, 1.0]), 0.05)
    np.testing.assert_allclose(direction, unit([1.0, 1.0, 1.0]), atol=1e-6)


def test_uniform_cone_on_cube(cube1: TetMesh) -> None:
    report = check_uniform_cone(cube1, math.pi / 8, 0.1, samples_per_point=20)
    assert report.passed
    assert report.n_points == 8
    assert report.n_violations == 0


def test_uniform_cone_too_wide_fails(cube1: TetMesh) -> None:
    report = check_uniform_cone(cube1, 1.55, 0.1, samples_per_point=20)
    assert not report.passed
    assert report.as_dict()["violations"]
