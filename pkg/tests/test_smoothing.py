"""Tests for ball systems, dual weights and pointwise smoothing."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from lipext.const import BALL_MARGIN, Space
from lipext.exceptions import ProjectorError, SmoothingError
from lipext.expansion import ExpandedDomain
from lipext.fields import get_field
from lipext.mesh import Dissection
from lipext.projectors import Smoother
from lipext.smoothing import build_ball_system, dual_weight, projector_thickness, smooth
from lipext.transversal import TransversalField

DELTA = 0.1


def test_dual_weight_reproduces_affine() -> None:
    """∫ f p = p(a) for p in {1, x, y, z} on an off-centre ball."""
    weight = dual_weight([1.0, 0.0, 0.0], 0.5, [0.8, 0.3, -0.1])
    assert weight.volume == pytest.approx(4 / 3 * math.pi / 8)
    assert weight.reproduction_error() < 1e-12
    with pytest.raises(ValueError):
        dual_weight([0.0, 0.0, 0.0], 0.0, [0.0, 0.0, 0.0])


def test_projector_thickness() -> None:
    class Sized:
        h = 2.0

    assert projector_thickness(Sized(), 0.1, 2.0, 0.5) == pytest.approx(BALL_MARGIN * 1.2)


def test_ball_system(smoother2: Smoother, top2: Dissection) -> None:
    balls = smoother2.balls
    assert balls.radius == pytest.approx(balls.mesh.h * DELTA)
    assert balls.nodes.shape == (27, 6, 3)
    np.testing.assert_allclose(balls.weights.sum(axis=1), 1.0, atol=1e-12)
    assert set(balls.shifted.tolist()) == set(top2.gamma_vertices.tolist())
    moved = np.linalg.norm(balls.centers - balls.mesh.vertices, axis=1)
    np.testing.assert_allclose(moved[balls.shifted], 2.0 * balls.radius)
    assert np.all(moved[np.setdiff1d(np.arange(27), balls.shifted)] == 0.0)
    assert np.all(balls.centers[balls.shifted, 2] > 1.0)
    blob = balls.as_dict()
    assert blob["n_shifted"] == 9
    assert blob["max_shift"] == pytest.approx(2.0 * balls.radius)


def test_ball_kernels_reproduce_vertices(smoother2: Smoother) -> None:
    for vertex in smoother2.balls.shifted.tolist():
        assert smoother2.balls.kernel(vertex).reproduction_error() < 1e-12


def test_thin_protrusion_rejects_balls(
    top2: Dissection, expanded2: ExpandedDomain, field2: TransversalField
) -> None:
    """Balls shifted by 2hδ do not fit in a protrusion of thickness 0.1."""
    with pytest.raises(ProjectorError) as info:
        build_ball_system(top2.mesh, top2, expanded2, field2, DELTA, 2.0)
    assert "smaller delta" in str(info.value)


@pytest.mark.parametrize("kwargs", [{"delta": 0.0}, {"c": -1.0}, {"degree": 1}])
def test_ball_system_arguments(
    top2: Dissection,
    expanded2: ExpandedDomain,
    field2: TransversalField,
    kwargs: dict[str, float],
) -> None:
    with pytest.raises(ValueError):
        build_ball_system(top2.mesh, top2, expanded2, field2, **kwargs)


def test_smoothing_reproduces_affine(smoother2: Smoother) -> None:
    """S is exact on affine scalars and constant vector fields."""
    mesh = smoother2.base.mesh
    tets = np.array([0, 5, 40])
    points = mesh.centroids[tets]
    f = get_field("linear-g")
    np.testing.assert_allclose(smooth(Space.GRAD, f, points, tets, smoother2.balls), f(points))
    grad = smooth(Space.CURL, f.derivative, points, tets, smoother2.balls)
    np.testing.assert_allclose(grad, np.tile([1.0, 2.0, 0.0], (3, 1)), atol=1e-12)


def test_smoothing_rejects_nan(smoother2: Smoother) -> None:
    def broken(points: np.ndarray) -> np.ndarray:
        return np.full(len(points), np.nan)

    with pytest.raises(SmoothingError):
        smooth(Space.GRAD, broken, smoother2.base.mesh.centroids[:1], [0], smoother2.balls)


@pytest.mark.parametrize(
    ("space", "key"),
    [(Space.CURL, "rotation-c"), (Space.DIV, "radial-d"), (Space.L2, "constant-o")],
)
def test_smoothing_rejects_collapsed_balls(smoother2: Smoother, space: Space, key: str) -> None:
    """Balls sharing one centre map a tet onto a point; only scalars survive that."""
    balls = replace(smoother2.balls, centers=np.zeros_like(smoother2.balls.centers))
    points = smoother2.base.mesh.centroids[:1]
    with pytest.raises(SmoothingError, match="Singular"):
        smooth(space, get_field(key), points, [0], balls)
    values = smooth(Space.GRAD, get_field("linear-g"), points, [0], balls)
    assert np.all(np.isfinite(values))


def test_dual_weight_against_sampling() -> None:
    """Uniform samples of the ball agree with the closed-form affine moments."""
    weight = dual_weight([1.0, 0.0, 0.0], 0.5, [0.8, 0.3, -0.1])
    rng = np.random.default_rng(7)
    directions = rng.normal(size=(1_000_000, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    points = weight.center + weight.radius * np.cbrt(rng.random((1_000_000, 1))) * directions
    values = weight.volume * weight(points)
    assert values.mean() == pytest.approx(1.0, abs=1e-2)
    moments = (values[:, None] * points).mean(axis=0)
    np.testing.assert_allclose(moments, weight.vertex, atol=1e-2)


def test_smoothing_reproduces_affine_everywhere(smoother2: Smoother) -> None:
    """Affine reproduction holds at scattered points of every tet."""
    mesh = smoother2.base.mesh
    rng = np.random.default_rng(3)
    lam = rng.dirichlet(np.ones(4), size=(mesh.n_tets, 20))
    points = np.einsum("tki,tij->tkj", lam, mesh.corners).reshape(-1, 3)
    tets = np.repeat(np.arange(mesh.n_tets), 20)
    f = get_field("linear-g")
    np.testing.assert_allclose(
        smooth(Space.GRAD, f, points, tets, smoother2.balls), f(points), atol=1e-10
    )
    grad = smooth(Space.CURL, f.derivative, points, tets, smoother2.balls)
    np.testing.assert_allclose(grad, np.tile([1.0, 2.0, 0.0], (len(points), 1)), atol=1e-10)
