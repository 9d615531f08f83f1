"""
Quadrature on simplices and cubature on balls.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from itertools import product

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import QuadratureError
from .geometry import (
    FloatArray,
    Plane,
    split_segments_by_plane,
    split_tets_by_plane,
    split_triangles_by_plane,
)

_LOGGER = logging.getLogger(__name__)

Evaluator = Callable[[FloatArray], FloatArray]


@dataclass(frozen=True)
class SimplexRule:
    """Barycentric points and weights summing to one."""

    points: FloatArray
    weights: FloatArray
    degree: int


def _gauss_line(n: int) -> SimplexRule:
    nodes, weights = leggauss(n)
    s = 0.5 * (nodes + 1.0)
    return SimplexRule(np.column_stack([1.0 - s, s]), 0.5 * weights, 2 * n - 1)


def _orbit_3(a: float) -> list[tuple[float, float, float]]:
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _dunavant_6() -> SimplexRule:
    a1, w1 = 0.445948490915965, 0.223381589678011
    a2, w2 = 0.091576213509771, 0.109951743655322
    points = _orbit_3(a1) + _orbit_3(a2)
    weights = [w1] * 3 + [w2] * 3
    return SimplexRule(np.array(points), np.array(weights), 4)


def _keast_11() -> SimplexRule:
    a, b = 0.399403576166799, 0.100596423833201
    c = 1.0 / 14.0
    points = [(0.25, 0.25, 0.25, 0.25)]
    points += [tuple(1.0 - 3.0 * c if i == j else c for i in range(4)) for j in range(4)]
    points += [
        tuple(a if k in pair else b for k in range(4))
        for pair in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    ]
    weights = [-0.0789333333333333] + [0.0457333333333333] * 4 + [0.1493333333333333] * 6
    weights_arr = np.array(weights) * 6.0
    return SimplexRule(np.array(points, dtype=float), weights_arr / weights_arr.sum(), 4)


LINE_RULE = _gauss_line(4)
TRIANGLE_RULE = _dunavant_6()
TET_RULE = _keast_11()
POINT_RULE = SimplexRule(np.ones((1, 1)), np.ones(1), 99)

RULES: dict[int, SimplexRule] = {0: POINT_RULE, 1: LINE_RULE, 2: TRIANGLE_RULE, 3: TET_RULE}


def simplex_measure(corners: FloatArray) -> FloatArray:
    """
    Oriented measure vectors of simplices (n, k+1, 3).

    k=1: edge vector; k=2: vector area; k=3: signed volume.
    """
    k = corners.shape[1] - 1
    if k == 0:
        return np.ones(len(corners))
    edges = corners[:, 1:] - corners[:, :1]
    if k == 1:
        return edges[:, 0]
    if k == 2:
        return 0.5 * np.cross(edges[:, 0], edges[:, 1])
    return np.linalg.det(edges) / 6.0


def _integrate_pieces(f: Evaluator, corners: FloatArray, signs: FloatArray | None) -> FloatArray:
    k = corners.shape[1] - 1
    rule = RULES[k]
    nodes = np.einsum("qi,nij->nqj", rule.points, corners)
    values = np.asarray(f(nodes.reshape(-1, 3)), dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("Evaluator returned non-finite values at quadrature nodes")
    values = values.reshape(len(corners), len(rule.weights), *values.shape[1:])
    mean = np.einsum("q,nq...->n...", rule.weights, values)
    measure = simplex_measure(corners)
    if k == 0:
        return mean
    if k == 3:
        volume = np.abs(measure) if signs is not None else measure
        result = mean * volume
        return result * signs if signs is not None else result
    return np.sum(mean * measure, axis=1)


def integrate_simplices(
    f: Evaluator, corners: FloatArray, breaks: Sequence[Plane] = ()
) -> FloatArray:
    """
    Oriented integrals of f over simplices (n, k+1, 3).

    Points take values, segments tangential line integrals, triangles normal
    fluxes and tets signed volume integrals. Simplices crossing a break plane
    are split so piecewise polynomial fields integrate exactly.
    """
    k = corners.shape[1] - 1
    if k not in RULES:
        raise QuadratureError(f"Unsupported simplex dimension {k}")
    if len(corners) == 0:
        return np.zeros(0)
    if k == 0 or not breaks:
        return _integrate_pieces(f, corners, None)

    pieces = corners
    parents = np.arange(len(corners))
    signs = None
    for plane in breaks:
        if k == 1:
            pieces, index = split_segments_by_plane(pieces, plane)
        elif k == 2:
            pieces, index = split_triangles_by_plane(pieces, plane)
        else:
            pieces, index, piece_signs = split_tets_by_plane(pieces, plane)
            signs = piece_signs if signs is None else signs[index] * piece_signs
        parents = parents[index]
    partial = _integrate_pieces(f, pieces, signs)
    total = np.zeros(len(corners))
    np.add.at(total, parents, partial)
    return total


@dataclass(frozen=True)
class BallRule:
    """Cubature nodes and weights on one ball."""

    nodes: FloatArray
    weights: FloatArray
    degree: int


def _unit_ball_rule(degree: int) -> tuple[FloatArray, FloatArray]:
    volume = 4.0 / 3.0 * math.pi
    if degree <= 1:
        return np.zeros((1, 3)), np.array([volume])
    if degree == 2:
        radius = math.sqrt(3.0 / 5.0)
        nodes = np.array([(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]) / math.sqrt(3.0)
        return radius * nodes, np.full(4, volume / 4.0)
    if degree == 3:
        radius = math.sqrt(3.0 / 5.0)
        nodes = np.vstack([np.eye(3), -np.eye(3)])
        return radius * nodes, np.full(6, volume / 6.0)
    raise QuadratureError(f"Ball cubature of degree {degree} is not supported")


def _ball_moment(exponents: tuple[int, int, int], radius: float) -> float:
    """Exact integral of y^alpha over the centred ball."""
    if any(e % 2 for e in exponents):
        return 0.0
    total = sum(exponents)
    halves = [(e + 1) / 2.0 for e in exponents]
    gammas = math.prod(math.gamma(h) for h in halves)
    return 2.0 * gammas / math.gamma(sum(halves)) * radius ** (total + 3) / (total + 3)


def ball_cubature(center: Sequence[float], radius: float, degree: int) -> BallRule:
    """A cubature rule on B(center, radius) exact up to the given degree."""
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    unit_nodes, unit_weights = _unit_ball_rule(degree)
    nodes = np.asarray(center, dtype=float) + radius * unit_nodes
    weights = unit_weights * radius**3

    offsets = nodes - np.asarray(center, dtype=float)
    for exponents in product(range(degree + 1), repeat=3):
        if sum(exponents) > degree:
            continue
        approx = float(np.sum(weights * np.prod(offsets**np.array(exponents), axis=1)))
        exact = _ball_moment(exponents, radius)
        if abs(approx - exact) > 1e-12 * max(1.0, radius ** (sum(exponents) + 3)):
            raise QuadratureError(f"Ball rule fails the moment {exponents}: {approx} vs {exact}")
    return BallRule(nodes=nodes, weights=weights, degree=degree)
