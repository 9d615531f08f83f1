"""
Errors raised by lipext.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

from typing import Any


class LipextError(Exception):
    """Base class for all lipext errors."""


class MeshFormatError(LipextError):
    """Error to indicate a malformed mesh file."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        """Init with the offending line number."""
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MeshTopologyError(LipextError):
    """Error to indicate a non-manifold or inconsistent mesh."""


class DegenerateTetError(LipextError):
    """Error to indicate a tetrahedron with (near) zero volume."""

    def __init__(self, message: str, *, tet: int) -> None:
        """Init with the offending tet index."""
        super().__init__(message)
        self.tet = tet


class DissectionError(LipextError):
    """Error to indicate an invalid boundary dissection."""


class GeometryError(LipextError):
    """Error to indicate an invalid geometric query."""


class TransversalityError(LipextError):
    """Error to indicate a vector field that is not transversal."""


class ExpansionError(LipextError):
    """Error to indicate a failed protrusion build or validation."""

    def __init__(self, message: str, *, prism: Any = None) -> None:
        """Init with the offending prism, if any."""
        super().__init__(message)
        self.prism = prism


class ExpansionSearchError(ExpansionError):
    """Error to indicate that no safe transport thickness was found."""


class ComplexError(LipextError):
    """Error to indicate an inconsistent discrete complex."""


class QuadratureError(LipextError):
    """Error to indicate an unsupported rule or a failed evaluation."""


class SmoothingError(LipextError):
    """Error to indicate a failed smoothing evaluation."""

    def __init__(self, message: str, *, node: Any = None) -> None:
        """Init with the offending cubature node."""
        super().__init__(message)
        self.node = node


class ProjectorError(LipextError):
    """Error to indicate a projector that cannot be built."""

    def __init__(self, message: str, *, advice: str | None = None) -> None:
        """Init with advice for the caller."""
        super().__init__(message if advice is None else f"{message} ({advice})")
        self.advice = advice


class ConfigError(LipextError):
    """Error to indicate an invalid run configuration."""
