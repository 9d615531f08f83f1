"""
Constants for the lipext partial-expansion toolkit.

SPDX-License-Identifier: MIT
"""

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        """Backport of enum.StrEnum."""

        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()

from typing import Final

DOMAIN: Final = "lipext"

# Geometry tolerances
DEGENERATE_VOLUME_FACTOR: Final = 1e-12
BARYCENTRIC_TOLERANCE: Final = 1e-10
SURFACE_DISTANCE_TOLERANCE: Final = 1e-9
EXCEPTIONAL_ANGLE: Final = 1e-6
CLUSTER_ANGLE: Final = 1e-6
CLIP_TOLERANCE: Final = 1e-12

# Lipschitz analysis
HYPOGRAPH_GRID: Final = 33
CONE_SEED: Final = 0x5EED
HALTON_SEED: Final = 0x5EED
CONE_SAMPLES: Final = 200
MAX_CERTIFICATES: Final = 100

# Transversal field
FALLOFF_FRACTION: Final = 0.25
FACE_SAMPLE_ORDER: Final = 4

# Expansion
SEPARATION_RATIO_MIN: Final = 1e-3
DEFAULT_S_MAX: Final = 1.0
BISECTION_STEPS: Final = 16
REFINE_CANDIDATES: Final = 8
SEPARATION_PAIRS: Final = 10000
NEIGHBOR_PAIRS: Final = 8
AUTO_T_EDGE_FRACTION: Final = 0.25

# FE complex
DENSE_RANK_LIMIT: Final = 5000

# Projectors
DEFAULT_DELTA: Final = 0.1
DEFAULT_SHIFT: Final = 2.0
BALL_DEGREE: Final = 3
CONTAINMENT_SAMPLES: Final = 200
CONDITION_LIMIT: Final = 1e12
SINGULAR_JACOBIAN: Final = 1e-14
BALL_MARGIN: Final = 1.1
# Weights of the inward star direction in the candidate ball shifts.
SHIFT_BLENDS: Final = (0.0, 0.5, 1.0, 1.5, 2.0)

# CLI exit codes
EXIT_OK: Final = 0
EXIT_LOAD: Final = 1
EXIT_DISSECT: Final = 2
EXIT_PROJECTOR: Final = 3
EXIT_STAGE: Final = 4


class Space(StrEnum):
    """Spaces of the lowest-order discrete de Rham complex."""

    GRAD = "g"
    CURL = "c"
    DIV = "d"
    L2 = "o"

    @property
    def degree(self) -> int:
        """Form degree of the space."""
        return "gcdo".index(self.value)

    @property
    def next(self) -> "Space":
        """Space reached by the exterior derivative."""
        if self is Space.L2:
            raise ValueError("The L2 space has no successor")
        return Space("gcdo"[self.degree + 1])


class Stage(StrEnum):
    """Pipeline stages run by the coordinator."""

    LOAD = "load"
    DISSECT = "dissect"
    FIELD = "field"
    EXPAND = "expand"
    VALIDATE = "validate"
    COMPLEX = "complex"
    BALLS = "balls"
    PROJECT = "project"
    CONVERGENCE = "convergence"
