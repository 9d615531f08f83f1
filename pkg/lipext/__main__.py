"""
Command-line entry point: python -m lipext COMMAND [options].

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from typing import Any

import colorlog

from .config import (
    CONF_BOX,
    CONF_C,
    CONF_DEGREE,
    CONF_DELTA,
    CONF_FIELD,
    CONF_GAMMA,
    CONF_LADDER,
    CONF_LAYERS,
    CONF_LSHAPE,
    CONF_MESH,
    CONF_OUT,
    CONF_SEED,
    CONF_SPACE,
    CONF_T,
    load_config,
)
from .const import DOMAIN, EXIT_OK, EXIT_STAGE
from .coordinator import ExperimentCoordinator, StageFailed, export_complex
from .exceptions import ConfigError

_LOGGER = logging.getLogger(__name__)

OVERRIDES = {
    "mesh": CONF_MESH,
    "box": CONF_BOX,
    "lshape": CONF_LSHAPE,
    "gamma": CONF_GAMMA,
    "t": CONF_T,
    "layers": CONF_LAYERS,
    "delta": CONF_DELTA,
    "c": CONF_C,
    "space": CONF_SPACE,
    "field": CONF_FIELD,
    "ladder": CONF_LADDER,
    "degree": CONF_DEGREE,
    "out": CONF_OUT,
    "seed": CONF_SEED,
}


def cmd_field(coordinator: ExperimentCoordinator) -> None:
    """Build the transversal field and write Ω with v̂."""
    mesh = coordinator.load()
    dissection = coordinator.dissect(mesh)
    field = coordinator.field(mesh, dissection)
    coordinator.write_field(mesh, field)


def cmd_expand(coordinator: ExperimentCoordinator) -> None:
    """Dissect, build the field, pick t, protrude and validate."""
    mesh = coordinator.load()
    dissection = coordinator.dissect(mesh)
    field = coordinator.field(mesh, dissection)
    expanded = coordinator.expand(mesh, dissection, field)
    coordinator.write_meshes(expanded, field)
    coordinator.validate(expanded)


def cmd_validate(coordinator: ExperimentCoordinator) -> None:
    """Expansion checks plus hypograph fits and the cone check on Ω."""
    mesh = coordinator.load()
    dissection = coordinator.dissect(mesh)
    field = coordinator.field(mesh, dissection)
    expanded = coordinator.restore(mesh, dissection) or coordinator.expand(
        mesh, dissection, field
    )
    coordinator.validate(expanded, omega=True)


def cmd_complex(coordinator: ExperimentCoordinator) -> None:
    """Build the discrete complex and export G, C and D."""
    mesh = coordinator.load()
    dissection = coordinator.dissect(mesh)
    fe = coordinator.complex(mesh, dissection)
    export_complex(fe, coordinator.out)


def cmd_project(coordinator: ExperimentCoordinator) -> None:
    """Projectors for all four spaces with commuting and δ-sweep checks."""
    config = coordinator.config
    mesh = coordinator.load()
    dissection = coordinator.dissect(mesh)
    field = coordinator.field(mesh, dissection)
    fe = coordinator.complex(mesh, dissection)
    smoother = coordinator.smoother(
        fe, dissection, field, min(config.delta), thickness_delta=max(config.delta)
    )
    coordinator.project(fe, smoother, dissection, field)


def cmd_convergence(coordinator: ExperimentCoordinator) -> None:
    """Projection errors over the refinement ladder."""
    coordinator.convergence()


COMMANDS: dict[str, Callable[[ExperimentCoordinator], None]] = {
    "expand": cmd_expand,
    "validate": cmd_validate,
    "field": cmd_field,
    "complex": cmd_complex,
    "project": cmd_project,
    "convergence": cmd_convergence,
}


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog=DOMAIN, description="Partial domain expansion and commuting projectors"
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="stage pipeline to run")
    parser.add_argument("--config", help="YAML run configuration")

    # Mesh
    group = parser.add_argument_group("Mesh options")
    source = group.add_mutually_exclusive_group()
    source.add_argument("--mesh", help="mesh file")
    source.add_argument("--box", metavar="NX,NY,NZ", help="generated unit cube")
    source.add_argument("--lshape", type=int, metavar="N", help="generated L-shaped prism")
    group.add_argument("--gamma", metavar="EXPR", help='Γ predicate, e.g. "z==1"')

    # Expansion and projectors
    group = parser.add_argument_group("Experiment options")
    group.add_argument("--t", help='protrusion thickness or "auto"')
    group.add_argument("--layers", type=int, help="prism layers in the protrusion")
    group.add_argument("--delta", metavar="D1,D2,...", help="ball radius factors")
    group.add_argument("--c", type=float, help="Γ-ball shift factor")
    group.add_argument("--space", help="space for the δ sweep (g, c, d, o)")
    group.add_argument("--field", help="catalogued field to project")
    group.add_argument("--ladder", metavar="N1,N2,...", help="refinement ladder")
    group.add_argument("--degree", type=int, help="ball quadrature degree")
    group.add_argument("--out", help="output directory")
    group.add_argument("--seed", type=int, help="sampling seed")

    # Debugging
    group = parser.add_argument_group("Debugging options")
    group.add_argument(
        "-d",
        "--debug",
        dest="debug",
        default=False,
        action="store_true",
        help="print debugging messages",
    )
    group.add_argument(
        "--nodebug",
        dest="debug",
        action="store_false",
        help="do not print debugging messages",
    )
    group.add_argument(
        "-v",
        "--verbose",
        dest="verbose",
        default=False,
        action="store_true",
        help="print verbose messages",
    )

    return parser.parse_args(argv)


def init_logging(options: argparse.Namespace) -> None:
    """Set up logging, based on command line options."""
    logger = logging.getLogger(DOMAIN)
    logger.handlers = []
    handler = logging.StreamHandler()
    handler.setFormatter(
        colorlog.ColoredFormatter(
            fmt="%(asctime)s %(log_color)s%(levelname)-8s%(reset)s %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
    )
    logger.addHandler(handler)
    if options.debug:
        logger.setLevel("DEBUG")
    elif options.verbose:
        logger.setLevel("INFO")
    else:
        logger.setLevel("WARNING")


def overrides(options: argparse.Namespace) -> dict[str, Any]:
    """Config keys set on the command line."""
    return {key: getattr(options, name) for name, key in OVERRIDES.items()}


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    options = parse_args(argv)
    init_logging(options)

    try:
        config = load_config(options.config, overrides(options))
    except ConfigError as error:
        _LOGGER.error("%s", error)
        return EXIT_STAGE

    coordinator = ExperimentCoordinator(config)
    code = EXIT_OK
    try:
        COMMANDS[options.command](coordinator)
    except StageFailed as error:
        _LOGGER.error("%s", error)
        code = error.exit_code
    coordinator.write()
    return code


if __name__ == "__main__":
    sys.exit(main())
