"""
Coordinator running the experiment stages and collecting their reports.

SPDX-License-Identifier: MIT
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np

from .config import AUTO, DEFAULT_BOX, RunConfig, parse_gamma
from .const import EXIT_DISSECT, EXIT_LOAD, EXIT_PROJECTOR, EXIT_STAGE, Space, Stage
from .diagnostics import Report, dumps, write_report
from .exceptions import ExpansionError, GeometryError, LipextError, ProjectorError
from .expansion import (
    ExpandedDomain,
    TransportMap,
    build_collar,
    build_protrusion,
    default_thickness,
    estimate_t0,
    restore_protrusion,
    transported_dissection,
    validate_expansion,
)
from .feec import FEComplex, build_complex, triplets
from .fields import CATALOGUE, AnalyticField, aligned_catalogue, fields_for
from .lipschitz import check_uniform_cone, fit_coordinate_box, outward_direction
from .mesh import (
    Dissection,
    TetMesh,
    dissect_boundary,
    export_vtk,
    generate_box_mesh,
    generate_lshape_mesh,
    load_mesh,
    save_mesh,
    select_faces,
)
from .projectors import (
    ProjectorSet,
    Smoother,
    assemble_R,
    build_projectors,
    fit_slope,
    projection_check,
    verify_commuting,
)
from .smoothing import build_ball_system, projector_thickness
from .transversal import (
    TransversalField,
    build_box_cover,
    build_field,
    check_constant_near_exceptional,
    field_lipschitz_constant,
)

_LOGGER = logging.getLogger(__name__)

EXIT_CODES = {
    Stage.LOAD: EXIT_LOAD,
    Stage.DISSECT: EXIT_DISSECT,
    Stage.BALLS: EXIT_PROJECTOR,
    Stage.PROJECT: EXIT_PROJECTOR,
}

OMEGA_THETA = math.pi / 8
EXPANDED_THETA = math.pi / 16
HYPOGRAPH_POINTS = 4
VALIDATION_CHECKS = ("disjoint", "shared_boundary", "cones")
# Box half-width over height; keeps boxes at cube corners inside the bounding region.
HYPOGRAPH_WIDTH = 0.3


class StageFailed(LipextError):
    """A pipeline stage raised; carries the stage and the cause."""

    def __init__(self, stage: Stage, error: BaseException) -> None:
        """Init."""
        super().__init__(f"Stage {stage} failed: {error}")
        self.stage = stage
        self.error = error

    @property
    def exit_code(self) -> int:
        """Process exit code for this stage."""
        return EXIT_CODES.get(self.stage, EXIT_STAGE)


class ExperimentCoordinator:
    """Run stages for one configuration and keep their artifacts and report."""

    def __init__(self, config: RunConfig) -> None:
        """Initialize."""
        self.config = config
        self.report = Report(seed=config.seed, config=config.as_dict())
        self.out = Path(config.out)
        self.scope: str | None = None
        self._cached: ExpandedDomain | None = None

    @contextmanager
    def stage(self, stage: Stage) -> Iterator[None]:
        """Wrap domain errors of one stage in StageFailed."""
        _LOGGER.info("Stage %s", stage)
        try:
            yield
        except (LipextError, ValueError, OSError) as error:
            self.report.failed_stage = str(stage)
            raise StageFailed(stage, error) from error

    def write(self, name: str = "report.json") -> Path:
        """Write the report into the output directory."""
        return write_report(self.report, self.out / name)

    def _add(self, stage: Stage, blob: dict[str, Any]) -> None:
        self.report.add(str(stage) if self.scope is None else f"{stage}/{self.scope}", blob)

    def _record(self, key: str, value: Any) -> None:
        if self.scope is None:
            self.report.record(key, value)

    # Shared stages

    def load(self, source: RunConfig | None = None) -> TetMesh:
        """Read or generate the mesh."""
        config = source or self.config
        with self.stage(Stage.LOAD):
            if config.mesh is not None:
                mesh = load_mesh(config.mesh)
            elif config.lshape is not None:
                mesh = generate_lshape_mesh(config.lshape)
            else:
                mesh = generate_box_mesh(*(config.box or DEFAULT_BOX))
        self._add(
            Stage.LOAD,
            {
                "source": config.source,
                "n_vertices": mesh.n_vertices,
                "n_tets": mesh.n_tets,
                "volume": mesh.volume,
                "h": mesh.h,
            },
        )
        return mesh

    def dissect(self, mesh: TetMesh) -> Dissection:
        """Select Γ with the configured predicate and split the boundary."""
        with self.stage(Stage.DISSECT):
            faces = select_faces(mesh, parse_gamma(self.config.gamma))
            dissection = dissect_boundary(mesh, faces)
        self._add(
            Stage.DISSECT,
            {
                "gamma_faces": len(dissection.gamma_faces),
                "gamma2_faces": len(dissection.gamma2_faces),
                "gamma_area": dissection.gamma_area,
                "pi_loops": [len(chain) for chain in dissection.pi_chains],
                "exceptional_points": list(dissection.exceptional_points),
            },
        )
        return dissection

    def field(self, mesh: TetMesh, dissection: Dissection) -> TransversalField:
        """Build and certify the transversal field."""
        with self.stage(Stage.FIELD):
            field = build_field(build_box_cover(mesh, dissection))
            blob: dict[str, Any] = field.as_dict()
            blob["lipschitz"] = field_lipschitz_constant(field, mesh)
            blob["constant_near_exceptional"] = [
                {
                    "vertex": patch.vertex,
                    **vars(
                        check_constant_near_exceptional(field, patch.vertex, 0.5 * patch.width)
                    ),
                }
                for patch in field.cover.dedicated
            ]
        self._add(Stage.FIELD, blob)
        self._record("kappa", field.kappa)
        return field

    def expand(
        self, mesh: TetMesh, dissection: Dissection, field: TransversalField
    ) -> ExpandedDomain:
        """Pick the thickness and build the protrusion."""
        config = self.config
        with self.stage(Stage.EXPAND):
            tmap = TransportMap(field)
            blob: dict[str, Any] = {}
            if config.t == AUTO:
                estimate = estimate_t0(
                    tmap, dissection, config.s_max, config.pair_samples, seed=config.seed
                )
                t = default_thickness(estimate.t0, dissection, field.kappa or 1.0)
                blob["t0"] = estimate.as_dict()
                t0: float | None = estimate.t0
            else:
                t = float(config.t)
                t0 = None
            expanded = build_protrusion(mesh, dissection, tmap, t, config.layers)
            loops = transported_dissection(dissection, tmap, t)
            blob.update(
                {
                    "t": t,
                    "layers": config.layers,
                    "omega_e_tets": expanded.omega_e.n_tets,
                    "omega_tilde_tets": expanded.omega_tilde.n_tets,
                    "pi_t_loops": [len(loop) for loop in loops.loops],
                }
            )
        self._add(Stage.EXPAND, blob)
        self._record("t0_estimate", t0)
        self._record("t_used", t)
        return expanded

    def validate(self, expanded: ExpandedDomain, *, omega: bool = False) -> dict[str, Any]:
        """Disjointness, shared boundary, bookkeeping and cone checks."""
        config = self.config
        with self.stage(Stage.VALIDATE):
            blob = validate_expansion(
                expanded,
                theta=config.theta or EXPANDED_THETA,
                samples_per_point=config.cone_samples,
                cones=config.checks["cones"],
                disjoint=config.checks["disjoint"],
            )
            if omega:
                mesh = expanded.original
                blob["omega_cone"] = check_uniform_cone(
                    mesh,
                    OMEGA_THETA,
                    0.5 * expanded.t,
                    samples_per_point=config.cone_samples,
                    seed=config.seed,
                ).as_dict()
                blob["hypograph"] = hypograph_fits(expanded.dissection)
                blob["passed"] = blob["passed"] and blob["omega_cone"]["passed"]
        self._add(Stage.VALIDATE, blob)
        self._record(
            "checks",
            {name: blob[name]["passed"] for name in VALIDATION_CHECKS if name in blob},
        )
        with self.stage(Stage.VALIDATE):
            if not blob["passed"]:
                failed = [
                    name
                    for name, item in blob.items()
                    if isinstance(item, dict) and not item.get("passed", True)
                ]
                raise ExpansionError(f"Expansion checks failed: {', '.join(failed)}")
        return blob

    def write_field(self, mesh: TetMesh, field: TransversalField) -> Path:
        """Write Ω with v̂ at the boundary vertices."""
        self.out.mkdir(parents=True, exist_ok=True)
        directions = np.zeros((mesh.n_vertices, 3))
        boundary = mesh.boundary_vertices
        directions[boundary] = field.direction(mesh.vertices[boundary])
        path = self.out / "omega.vtk"
        export_vtk(mesh, path, point_data={"v_hat": directions})
        return path

    def write_meshes(self, expanded: ExpandedDomain, field: TransversalField) -> None:
        """Write Ω, Ω^e and Ω̃ as VTK plus the native format."""
        self.write_field(expanded.original, field)
        export_vtk(expanded.omega_e, self.out / "omega_e.vtk")
        export_vtk(expanded.omega_tilde, self.out / "omega_tilde.vtk")
        save_mesh(expanded.omega_e, self.out / "omega_e.mesh")
        save_mesh(expanded.omega_tilde, self.out / "omega_tilde.mesh")

    def complex(self, mesh: TetMesh, dissection: Dissection) -> FEComplex:
        """Build the discrete complex and its Γ masks."""
        with self.stage(Stage.COMPLEX):
            fe = build_complex(mesh, dissection)
            blob = fe.as_dict()
            if self.config.checks["exactness"]:
                blob["exactness"] = fe.exactness()
            blob["bc_mask"] = {
                str(space): len(fe.bc_mask(space).indices) for space in Space
            }
        self._add(Stage.COMPLEX, blob)
        return fe

    def cached_expansion(self, mesh: TetMesh, dissection: Dissection) -> ExpandedDomain | None:
        """The protrusion saved by an earlier expand run into the same output directory."""
        if self._cached is not None:
            return self._cached
        path = self.out / "omega_tilde.mesh"
        if not path.exists():
            return None
        try:
            expanded = restore_protrusion(mesh, dissection, load_mesh(path))
        except (LipextError, ValueError) as error:
            _LOGGER.warning("Ignoring %s: %s", path, error)
            return None
        if self.config.t != AUTO and not math.isclose(expanded.t, float(self.config.t)):
            _LOGGER.warning("Ignoring %s: thickness %.6g is not t", path, expanded.t)
            return None
        self._cached = expanded
        return expanded

    def restore(self, mesh: TetMesh, dissection: Dissection) -> ExpandedDomain | None:
        """Reuse the saved protrusion as this run's expand stage."""
        expanded = self.cached_expansion(mesh, dissection)
        if expanded is None:
            return None
        self._add(
            Stage.EXPAND,
            {
                "cached": str(self.out / "omega_tilde.mesh"),
                "t": expanded.t,
                "layers": expanded.layer_count,
                "omega_e_tets": expanded.omega_e.n_tets,
                "omega_tilde_tets": expanded.omega_tilde.n_tets,
            },
        )
        self._record("t_used", expanded.t)
        return expanded

    def _protrusion(
        self, fe: FEComplex, dissection: Dissection, field: TransversalField, t: float
    ) -> ExpandedDomain:
        cached = self.cached_expansion(fe.mesh, dissection) if self.scope is None else None
        if cached is not None and cached.t >= t:
            return cached
        return build_protrusion(fe.mesh, dissection, TransportMap(field), t)

    def _smoother(
        self,
        fe: FEComplex,
        dissection: Dissection,
        field: TransversalField,
        delta: float,
        thickness_delta: float,
    ) -> Smoother:
        config = self.config
        mesh = fe.mesh
        if config.t == AUTO:
            t = projector_thickness(mesh, thickness_delta, config.c, field.kappa or 1.0)
        else:
            t = float(config.t)
        expanded = self._protrusion(fe, dissection, field, t)
        balls = build_ball_system(
            mesh,
            dissection,
            expanded,
            field,
            delta,
            config.c,
            degree=config.degree,
            seed=config.seed,
        )
        return Smoother(fe, balls, build_collar(mesh, field, expanded.t))

    def smoother(
        self,
        fe: FEComplex,
        dissection: Dissection,
        field: TransversalField,
        delta: float,
        *,
        thickness_delta: float | None = None,
    ) -> Smoother:
        """Protrusion, collar and balls sized for the projectors."""
        with self.stage(Stage.BALLS):
            smoother = self._smoother(fe, dissection, field, delta, thickness_delta or delta)
        self._add(Stage.BALLS, {"t": smoother.collar.t, **smoother.balls.as_dict()})
        return smoother

    def project(
        self, fe: FEComplex, smoother: Smoother, dissection: Dissection, field: TransversalField
    ) -> dict[Space, ProjectorSet]:
        """Projectors for every space, commuting checks and the δ sweep."""
        config = self.config
        with self.stage(Stage.PROJECT):
            projectors = build_projectors(smoother)
            blob: dict[str, Any] = {
                str(space): {**projector.as_dict(), **projection_check(projector, seed=config.seed)}
                for space, projector in projectors.items()
            }
            catalogue = field_catalogue(dissection)
            if config.checks["commuting"]:
                blob["commuting"] = verify_commuting(projectors, fe, list(catalogue.values()))
            if config.field not in catalogue:
                raise GeometryError(f"Field {config.field} vanishes near Γ only for a planar Γ")
            chosen = catalogue[config.field]
            dofs = projectors[chosen.space].project(chosen, chosen.breaks)
            blob["field"] = {
                "key": chosen.key,
                "space": str(chosen.space),
                "l2_error": fe.l2_error(chosen.space, dofs, chosen, chosen.breaks),
            }
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "dofs.json").write_text(
                dumps({"space": str(chosen.space), "values": dofs}), encoding="utf-8"
            )
        self._add(Stage.PROJECT, blob)
        self._record("norm_estimate", {str(s): p.norm_estimate for s, p in projectors.items()})
        self._record("condition", {str(s): p.condition for s, p in projectors.items()})
        if "commuting" in blob:
            self._record("commuting_residuals", blob["commuting"]["max"])
            self._record("bc_max", blob["commuting"]["bc_max"])
        if config.checks["sweep"] and len(config.delta) >= 2:
            with self.stage(Stage.PROJECT):
                blob["sweep"] = self.sweep(fe, dissection, field)
            self._add(Stage.PROJECT, blob)
        return projectors

    def sweep(
        self, fe: FEComplex, dissection: Dissection, field: TransversalField
    ) -> dict[str, Any]:
        """
        ‖I - R‖ estimates over the configured δ values and their log-log slope.

        Every δ gets its own balls on a protrusion sized for the largest δ; R is
        only assembled, so δ values too large for a projector still report.
        """
        deltas = sorted(self.config.delta, reverse=True)
        estimates: list[float | None] = []
        errors: dict[str, str] = {}
        for delta in deltas:
            try:
                smoother = self._smoother(fe, dissection, field, delta, deltas[0])
                estimates.append(assemble_R(self.config.space, smoother).norm_estimate)
            except ProjectorError as error:
                _LOGGER.warning("δ=%g skipped in the sweep: %s", delta, error)
                errors[str(delta)] = str(error)
                estimates.append(None)
        usable = [(d, e) for d, e in zip(deltas, estimates, strict=True) if e is not None]
        return {
            "space": str(self.config.space),
            "delta": deltas,
            "norm_estimate": estimates,
            "errors": errors,
            "slope": fit_slope(*zip(*usable, strict=True)) if len(usable) >= 2 else None,
        }

    def convergence(self) -> dict[str, Any]:
        """Projection errors and best-approximation errors over the mesh ladder."""
        config = self.config
        delta = min(config.delta)
        rows: list[dict[str, Any]] = []
        for n in config.ladder:
            self.scope = f"n={n}"
            try:
                level = dataclasses.replace(config, mesh=None, lshape=None, box=(n, n, n))
                rows += self._level(level, delta)
            finally:
                self.scope = None
        rates = {}
        for key in sorted({row["field"] for row in rows}):
            series = [row for row in rows if row["field"] == key]
            errors = [row["error"] for row in series]
            if min(errors) > 1e-12 and len(series) >= 2:
                rates[key] = fit_slope([row["h"] for row in series], errors)
        blob = {"levels": rows, "rates": rates}
        self._add(Stage.CONVERGENCE, blob)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "rates.txt").write_text(format_rates(rows, rates), encoding="utf-8")
        return blob

    def _level(self, level: RunConfig, delta: float) -> list[dict[str, Any]]:
        n = level.box[0] if level.box else 0
        mesh = self.load(level)
        dissection = self.dissect(mesh)
        field = self.field(mesh, dissection)
        fe = build_complex(mesh, dissection)
        smoother = self.smoother(fe, dissection, field, delta)
        rows: list[dict[str, Any]] = []
        with self.stage(Stage.CONVERGENCE):
            catalogue = aligned_catalogue(dissection)
            spaces = (Space.GRAD, Space.CURL, Space.DIV)
            projectors = build_projectors(smoother, spaces)
            for space in spaces:
                for item in fields_for(space, bump=True, catalogue=catalogue):
                    dofs = projectors[space].project(item, item.breaks)
                    _, best = fe.l2_best_approximation(space, item, item.breaks)
                    rows.append(
                        {
                            "n": n,
                            "h": mesh.h,
                            "space": str(space),
                            "field": item.key,
                            "error": fe.l2_error(space, dofs, item, item.breaks),
                            "best": best,
                        }
                    )
                for item in fields_for(space, bump=False, catalogue=catalogue):
                    exact = fe.canonical_interpolate(space, item)
                    dofs = projectors[space].project_fe(exact.values)
                    rows.append(
                        {
                            "n": n,
                            "h": mesh.h,
                            "space": str(space),
                            "field": item.key,
                            "error": fe.l2_error(space, dofs, item),
                            "best": 0.0,
                        }
                    )
        return rows


def field_catalogue(dissection: Dissection) -> dict[str, AnalyticField]:
    """Catalogue with bumps vanishing near Γ; bump fields are dropped for a curved Γ."""
    try:
        return aligned_catalogue(dissection)
    except GeometryError as error:
        _LOGGER.warning("Skipping the Γ-mask checks: %s", error)
        return {key: item for key, item in CATALOGUE.items() if item.level is None}


def hypograph_fits(
    dissection: Dissection, *, limit: int = HYPOGRAPH_POINTS
) -> list[dict[str, Any]]:
    """Coordinate-box fits at the first Π vertices, sized by the shortest Γ edge."""
    mesh = dissection.mesh
    vertices = mesh.vertices
    size = 0.25 * min(
        float(np.linalg.norm(vertices[a] - vertices[b])) for a, b in dissection.gamma_edges
    )
    fits: list[dict[str, Any]] = []
    for vertex in dissection.pi_vertices[:limit]:
        p = vertices[vertex]
        try:
            direction = outward_direction(mesh, p, size)
            fit = fit_coordinate_box(mesh, p, direction, HYPOGRAPH_WIDTH * size, size)
        except GeometryError as error:
            fits.append({"vertex": int(vertex), "error": str(error)})
            continue
        fits.append({"vertex": int(vertex), **fit.as_dict()})
    return fits


def format_rates(rows: list[dict[str, Any]], rates: dict[str, float]) -> str:
    """Plain-text convergence table."""
    lines = [f"{'field':<12}{'n':>4}{'h':>12}{'error':>14}{'best':>14}"]
    lines += [
        f"{row['field']:<12}{row['n']:>4}{row['h']:>12.4e}{row['error']:>14.6e}{row['best']:>14.6e}"
        for row in rows
    ]
    lines.append("")
    lines += [f"rate {key:<12}{rate:>8.3f}" for key, rate in sorted(rates.items())]
    return "\n".join(lines) + "\n"


def export_complex(fe: FEComplex, out: Path) -> None:
    """Write G, C and D as coordinate text files."""
    out.mkdir(parents=True, exist_ok=True)
    for name, matrix in (("G", fe.grad), ("C", fe.curl), ("D", fe.div)):
        (out / f"{name}.txt").write_text(triplets(matrix), encoding="utf-8")
