"""
Orchestration d'un calcul complet : grille, densités, solveur, déplacement du
maillage, diagnostics et exports. Le manifeste est écrit même en cas d'échec.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from django.conf import settings
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from geometry.grid import Grid, MapField, compute_h, gen_cube_sphere
from geometry.gridfile import read_grid, write_mesh, write_obj
from geometry.stencil import build_stencil

from .costs import CostModel
from .density import DensityField, builtin_density
from .exceptions import MaxItersExceeded, TangledMesh
from .exports import meridian_profile, write_map, write_profile, write_report, write_residuals
from .mesh_pipeline import apply_map, pushforward_density, relative_l1, tangling_report
from .oit_solver import solve_oit
from .operators import OperatorParams
from .ot_solver import Normalization, SolverConfig, extract_map, solve_ot
from .raster import RasterOptions, from_raster, read_pgm
from .serializers import (
    APPLY_FORWARD,
    APPLY_TRANSPORT,
    METHOD_OT,
    parse_density_spec,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass
class RunSummary:
    output: Path
    status: str = "running"
    grid_size: int = 0
    iterations: int = 0
    inverted_count: int | None = None
    inverted_fraction: float | None = None
    pushforward_l1: float | None = None
    theta: float | None = None
    resolved: dict[str, Any] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)


def output_dir(output: str) -> Path:
    """Chemin relatif → sous SPHEREMESH_OUTPUT_ROOT."""
    path = Path(output)
    if not path.is_absolute():
        path = Path(settings.SPHEREMESH_OUTPUT_ROOT) / path
    return path


def max_displacement(mapf: MapField) -> float:
    return float(np.max(mapf.displacement()))


def render_manifest(payload: dict[str, Any]) -> bytes:
    return JSONRenderer().render(payload, renderer_context={"indent": 2})


def write_manifest(path: Path, payload: dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_manifest(payload))
    return path


def read_manifest(path: Path | str) -> dict[str, Any]:
    """Relit un manifeste ; retourne la configuration enregistrée."""
    data = JSONParser().parse(io.BytesIO(Path(path).read_bytes()))
    return dict(data["config"])


def load_grid(config: dict[str, Any]) -> Grid:
    if config.get("cube") is not None:
        return gen_cube_sphere(int(config["cube"]))
    return read_grid(config["grid"])


def load_density(spec: str, config: dict[str, Any], g: Grid) -> DensityField:
    kind, name = parse_density_spec(spec)
    if kind == "raster":
        opts = RasterOptions(
            invert=config["invert"], floor=config["floor"], lo=config["lo"], hi=config["hi"]
        )
        return from_raster(read_pgm(name), opts, g)
    return builtin_density(name, g, config["floor"])


class Run:
    """Un calcul `solve` ; `execute()` lève les erreurs de la bibliothèque."""

    def __init__(self, config: dict[str, Any]) -> None:
        self.config = config
        self.output = output_dir(config["output"])
        self.summary = RunSummary(output=self.output)

    def _file(self, name: str) -> Path:
        path = self.output / name
        self.summary.files.append(name)
        return path

    def manifest(self, error: Exception | None = None) -> dict[str, Any]:
        s = self.summary
        return {
            "version": MANIFEST_VERSION,
            "status": s.status,
            "error": None if error is None else {"type": type(error).__name__, "message": str(error)},
            "config": self.config,
            "resolved": s.resolved,
            "results": {
                "grid_size": s.grid_size,
                "iterations": s.iterations,
                "theta": s.theta,
                "inverted_count": s.inverted_count,
                "inverted_fraction": s.inverted_fraction,
                "pushforward_l1": s.pushforward_l1,
            },
            "files": s.files,
        }

    def execute(self) -> RunSummary:
        error: Exception | None = None
        started = time.perf_counter()
        try:
            self._execute()
            self.summary.status = "ok"
        except Exception as e:
            error = e
            self.summary.status = "failed"
            raise
        finally:
            self.summary.resolved["elapsed_s"] = round(time.perf_counter() - started, 3)
            path = write_manifest(self.output / MANIFEST_NAME, self.manifest(error))
            logger.info("Manifeste écrit : %s (%s)", path, self.summary.status)
        return self.summary

    def _solve(self, g: Grid, rho0: DensityField, rho1: DensityField) -> dict[str, MapField]:
        cfg, s = self.config, self.summary
        st = build_stencil(g)
        params = OperatorParams.defaults(g, st, eps_g=cfg["eps_g"], R=cfg["R"])
        s.resolved.update(eps_g=params.eps_g, eps_h=params.eps_h, R=params.R)

        if cfg["method"] == METHOD_OT:
            cost = CostModel.from_name(cfg["cost"])
            solver_cfg = SolverConfig(
                dt=cfg["dt"],
                tol=cfg["tol"],
                max_iters=cfg["max_iters"],
                normalization=Normalization(cfg["normalization"]),
            )
            try:
                result = solve_ot(g, rho0, rho1, cost, solver_cfg, params, st)
            except MaxItersExceeded as e:
                s.iterations = len(e.history)
                write_residuals(self._file("residuals.csv"), e.history)
                raise
            s.iterations = result.iterations
            s.resolved.update(dt=result.dt, compatibility_defect=result.defect)
            write_residuals(self._file("residuals.csv"), result.history)
            return {"forward": extract_map(g, st, result.u, cost)}

        oit = solve_oit(g, rho0, rho1, steps=cfg["steps"], sigma=cfg["sigma"], params=params, stencil=st)
        s.iterations = oit.steps
        s.theta = oit.theta
        s.resolved.update(
            dt=oit.dt,
            t_end=oit.t_end,
            max_mass_defect=oit.max_mass_defect,
            composition_error=oit.composition_error,
            poisson_fallbacks=oit.fallback_steps,
        )
        write_residuals(self._file("composition.csv"), oit.composition)
        return {"forward": oit.forward, "inverse": oit.inverse}

    def _chosen(self, maps: dict[str, MapField]) -> MapField:
        apply = self.config["apply"]
        if apply == APPLY_TRANSPORT:
            return maps["forward"] if self.config["method"] == METHOD_OT else maps["inverse"]
        if apply == APPLY_FORWARD:
            return maps["forward"]
        return maps["inverse"]

    def _execute(self) -> None:
        cfg, s = self.config, self.summary
        self.output.mkdir(parents=True, exist_ok=True)
        g = load_grid(cfg)
        s.grid_size = g.size
        s.resolved["h"] = g.h
        rho0 = load_density(cfg["source"], cfg, g)
        rho1 = load_density(cfg["target"], cfg, g)

        maps = self._solve(g, rho0, rho1)
        for name, mapf in maps.items():
            write_map(self._file(f"{name}_map.txt"), mapf)

        chosen = self._chosen(maps)
        s.resolved["max_displacement"] = max_displacement(chosen)
        moved = apply_map(g, chosen)
        report = tangling_report(g, moved)
        s.inverted_count = report.inverted_count
        s.inverted_fraction = report.inverted_fraction
        write_mesh(self._file("moved.grid"), moved.points, moved.triangles, compute_h(moved.points, moved.triangles))
        write_obj(self._file("moved.obj"), moved.points, moved.triangles)

        push = None
        if report.untangled:
            push = pushforward_density(g, moved, rho0, report)
            s.pushforward_l1 = relative_l1(push, rho1)
        write_profile(self._file("profile.csv"), meridian_profile(g, rho0, rho1, push))
        write_report(
            self._file("report.txt"),
            self._file("report.csv"),
            report,
            {"pushforward_l1": "nan" if s.pushforward_l1 is None else f"{s.pushforward_l1:.10g}"},
        )
        logger.info(
            "Calcul terminé : %d triangles retournés, erreur L1 %s",
            report.inverted_count,
            s.pushforward_l1,
        )
        if cfg["require_untangled"] and not report.untangled:
            raise TangledMesh(report.inverted_count, report.inverted_fraction)


def run(config: dict[str, Any]) -> RunSummary:
    return Run(config).execute()
