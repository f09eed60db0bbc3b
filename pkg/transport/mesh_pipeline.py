"""
Déplacement d'un maillage par une application, diagnostics d'enchevêtrement
et densité poussée en avant (jacobien discret par rapport d'aires).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from geometry.grid import (
    FloatArray,
    Grid,
    IntArray,
    MapField,
    ScalarField,
    lump_to_nodes,
    orientation_det,
    signed_triangle_area,
    triangle_areas,
)
from geometry.interpolation import interp_scalar

from .exceptions import UnreliableJacobian

logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-14
WORST_COUNT = 10


@dataclass(frozen=True, eq=False)
class MovedMesh:
    """Maillage source dont le noeud i est envoyé sur ``images.images[i]``."""

    source: Grid
    images: MapField

    @property
    def points(self) -> FloatArray:
        return self.images.images

    @property
    def triangles(self) -> IntArray:
        return self.source.triangles

    @cached_property
    def signed_areas(self) -> FloatArray:
        a, b, c = (self.points[self.triangles[:, k]] for k in range(3))
        return signed_triangle_area(a, b, c)

    @cached_property
    def node_areas(self) -> FloatArray:
        """Aire des triangles déplacés incidents à chaque noeud."""
        areas = triangle_areas(self.points, self.triangles)
        return lump_to_nodes(self.source.size, self.triangles, areas)

    @property
    def node_weights(self) -> FloatArray:
        return self.node_areas / 3.0


def apply_map(g: Grid, m: MapField) -> MovedMesh:
    if m.images.shape != g.points.shape:
        raise ValueError("Application définie sur une autre grille")
    return MovedMesh(source=g, images=m)


@dataclass(frozen=True)
class TanglingReport:
    inverted_count: int
    inverted_fraction: float
    min_area_ratio: float
    worst_triangles: list[int] = field(default_factory=list)
    degenerate_count: int = 0
    triangle_count: int = 0

    FIELDS = (
        "inverted_count",
        "inverted_fraction",
        "min_area_ratio",
        "degenerate_count",
        "triangle_count",
        "worst_triangles",
    )

    @property
    def untangled(self) -> bool:
        return self.inverted_count == 0

    def _value(self, name: str) -> str:
        value = getattr(self, name)
        if name == "worst_triangles":
            return " ".join(str(t) for t in value)
        if isinstance(value, float):
            return f"{value:.10g}"
        return str(value)

    def as_text(self) -> str:
        """Bloc ``clé=valeur``, une ligne par champ."""
        return "".join(f"{name}={self._value(name)}\n" for name in self.FIELDS)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.FIELDS)

    def as_csv_row(self) -> str:
        return ",".join(self._value(name) for name in self.FIELDS)


def tangling_report(src: Grid, moved: MovedMesh) -> TanglingReport:
    """
    Triangle retourné si le signe de det[p_a, p_b, p_c] change entre les deux
    maillages ; les triangles dégénérés (aire < 1e-14) comptent comme retournés.
    """
    if moved.source is not src and not np.array_equal(moved.triangles, src.triangles):
        raise ValueError("Connectivités différentes")
    before = np.sign(orientation_det(src.points, src.triangles))
    after = np.sign(orientation_det(moved.points, src.triangles))
    signed = moved.signed_areas
    degenerate = np.abs(signed) < DEGENERATE_AREA
    inverted = (before != after) | degenerate

    ratio = signed / src.triangle_areas
    worst = np.argsort(ratio, kind="stable")[:WORST_COUNT]
    count = int(np.count_nonzero(inverted))
    total = len(src.triangles)
    report = TanglingReport(
        inverted_count=count,
        inverted_fraction=count / total,
        min_area_ratio=float(ratio.min()),
        worst_triangles=[int(t) for t in worst],
        degenerate_count=int(np.count_nonzero(degenerate)),
        triangle_count=total,
    )
    if count:
        logger.warning("%d triangles retournés sur %d (%.4f)", count, total, count / total)
    else:
        logger.info("Aucun triangle retourné ; rapport d'aires min %.4f", report.min_area_ratio)
    return report


@dataclass(frozen=True, eq=False)
class PushforwardDensity:
    """Densité ρ0/J portée par les noeuds déplacés."""

    moved: MovedMesh
    values: FloatArray
    jacobian: FloatArray

    def integrate(self) -> float:
        return float(np.dot(self.moved.node_weights, self.values))


def pushforward_density(
    src: Grid,
    moved: MovedMesh,
    rho0: ScalarField,
    report: TanglingReport | None = None,
) -> PushforwardDensity:
    """J(i) = aire déplacée incidente / aire source incidente ; densité ρ0(i)/J(i)."""
    report = report or tangling_report(src, moved)
    if report.inverted_count:
        raise UnreliableJacobian(report.inverted_count)
    source_area = lump_to_nodes(src.size, src.triangles, src.triangle_areas)
    jacobian = moved.node_areas / source_area
    return PushforwardDensity(moved=moved, values=rho0.values / jacobian, jacobian=jacobian)


def relative_l1(push: PushforwardDensity, target: ScalarField) -> float:
    """∫|ρ_push − ρ1| / ∫ρ1 sur le maillage déplacé, ρ1 interpolée aux noeuds déplacés."""
    sampled = interp_scalar(target.grid, target.values, push.moved.points)
    w = push.moved.node_weights
    return float(np.dot(w, np.abs(push.values - sampled)) / np.dot(w, np.abs(sampled)))
