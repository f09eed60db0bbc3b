"""
Grilles sphériques : génération (cube projeté), triangulation, paramètre h,
poids de quadrature et champs nodaux.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .exceptions import DegenerateConfiguration, GeometryError
from .sphere import (
    FloatArray,
    as_sphere_points,
    dot,
    geodesic_distance,
    norm,
    tangent_frame,
)

logger = logging.getLogger(__name__)

IntArray = NDArray[np.int64]

WEIGHT_SUM_TOL = 1e-6


def orientation_det(points: FloatArray, triangles: IntArray) -> FloatArray:
    """det[p_a, p_b, p_c] pour chaque triangle."""
    a, b, c = (points[triangles[:, k]] for k in range(3))
    return dot(a, np.cross(b, c))


def orient_triangles(points: FloatArray, triangles: IntArray) -> IntArray:
    """Retourne les triangles réordonnés pour que det[p_a, p_b, p_c] > 0."""
    tris = np.array(triangles, dtype=np.int64, copy=True)
    flip = orientation_det(points, tris) < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def triangulate(points: ArrayLike) -> IntArray:
    """
    Triangulation de Delaunay sphérique via l'enveloppe convexe des points.

    Les faces sont orientées vers l'extérieur (det > 0).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise DegenerateConfiguration("Au moins 4 points non coplanaires requis")
    try:
        hull = ConvexHull(pts)
    except QhullError as e:
        raise DegenerateConfiguration(f"Enveloppe convexe impossible : {e}") from e
    tris = orient_triangles(pts, hull.simplices.astype(np.int64))
    logger.debug("Triangulation : %d points, %d triangles", len(pts), len(tris))
    return tris


def spherical_triangle_area(
    a: FloatArray, b: FloatArray, c: FloatArray
) -> FloatArray:
    """Aire sphérique (excès) par la formule de L'Huilier."""
    la = geodesic_distance(b, c)
    lb = geodesic_distance(c, a)
    lc = geodesic_distance(a, b)
    s = 0.5 * (la + lb + lc)
    prod = (
        np.tan(0.5 * s)
        * np.tan(0.5 * (s - la))
        * np.tan(0.5 * (s - lb))
        * np.tan(0.5 * (s - lc))
    )
    return 4.0 * np.arctan(np.sqrt(np.clip(prod, 0.0, None)))


def signed_triangle_area(a: FloatArray, b: FloatArray, c: FloatArray) -> FloatArray:
    """Aire sphérique signée : négative pour un triangle retourné."""
    det = dot(a, np.cross(b, c))
    den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a)
    return 2.0 * np.arctan2(det, den)


def triangle_areas(points: FloatArray, triangles: IntArray) -> FloatArray:
    a, b, c = (points[triangles[:, k]] for k in range(3))
    return spherical_triangle_area(a, b, c)


def lump_to_nodes(n_points: int, triangles: IntArray, values: FloatArray) -> FloatArray:
    """Somme des valeurs par triangle sur les noeuds incidents."""
    out = np.zeros(n_points)
    for k in range(3):
        np.add.at(out, triangles[:, k], values)
    return out


def quadrature_weights(points: FloatArray, triangles: IntArray) -> FloatArray:
    """Poids nodal = un tiers de l'aire des triangles incidents."""
    return lump_to_nodes(len(points), triangles, triangle_areas(points, triangles)) / 3.0


def circumradii(points: FloatArray, triangles: IntArray) -> FloatArray:
    a, b, c = (points[triangles[:, k]] for k in range(3))
    center = np.cross(b - a, c - a)
    center /= norm(center)[:, None]
    return geodesic_distance(center, a)


def compute_h(points: FloatArray, triangles: IntArray) -> float:
    """h ≈ sup_x min_y d(x, y) : plus grand rayon circonscrit sphérique."""
    return float(np.max(circumradii(points, triangles)))


def _cube_face_points(m: int) -> FloatArray:
    t = np.linspace(-1.0, 1.0, m + 1)
    u, v = np.meshgrid(t, t, indexing="ij")
    one = np.ones_like(u)
    faces = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            comps = [u, v]
            comps.insert(axis, sign * one)
            faces.append(np.stack(comps, axis=-1))
    return np.stack(faces)  # (6, m+1, m+1, 3)


def gen_cube_sphere(m: int) -> Grid:
    """
    Cube subdivisé m×m par face, projeté radialement sur S².

    N = 6m² + 2 points ; chaque quadrilatère projeté est coupé en deux.
    """
    if m < 2:
        raise GeometryError(f"m = {m} : il faut m ≥ 2")
    cube = _cube_face_points(m)
    flat = cube.reshape(-1, 3)
    # Les coordonnées du cube sont exactes : les doublons d'arête coïncident.
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    idx = inverse.reshape(6, m + 1, m + 1)

    i00 = idx[:, :-1, :-1].ravel()
    i10 = idx[:, 1:, :-1].ravel()
    i11 = idx[:, 1:, 1:].ravel()
    i01 = idx[:, :-1, 1:].ravel()
    tris = np.concatenate(
        [np.stack([i00, i10, i11], axis=1), np.stack([i00, i11, i01], axis=1)]
    ).astype(np.int64)

    points = uniq / norm(uniq)[:, None]
    grid = Grid.from_points(points, orient_triangles(points, tris))
    logger.info("Grille cube-sphère m=%d : N=%d, h=%.6f", m, grid.size, grid.h)
    return grid


def fibonacci_points(n: int) -> FloatArray:
    """Spirale de Fibonacci : n points quasi uniformes, déterministes."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def gen_fibonacci_sphere(n: int) -> Grid:
    if n < 4:
        raise GeometryError(f"N = {n} : il faut au moins 4 points")
    grid = Grid.from_points(fibonacci_points(n))
    logger.info("Grille de Fibonacci : N=%d, h=%.6f", grid.size, grid.h)
    return grid


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Grille sphérique immuable.

    ``points`` (N, 3), ``triangles`` (T, 3) orientés positivement, ``h``,
    repères tangents ``e1``/``e2`` (N, 3) et poids de quadrature (N,).
    """

    points: FloatArray
    triangles: IntArray
    h: float
    e1: FloatArray = field(repr=False)
    e2: FloatArray = field(repr=False)
    weights: FloatArray = field(repr=False)

    @classmethod
    def from_points(cls, points: ArrayLike, triangles: ArrayLike | None = None) -> Grid:
        pts = as_sphere_points(np.asarray(points, dtype=float).reshape(-1, 3))
        if triangles is None:
            tris = triangulate(pts)
        else:
            tris = orient_triangles(pts, np.asarray(triangles, dtype=np.int64))
        e1, e2 = tangent_frame(pts)
        grid = cls(
            points=pts,
            triangles=tris,
            h=compute_h(pts, tris),
            e1=e1,
            e2=e2,
            weights=quadrature_weights(pts, tris),
        )
        grid.check()
        return grid

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def voronoi_weights(self) -> FloatArray:
        return self.weights

    def check(self) -> None:
        """Vérifie les invariants : Euler, orientation, poids, voisinage 2h."""
        n, t = self.size, len(self.triangles)
        edges = np.sort(
            np.concatenate(
                [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
            ),
            axis=1,
        )
        n_edges = len(np.unique(edges, axis=0))
        if n - n_edges + t != 2:
            raise DegenerateConfiguration(
                f"Formule d'Euler violée : V - E + F = {n - n_edges + t}"
            )
        if np.any(orientation_det(self.points, self.triangles) <= 0.0):
            raise DegenerateConfiguration("Triangle d'orientation non positive")
        total = float(np.sum(self.weights))
        if abs(total - 4.0 * np.pi) > WEIGHT_SUM_TOL:
            raise DegenerateConfiguration(f"Somme des poids {total:.9f} ≠ 4π")
        dist, _ = self.kdtree.query(self.points, k=2)
        nearest = 2.0 * np.arcsin(np.clip(dist[:, 1] / 2.0, 0.0, 1.0))
        if not (self.h > 0.0 and np.all(nearest <= 2.0 * self.h)):
            raise DegenerateConfiguration("Noeud isolé : aucun voisin à distance 2h")

    @cached_property
    def kdtree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def incident_triangles(self) -> IntArray:
        """Table (N, deg_max) des triangles incidents, complétée par -1."""
        owners = self.triangles.ravel()
        tri_ids = np.repeat(np.arange(len(self.triangles)), 3)
        order = np.argsort(owners, kind="stable")
        owners, tri_ids = owners[order], tri_ids[order]
        counts = np.bincount(owners, minlength=self.size)
        table = np.full((self.size, int(counts.max())), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(len(owners)) - starts[owners]
        table[owners, slot] = tri_ids
        return table

    @cached_property
    def triangle_areas(self) -> FloatArray:
        return triangle_areas(self.points, self.triangles)

    def integrate(self, values: ArrayLike) -> float:
        """Σ wᵢ fᵢ."""
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    def mean(self, values: ArrayLike) -> float:
        return self.integrate(values) / (4.0 * np.pi)


def integrate(g: Grid, values: ArrayLike) -> float:
    return g.integrate(values)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: FloatArray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise GeometryError(
                f"Champ de taille {vals.shape} pour une grille de {self.grid.size} noeuds"
            )
        object.__setattr__(self, "values", vals)

    def integrate(self) -> float:
        return self.grid.integrate(self.values)


@dataclass(frozen=True, eq=False)
class MapField:
    """Images T(x_i) (ou S(x_i)) des noeuds de la grille."""

    grid: Grid
    images: FloatArray

    def __post_init__(self) -> None:
        imgs = as_sphere_points(np.asarray(self.images, dtype=float), tol=1e-10)
        if imgs.shape != self.grid.points.shape:
            raise GeometryError("Nombre d'images différent du nombre de noeuds")
        object.__setattr__(self, "images", imgs)

    @classmethod
    def identity(cls, grid: Grid) -> MapField:
        return cls(grid=grid, images=grid.points.copy())

    def displacement(self) -> FloatArray:
        """Distance géodésique d(x_i, image_i) par noeud."""
        return geodesic_distance(self.grid.points, self.images)
