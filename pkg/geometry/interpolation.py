"""
Localisation de points dans la triangulation et interpolation barycentrique
(scalaires, vecteurs tangents, applications S² → S²).

Les coordonnées barycentriques sphériques sont les coordonnées planes de la
projection gnomonique du point dans le plan du triangle : λ ∝ [a b c]⁻¹ x.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike

from .exceptions import TriangleNotFound
from .grid import FloatArray, Grid, IntArray, MapField
from .sphere import project_to_sphere, tangent_project

logger = logging.getLogger(__name__)

INSIDE_TOL = 1e-10
NODE_SNAP = 1e-14
NEAR_NODES = 12
BRUTE_FORCE_CHUNK = 256


@dataclass(frozen=True)
class Barycentric:
    """Triangle contenant chaque point : sommets (n, 3) et poids (n, 3)."""

    vertices: IntArray
    weights: FloatArray

    def combine(self, nodal: FloatArray) -> FloatArray:
        """Σ λ_k · nodal[v_k] ; ``nodal`` de forme (N,) ou (N, d)."""
        vals = nodal[self.vertices]
        if vals.ndim == 2:
            return np.einsum("nk,nk->n", self.weights, vals)
        return np.einsum("nk,nkd->nd", self.weights, vals)


class TriangleLocator:
    """
    Localisation vectorisée : triangles incidents au noeud le plus proche,
    puis à ses voisins proches, puis recherche exhaustive.
    """

    def __init__(self, grid: Grid) -> None:
        self.grid = grid

    @cached_property
    def inverse_matrices(self) -> FloatArray:
        """[a b c]⁻¹ par triangle, sommets en colonnes."""
        verts = self.grid.points[self.grid.triangles]  # (T, 3 sommets, 3 coords)
        return np.linalg.inv(np.transpose(verts, (0, 2, 1)))

    def _lambdas(self, tri: IntArray, q: FloatArray) -> FloatArray:
        # tri (n, k) avec -1 en bourrage ; q (n, 3)
        lam = np.einsum("nkij,nj->nki", self.inverse_matrices[np.maximum(tri, 0)], q)
        lam[tri < 0] = -np.inf
        return lam

    def _best(self, tri: IntArray, q: FloatArray) -> tuple[IntArray, FloatArray, FloatArray]:
        lam = self._lambdas(tri, q)
        score = lam.min(axis=-1)
        k = np.argmax(score, axis=1)
        rows = np.arange(len(q))
        return tri[rows, k], lam[rows, k], score[rows, k]

    def _brute_force(self, q: FloatArray) -> tuple[IntArray, FloatArray, FloatArray]:
        n_tri = len(self.grid.triangles)
        best_tri = np.zeros(len(q), dtype=np.int64)
        best_lam = np.zeros((len(q), 3))
        best_score = np.full(len(q), -np.inf)
        for start in range(0, n_tri, BRUTE_FORCE_CHUNK):
            ids = np.arange(start, min(start + BRUTE_FORCE_CHUNK, n_tri))
            tri = np.broadcast_to(ids, (len(q), len(ids)))
            t, lam, score = self._best(tri, q)
            better = score > best_score
            best_tri[better], best_lam[better], best_score[better] = (
                t[better],
                lam[better],
                score[better],
            )
        return best_tri, best_lam, best_score

    def locate(self, x: ArrayLike) -> Barycentric:
        q = np.atleast_2d(np.asarray(x, dtype=float))
        grid = self.grid
        dist, nearest = grid.kdtree.query(q)

        tri, lam, score = self._best(grid.incident_triangles[nearest], q)

        todo = np.flatnonzero(score < -INSIDE_TOL)
        if todo.size:
            k = min(NEAR_NODES, grid.size)
            _, near = grid.kdtree.query(q[todo], k=k)
            cand = grid.incident_triangles[near].reshape(len(todo), -1)
            t2, l2, s2 = self._best(cand, q[todo])
            tri[todo], lam[todo], score[todo] = t2, l2, s2

        todo = np.flatnonzero(score < -INSIDE_TOL)
        if todo.size:
            logger.debug("Localisation exhaustive pour %d points", todo.size)
            t3, l3, s3 = self._brute_force(q[todo])
            tri[todo], lam[todo], score[todo] = t3, l3, s3

        if np.any(score < -INSIDE_TOL):
            raise TriangleNotFound(
                f"{int(np.sum(score < -INSIDE_TOL))} points hors de toute face"
            )

        weights = np.clip(lam, 0.0, None)
        weights /= weights.sum(axis=1, keepdims=True)
        vertices = grid.triangles[tri]

        # Exactitude aux noeuds.
        on_node = np.flatnonzero(dist <= NODE_SNAP)
        if on_node.size:
            vertices[on_node] = nearest[on_node, None]
            weights[on_node] = np.array([1.0, 0.0, 0.0])
        return Barycentric(vertices=vertices, weights=weights)


def locator_for(g: Grid) -> TriangleLocator:
    """Localisateur mis en cache sur la grille (immuable)."""
    cache = g.__dict__
    loc = cache.get("_locator")
    if loc is None:
        loc = cache["_locator"] = TriangleLocator(g)
    return loc


def _squeeze(x: ArrayLike, out: FloatArray) -> FloatArray:
    return out[0] if np.ndim(x) == 1 else out


def interp_scalar(g: Grid, values: ArrayLike, x: ArrayLike) -> FloatArray:
    """Valeur interpolée d'un champ nodal aux points ``x``."""
    bary = locator_for(g).locate(x)
    return _squeeze(x, bary.combine(np.asarray(values, dtype=float)))


def interp_vector(g: Grid, vectors: ArrayLike, x: ArrayLike) -> FloatArray:
    """Combinaison barycentrique ambiante puis projection sur T_x S²."""
    q = np.atleast_2d(np.asarray(x, dtype=float))
    bary = locator_for(g).locate(q)
    out = tangent_project(q, bary.combine(np.asarray(vectors, dtype=float)))
    return _squeeze(x, out)


def interp_map(g: Grid, mapf: MapField | ArrayLike, x: ArrayLike) -> FloatArray:
    """Combinaison barycentrique des images puis renormalisation sur S²."""
    images = mapf.images if isinstance(mapf, MapField) else np.asarray(mapf, float)
    bary = locator_for(g).locate(x)
    return _squeeze(x, project_to_sphere(bary.combine(images)))
