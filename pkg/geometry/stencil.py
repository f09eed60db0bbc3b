"""
Stencils larges pour les dérivées directionnelles sur la grille.

Pour chaque noeud x_i : voisinage de rayon √h en coordonnées normales
géodésiques, ensemble de directions V de résolution dθ, sélection d'un point
par quadrant du repère tourné (ν, ν⊥) et coefficients a, b tels que

    D_νν u(x_i) = Σ a_j (u(x_j) − u(x_i)),   D_ν u(x_i) = Σ b_j (u(x_j) − u(x_i)).

Les coefficients sont fixés par les conditions de moments (Taylor à l'ordre 2).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import EmptyNeighborhood, GeometryError, QuadrantEmpty, SingularMomentSystem
from .grid import FloatArray, Grid, IntArray
from .sphere import project_to_tangent
from .workers import chunked, map_chunks

logger = logging.getLogger(__name__)

SIN_TOL = 1e-12
NEGATIVE_TOL = 1e-12
SINGULAR_DET = 1e-12
RETRY_DEPTH = 3
CHUNK = 512

# Les lignes 0 et 1 de la table (j = 0) sont les directions (1,0) et (0,1).
COORD_ROWS = (0, 1)

_RHS = np.array([[0.0, 1.0], [0.0, 0.0], [2.0, 0.0], [0.0, 0.0]])

# Combinaisons de rangs (un par quadrant), triées par somme puis lexicographiquement.
_COMBOS = np.array(
    sorted(itertools.product(range(RETRY_DEPTH), repeat=4), key=lambda c: (sum(c), c))
)


@dataclass(frozen=True)
class DirectionSet:
    """Paires orthogonales {(cos jdθ, sin jdθ), (−sin jdθ, cos jdθ)}."""

    dtheta: float
    n_pairs: int

    @classmethod
    def for_spacing(cls, h: float) -> DirectionSet:
        n_pairs = int(np.floor(np.pi / (2.0 * np.sqrt(h))))
        if n_pairs < 1:
            raise GeometryError(f"h = {h:.4f} trop grand pour définir des directions")
        return cls(dtheta=np.pi / (2.0 * n_pairs), n_pairs=n_pairs)

    @property
    def vectors(self) -> FloatArray:
        """Table (2·n_pairs, 2) : ligne 2j = ν_j, ligne 2j+1 = ν_j⊥."""
        ang = np.arange(self.n_pairs) * self.dtheta
        nu = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        perp = np.stack([-np.sin(ang), np.cos(ang)], axis=1)
        return np.stack([nu, perp], axis=1).reshape(-1, 2)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(2 * j, 2 * j + 1) for j in range(self.n_pairs)]


@dataclass(frozen=True, eq=False)
class Stencil:
    """
    Table immuable des stencils : ``nbr``, ``a``, ``b`` de forme (N, K, 4)
    avec K = 2·n_pairs directions, quadrants Q1..Q4 sur le dernier axe.
    """

    directions: DirectionSet
    radius: float
    nbr: IntArray = field(repr=False)
    a: FloatArray = field(repr=False)
    b: FloatArray = field(repr=False)
    empty_quadrants: IntArray = field(repr=False)
    relaxed: NDArray[np.bool_] = field(repr=False)
    non_monotone: int = 0

    @property
    def size(self) -> int:
        return int(self.nbr.shape[0])

    def differences(self, u: ArrayLike) -> FloatArray:
        u = np.asarray(u, dtype=float)
        return u[self.nbr] - u[:, None, None]

    def second_derivatives(self, u: ArrayLike) -> FloatArray:
        """D_νν u pour toutes les directions : (N, K)."""
        return np.einsum("nkj,nkj->nk", self.a, self.differences(u))

    def first_derivatives(self, u: ArrayLike) -> FloatArray:
        """D_ν u pour toutes les directions : (N, K)."""
        return np.einsum("nkj,nkj->nk", self.b, self.differences(u))

    def row_sums(self) -> FloatArray:
        """Σ_j a_j par noeud et direction : (N, K)."""
        return self.a.sum(axis=-1)


def _chord(radius: float) -> float:
    return 2.0 * np.sin(0.5 * radius)


def neighborhoods(g: Grid, nodes: ArrayLike) -> tuple[IntArray, FloatArray]:
    """
    Voisinages de rayon √h pour un bloc de noeuds.

    Retourne les indices (n, C) complétés par -1, triés par indice, et les
    coordonnées tangentes (n, C, 2) (nulles sur le bourrage).
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    radius = float(np.sqrt(g.h))
    found = g.kdtree.query_ball_point(g.points[nodes], _chord(radius) * (1 + 1e-12))
    lists = [sorted(j for j in lst if j != i) for i, lst in zip(nodes, found, strict=True)]
    width = max((len(lst) for lst in lists), default=0)
    idx = np.full((len(nodes), max(width, 1)), -1, dtype=np.int64)
    for row, lst in enumerate(lists):
        idx[row, : len(lst)] = lst

    valid = idx >= 0
    centers = g.points[nodes][:, None, :]
    others = np.where(valid[..., None], g.points[np.maximum(idx, 0)], centers)
    z = project_to_tangent(
        centers, others, g.e1[nodes][:, None, :], g.e2[nodes][:, None, :]
    )
    z[~valid] = 0.0
    # Filtre exact sur la distance géodésique ‖z‖ ≤ √h.
    inside = valid & (np.linalg.norm(z, axis=-1) <= radius)
    idx[~inside] = -1
    z[~inside] = 0.0

    empty = np.flatnonzero(~inside.any(axis=1))
    if empty.size:
        raise EmptyNeighborhood(f"Aucun voisin dans la boule √h au noeud {int(nodes[empty[0]])}")
    return idx, z


def candidate_neighborhood(g: Grid, i: int) -> tuple[IntArray, FloatArray]:
    """Noeuds à distance ≤ √h de x_i (hors x_i) et leurs coordonnées Proj(x; x_i)."""
    idx, z = neighborhoods(g, [i])
    keep = idx[0] >= 0
    return idx[0][keep], z[0][keep]


def _rotate(z: FloatArray, vectors: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Coordonnées (p, q) dans les repères (ν, ν⊥) : (..., K, C)."""
    p = np.einsum("...cd,kd->...kc", z, vectors)
    perp = np.stack([-vectors[:, 1], vectors[:, 0]], axis=1)
    q = np.einsum("...cd,kd->...kc", z, perp)
    return p, q


def _rank_quadrants(
    p: FloatArray,
    q: FloatArray,
    r: FloatArray,
    valid: FloatArray,
    dtheta: float,
    r_min: float,
) -> tuple[IntArray, FloatArray]:
    """
    Classe les candidats admissibles de chaque quadrant par |sin θ| croissant.

    Retourne colonnes (..., K, RETRY_DEPTH, 4) et clés associées (inf si absent).
    Q1 : cos ≥ 0, sin ≥ 0 ; Q2 : cos < 0, sin ≥ 0 ; Q3 : cos < 0, sin < 0 ;
    Q4 : cos ≥ 0, sin < 0.
    """
    safe_r = np.where(r > 0.0, r, 1.0)[..., None, :]
    sin_abs = np.abs(q) / safe_r
    admissible = (
        (valid & (r >= r_min) & (r > 0.0))[..., None, :]
        & (sin_abs >= dtheta - SIN_TOL)
    )
    quadrant = np.where(
        q >= 0.0, np.where(p >= 0.0, 0, 1), np.where(p < 0.0, 2, 3)
    )
    key = np.where(
        admissible[..., None] & (quadrant[..., None] == np.arange(4)),
        sin_abs[..., None],
        np.inf,
    )  # (..., K, C, 4)
    depth = min(RETRY_DEPTH, key.shape[-2])
    order = np.argsort(key, axis=-2, kind="stable")[..., :depth, :]
    keys = np.take_along_axis(key, order, axis=-2)
    if depth < RETRY_DEPTH:
        pad = [(0, 0)] * (order.ndim - 2) + [(0, RETRY_DEPTH - depth), (0, 0)]
        order = np.pad(order, pad)
        keys = np.pad(keys, pad, constant_values=np.inf)
    return order, keys


def _solve_moments(p: FloatArray, q: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    Résout les deux systèmes de moments pour des quadruplets (..., 4).

    Retourne (a, b, ok) ; ``ok`` est faux pour un système singulier.
    """
    scale = np.maximum(np.max(np.hypot(p, q), axis=-1), 1e-300)[..., None]
    ps, qs = p / scale, q / scale
    mat = np.stack([ps, qs, ps * ps, ps * qs], axis=-2)
    ok = np.asarray(np.abs(np.linalg.det(mat)) > SINGULAR_DET)
    mat = np.where(ok[..., None, None], mat, np.eye(4))
    sol = np.linalg.solve(mat, np.broadcast_to(_RHS, mat.shape[:-2] + (4, 2)))
    a = sol[..., 0] / scale**2
    b = sol[..., 1] / scale
    return a, b, ok


def derivative_coeffs(z: ArrayLike, nu: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """
    Coefficients (a, b) pour quatre points z_j (4, 2) et une direction ν.

    a : Σa z = 0, Σa (z·ν)² = 2, Σa (z·ν)(z·ν⊥) = 0.
    b : Σb z = ν, Σb (z·ν)² = 0, Σb (z·ν)(z·ν⊥) = 0.
    """
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    p = z @ nu
    q = z @ np.array([-nu[1], nu[0]])
    a, b, ok = _solve_moments(p, q)
    if not ok:
        raise SingularMomentSystem("Points quasi alignés : système des moments singulier")
    return a, b


def select_quadrant_neighbors(
    z: ArrayLike, nu: ArrayLike, h: float, dtheta: float
) -> IntArray:
    """
    Indice (dans ``z``) du point retenu pour chaque quadrant Q1..Q4.

    argmin |sin θ| sous |sin θ| ≥ dθ et r ≥ √h − 2h ; égalité : plus petit indice.
    """
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1)
    p, q = _rotate(z, np.asarray(nu, dtype=float).reshape(1, 2))
    order, keys = _rank_quadrants(
        p, q, r, np.ones_like(r, dtype=bool), dtheta, np.sqrt(h) - 2.0 * h
    )
    missing = np.flatnonzero(~np.isfinite(keys[0, 0]))
    if missing.size:
        raise QuadrantEmpty(int(missing[0]) + 1)
    return order[0, 0]


def _radius_tiers(h: float) -> list[float]:
    primary = np.sqrt(h) - 2.0 * h
    return [primary, min(primary, 0.5 * np.sqrt(h)), 0.0]


@dataclass
class _Block:
    nbr: IntArray
    a: FloatArray
    b: FloatArray
    empty_quadrants: IntArray
    relaxed: NDArray[np.bool_]
    non_monotone: int


def _build_block(g: Grid, dirs: DirectionSet, nodes: range) -> _Block:
    node_ids = np.fromiter(nodes, dtype=np.int64)
    idx, z = neighborhoods(g, node_ids)
    valid = idx >= 0
    r = np.linalg.norm(z, axis=-1)
    vectors = dirs.vectors
    p, q = _rotate(z, vectors)  # (n, K, C)

    tiers = _radius_tiers(g.h)
    order, keys = _rank_quadrants(p, q, r, valid, dirs.dtheta, tiers[0])
    missing = ~np.isfinite(keys[..., 0, :])  # (n, K, 4)
    empty_quadrants = missing.sum(axis=(1, 2))
    relaxed = np.zeros(len(node_ids), dtype=bool)
    for r_min in tiers[1:]:
        todo = missing.any(axis=-1)
        if not todo.any():
            break
        o2, k2 = _rank_quadrants(p, q, r, valid, dirs.dtheta, r_min)
        order[todo], keys[todo] = o2[todo], k2[todo]
        relaxed |= todo.any(axis=1)
        missing = ~np.isfinite(keys[..., 0, :])
    if missing.any():
        row, _, quad = np.argwhere(missing)[0]
        raise QuadrantEmpty(int(quad) + 1, node=int(node_ids[row]))

    cols = order[..., 0, :]  # (n, K, 4)
    p_sel = np.take_along_axis(p, cols, axis=-1)
    q_sel = np.take_along_axis(q, cols, axis=-1)
    a, b, ok = _solve_moments(p_sel, q_sel)

    bad = ~ok | (a.min(axis=-1) < -NEGATIVE_TOL)
    non_monotone = 0
    if bad.any():
        rows, ks = np.nonzero(bad)
        ranks = order[rows, ks]  # (E, RETRY_DEPTH, 4)
        rkeys = keys[rows, ks]
        quad = np.arange(4)
        combo_cols = ranks[:, _COMBOS, quad]  # (E, n_combos, 4)
        combo_ok = np.isfinite(rkeys[:, _COMBOS, quad]).all(axis=-1)
        pc = np.take_along_axis(p[rows, ks][:, None, :], combo_cols, axis=-1)
        qc = np.take_along_axis(q[rows, ks][:, None, :], combo_cols, axis=-1)
        ac, bc, okc = _solve_moments(pc, qc)
        good = combo_ok & okc & (ac.min(axis=-1) >= -NEGATIVE_TOL)
        has_good = good.any(axis=1)
        first = np.argmax(good, axis=1)
        e = np.flatnonzero(has_good)
        cols[rows[e], ks[e]] = combo_cols[e, first[e]]
        a[rows[e], ks[e]] = ac[e, first[e]]
        b[rows[e], ks[e]] = bc[e, first[e]]

        still = ~has_good
        if np.any(still & ~ok[rows, ks]):
            j = np.flatnonzero(still & ~ok[rows, ks])[0]
            raise SingularMomentSystem(
                f"Système singulier au noeud {int(node_ids[rows[j]])}, direction {int(ks[j])}"
            )
        non_monotone = int(np.sum(still))

    nbr = np.take_along_axis(idx[:, None, :], cols, axis=-1)
    return _Block(nbr, a, b, empty_quadrants, relaxed, non_monotone)


def build_stencil(g: Grid) -> Stencil:
    """Construit la table des stencils, en parallèle par blocs de noeuds."""
    dirs = DirectionSet.for_spacing(g.h)
    blocks = map_chunks(lambda nodes: _build_block(g, dirs, nodes), chunked(g.size, CHUNK))
    stencil = Stencil(
        directions=dirs,
        radius=float(np.sqrt(g.h)),
        nbr=np.concatenate([blk.nbr for blk in blocks]),
        a=np.concatenate([blk.a for blk in blocks]),
        b=np.concatenate([blk.b for blk in blocks]),
        empty_quadrants=np.concatenate([blk.empty_quadrants for blk in blocks]),
        relaxed=np.concatenate([blk.relaxed for blk in blocks]),
        non_monotone=sum(blk.non_monotone for blk in blocks),
    )
    logger.info(
        "Stencil : %d noeuds, %d directions (dθ=%.4f), %d noeuds relâchés",
        stencil.size,
        2 * dirs.n_pairs,
        dirs.dtheta,
        int(stencil.relaxed.sum()),
    )
    if stencil.non_monotone:
        logger.warning(
            "%d couples (noeud, direction) sans coefficients a ≥ 0", stencil.non_monotone
        )
    return stencil
